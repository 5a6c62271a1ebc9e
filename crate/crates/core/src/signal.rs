//! Complex baseband semantics: packing between real network outputs and
//! complex channel uses, per-message energy normalization, SNR conversion,
//! and reproducible random streams.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::ndcore::RealTensor;

/// Name of the generator construction, recorded in run metadata.
pub const RNG_ALGORITHM: &str = "chacha8 (seed_from_u64), child streams via splitmix64(seed ^ splitmix64(label))";

/// Rows below this squared norm cannot be normalized.
pub const MIN_ROW_ENERGY: f64 = 1e-20;

/// A batch of messages, each encoded as `n` complex channel uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolBlock {
    batch: usize,
    n: usize,
    data: Vec<Complex64>,
}

impl SymbolBlock {
    pub fn new(batch: usize, n: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != batch * n {
            return Err(dim_err("SymbolBlock::new", batch * n, data.len()));
        }
        Ok(Self { batch, n, data })
    }

    pub fn zeros(batch: usize, n: usize) -> Self {
        Self {
            batch,
            n,
            data: vec![Complex64::new(0.0, 0.0); batch * n],
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Channel uses per message.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    /// `‖row i‖²`.
    pub fn row_energy(&self, i: usize) -> f64 {
        self.row(i).iter().map(Complex64::norm_sqr).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.batch == other.batch && self.n == other.n
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Consecutive real pairs `(r[2k], r[2k+1])` become `r[2k] + i·r[2k+1]`.
pub fn real_to_complex(r: &RealTensor) -> Result<SymbolBlock> {
    let (batch, width) = r.dims2("real_to_complex")?;
    if width % 2 != 0 {
        return Err(dim_err("real_to_complex", "even inner dimension", width));
    }
    let data = r
        .data()
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect();
    SymbolBlock::new(batch, width / 2, data)
}

/// Inverse of [`real_to_complex`].
pub fn complex_to_real(s: &SymbolBlock) -> RealTensor {
    let data = s.data.iter().flat_map(|c| [c.re, c.im]).collect();
    RealTensor::new(vec![s.batch, 2 * s.n], data).expect("2n reals per row")
}

/// Per-row scale factors retained for the backward pass of [`normalize_energy`].
#[derive(Debug, Clone)]
pub struct NormCache {
    input: RealTensor,
    norms: Vec<f64>,
}

/// Scales every message so that `‖x‖² = N`, i.e. unit average energy per
/// channel use.
pub fn normalize_energy(s: &SymbolBlock) -> Result<(SymbolBlock, NormCache)> {
    let target = (s.n as f64).sqrt();
    let mut out = s.clone();
    let mut norms = Vec::with_capacity(s.batch);
    for i in 0..s.batch {
        let energy = s.row_energy(i);
        if !energy.is_finite() {
            return Err(Error::NonFinite("normalize_energy"));
        }
        if energy <= MIN_ROW_ENERGY {
            return Err(Error::Degenerate("normalize_energy: zero-energy message"));
        }
        let norm = energy.sqrt();
        let factor = target / norm;
        out.row_mut(i).iter_mut().for_each(|c| *c *= factor);
        norms.push(norm);
    }
    Ok((
        out,
        NormCache {
            input: complex_to_real(s),
            norms,
        },
    ))
}

/// Jacobian-transpose of [`normalize_energy`] in the stacked real layout:
/// `d_in = (√N/‖x‖)(u − x̂ (x̂·u))` with `x̂ = x/‖x‖`.
pub fn normalize_energy_backward(cache: &NormCache, upstream: &RealTensor) -> Result<RealTensor> {
    if !upstream.same_shape(&cache.input) {
        return Err(dim_err(
            "normalize_energy_backward",
            format!("{:?}", cache.input.shape()),
            format!("{:?}", upstream.shape()),
        ));
    }
    let width = cache.input.shape()[1];
    let target = ((width / 2) as f64).sqrt();
    let mut d = RealTensor::zeros(cache.input.shape());
    for (i, &norm) in cache.norms.iter().enumerate() {
        let x = cache.input.row(i);
        let u = upstream.row(i);
        let proj: f64 = x.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / (norm * norm);
        let scale = target / norm;
        d.row_mut(i)
            .iter_mut()
            .zip(x.iter().zip(u))
            .for_each(|(o, (xk, uk))| *o = scale * (uk - xk * proj));
    }
    Ok(d)
}

/// Noise variance for a given SNR when the average symbol energy is 1:
/// `σ² = 10^(−snr_db/10)`.
pub fn snr_db_to_noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Deterministic, splittable pseudorandom stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

/// Serializable position of an [`RngStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSnapshot {
    pub seed: u64,
    pub word_pos: u128,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An independent child stream; depends only on this stream's seed and
    /// `label`, not on how much of this stream has been consumed.
    pub fn derive(&self, label: u64) -> Self {
        Self::new(splitmix64(self.seed ^ splitmix64(label)))
    }

    pub fn snapshot(&self) -> RngSnapshot {
        RngSnapshot {
            seed: self.seed,
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn restore(snapshot: RngSnapshot) -> Self {
        let mut s = Self::new(snapshot.seed);
        s.rng.set_word_pos(snapshot.word_pos);
        s
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `[0, bound)`, identical on 32- and 64-bit targets.
    pub fn index(&mut self, bound: usize) -> usize {
        self.rng.random_range(0..bound as u64) as usize
    }

    pub(crate) fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// `count` i.i.d. draws of CN(0, variance): real and imaginary parts are
/// each N(0, variance/2).
pub fn sample_cgaussian(count: usize, variance: f64, rng: &mut RngStream) -> Result<Vec<Complex64>> {
    if variance < 0.0 || !variance.is_finite() {
        return Err(Error::InvalidArgument(format!("variance must be finite and >= 0, got {variance}")));
    }
    let sd = (variance / 2.0).sqrt();
    Ok((0..count)
        .map(|_| {
            let re = rng.standard_normal();
            let im = rng.standard_normal();
            Complex64::new(sd * re, sd * im)
        })
        .collect())
}
