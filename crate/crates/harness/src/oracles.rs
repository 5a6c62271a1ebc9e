//! Oracle suites behind `e2ecomm selftest`: every analytic gradient against
//! central finite differences, the score-function estimator against a
//! quadrature of the smoothed objective, and the energy invariants.

use std::f64::consts::PI;

use anyhow::Result;
use num_complex::Complex64;

use e2ecomm_core::channels::{Awgn, DifferentiableAwgn, DifferentiableChannel, DifferentiableRayleigh};
use e2ecomm_core::ndcore::{
    compare_gradients, dense_backward, dense_forward, embedding_backward, embedding_forward, finite_diff_grad,
    finite_diff_vec, Activation, GradTolerance, ParamSet, RealTensor,
};
use e2ecomm_core::policy::{
    estimate_tx_gradient, log_policy_density, log_policy_grad_wrt_mean, policy_sample, PolicyConfig, PolicySample,
};
use e2ecomm_core::signal::{
    complex_to_real, normalize_energy, normalize_energy_backward, real_to_complex, RngStream, SymbolBlock,
};
use e2ecomm_core::training::{joint_gradients, train_receiver_step, SystemState, TrainingRngs};
use e2ecomm_core::transceiver::{ce_per_example, MessageId, RxModel, RxVariant, TxModel};

/// Finite-difference step for every gradient check.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Worst-case agreement of one gradient family over many instances.
#[derive(Debug, Clone, Default)]
struct Tally {
    instances: usize,
    coordinates: usize,
    max_rel_error: f64,
    max_abs_diff: f64,
    below_floor: usize,
    /// Max relative error over coordinates with `|g| >= 1e-3`, where the
    /// rounding floor plays no role.
    max_rel_large: f64,
    failures: usize,
}

impl Tally {
    fn add(&mut self, analytic: &[f64], numeric: &[f64], f_value: f64) {
        let r = compare_gradients(analytic, numeric, GradTolerance::with_rounding_floor(f_value, FD_STEP));
        self.coordinates += r.coordinates;
        self.max_rel_error = self.max_rel_error.max(r.max_rel_error);
        self.max_abs_diff = self.max_abs_diff.max(r.max_abs_diff);
        self.below_floor += r.below_floor;
        for (a, n) in analytic.iter().zip(numeric) {
            if a.abs() >= 1e-3 {
                self.max_rel_large = self.max_rel_large.max((a - n).abs() / a.abs().max(n.abs()));
            }
        }
        self.failures += r.failures.len();
    }

    fn outcome(self, name: &str) -> OracleOutcome {
        OracleOutcome {
            name: format!("gradient {name}"),
            passed: self.failures == 0 && self.instances > 0,
            detail: format!(
                "{} instances, {} coordinates, max rel err {:.1e} where |g| >= 1e-3, max |Δ| {:.1e}, max rel err {:.1e} on the {} coordinates above the rounding floor, {} failures",
                self.instances,
                self.coordinates,
                self.max_rel_large,
                self.max_abs_diff,
                self.max_rel_error,
                self.coordinates - self.below_floor,
                self.failures
            ),
        }
    }
}

fn tensor(rng: &mut RngStream, shape: &[usize]) -> RealTensor {
    let len = shape.iter().product();
    RealTensor::new(shape.to_vec(), (0..len).map(|_| rng.standard_normal()).collect()).unwrap()
}

fn block(rng: &mut RngStream, batch: usize, n: usize) -> SymbolBlock {
    let data = (0..batch * n)
        .map(|_| Complex64::new(rng.standard_normal(), rng.standard_normal()))
        .collect();
    SymbolBlock::new(batch, n, data).unwrap()
}

/// Replaces every parameter, biases included, by a `N(0, 0.5²)` draw, so
/// instances are not tied to the initializer's zero biases.
fn randomize(params: &mut ParamSet, rng: &mut RngStream) {
    let fresh: Vec<f64> = (0..params.numel()).map(|_| 0.5 * rng.standard_normal()).collect();
    params.assign_flat(&fresh).expect("length matches");
}

fn messages(rng: &mut RngStream, count: usize, m: usize) -> Vec<MessageId> {
    (0..count).map(|_| rng.index(m)).collect()
}

fn dot(a: &RealTensor, b: &RealTensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn dim(rng: &mut RngStream, lo: usize, hi: usize) -> usize {
    lo + rng.index(hi - lo + 1)
}

fn dense_family(act: Activation, instances: usize, rng: &mut RngStream) -> Result<Tally> {
    let mut t = Tally::default();
    for _ in 0..instances {
        let (out, inp, batch) = (dim(rng, 1, 6), dim(rng, 1, 6), dim(rng, 1, 5));
        let mut p = ParamSet::new();
        p.insert("w", tensor(rng, &[out, inp]));
        p.insert("b", tensor(rng, &[out]));
        p.insert("x", tensor(rng, &[batch, inp]));
        let up = tensor(rng, &[batch, out]);
        let f = |p: &ParamSet| -> e2ecomm_core::Result<f64> {
            Ok(dot(&dense_forward(p.get("w")?, p.get("b")?, p.get("x")?, act)?.0, &up))
        };
        let (_, cache) = dense_forward(p.get("w")?, p.get("b")?, p.get("x")?, act)?;
        let g = dense_backward(&cache, &up)?;
        let mut analytic = ParamSet::new();
        analytic.insert("w", g.weight);
        analytic.insert("b", g.bias);
        analytic.insert("x", g.input);
        let numeric = finite_diff_grad(f, &p, FD_STEP)?;
        t.add(&analytic.flatten(), &numeric.flatten(), f(&p)?);
        t.instances += 1;
    }
    Ok(t)
}

fn embedding_family(instances: usize, rng: &mut RngStream) -> Result<Tally> {
    let mut t = Tally::default();
    for _ in 0..instances {
        let (out, m, batch) = (dim(rng, 1, 6), dim(rng, 2, 8), dim(rng, 1, 6));
        let ids = messages(rng, batch, m);
        let mut p = ParamSet::new();
        p.insert("w", tensor(rng, &[out, m]));
        p.insert("b", tensor(rng, &[out]));
        let up = tensor(rng, &[batch, out]);
        let f = |p: &ParamSet| -> e2ecomm_core::Result<f64> {
            Ok(dot(&embedding_forward(p.get("w")?, p.get("b")?, &ids, Activation::Elu)?.0, &up))
        };
        let (_, cache) = embedding_forward(p.get("w")?, p.get("b")?, &ids, Activation::Elu)?;
        let (dw, db) = embedding_backward(&cache, &up)?;
        let mut analytic = ParamSet::new();
        analytic.insert("w", dw);
        analytic.insert("b", db);
        let numeric = finite_diff_grad(f, &p, FD_STEP)?;
        t.add(&analytic.flatten(), &numeric.flatten(), f(&p)?);
        t.instances += 1;
    }
    Ok(t)
}

fn normalization_family(instances: usize, rng: &mut RngStream) -> Result<Tally> {
    let mut t = Tally::default();
    for _ in 0..instances {
        let (batch, n) = (dim(rng, 1, 5), dim(rng, 1, 4));
        let s = complex_to_real(&block(rng, batch, n));
        let up = tensor(rng, &[batch, 2 * n]);
        let f = |v: &[f64]| -> e2ecomm_core::Result<f64> {
            let x = real_to_complex(&RealTensor::new(s.shape().to_vec(), v.to_vec())?)?;
            Ok(dot(&complex_to_real(&normalize_energy(&x)?.0), &up))
        };
        let (_, cache) = normalize_energy(&real_to_complex(&s)?)?;
        let analytic = normalize_energy_backward(&cache, &up)?;
        let numeric = finite_diff_vec(f, s.data(), FD_STEP)?;
        t.add(analytic.data(), &numeric, f(s.data())?);
        t.instances += 1;
    }
    Ok(t)
}

fn tx_family(instances: usize, rng: &mut RngStream) -> Result<Tally> {
    let mut t = Tally::default();
    for _ in 0..instances {
        let (m, n, batch) = (dim(rng, 2, 8), dim(rng, 1, 3), dim(rng, 1, 6));
        let mut tx = TxModel::new(m, n, rng)?;
        randomize(tx.params_mut(), rng);
        let msgs = messages(rng, batch, m);
        let up = tensor(rng, &[batch, 2 * n]);
        let f = |p: &ParamSet| -> e2ecomm_core::Result<f64> {
            Ok(dot(&complex_to_real(&TxModel::from_params(m, n, p.clone())?.forward(&msgs)?.0), &up))
        };
        let (_, cache) = tx.forward(&msgs)?;
        let analytic = tx.backward(&cache, &up)?;
        let numeric = finite_diff_grad(f, tx.params(), FD_STEP)?;
        t.add(&analytic.flatten(), &numeric.flatten(), f(tx.params())?);
        t.instances += 1;
    }
    Ok(t)
}

fn mean_ce(rx: &RxModel, y: &SymbolBlock, msgs: &[MessageId]) -> e2ecomm_core::Result<f64> {
    Ok(ce_per_example(&rx.forward(y)?.0, msgs)?.mean())
}

fn rx_family(variant_of: impl Fn(&mut RngStream) -> RxVariant, instances: usize, rng: &mut RngStream) -> Result<Tally> {
    let mut t = Tally::default();
    for _ in 0..instances {
        let (m, n, batch) = (dim(rng, 2, 8), dim(rng, 1, 3), dim(rng, 1, 6));
        let variant = variant_of(rng);
        let mut rx = RxModel::new(m, n, variant, rng)?;
        randomize(rx.params_mut(), rng);
        let y = block(rng, batch, n);
        let msgs = messages(rng, batch, m);

        let (probs, cache) = rx.forward(&y)?;
        let mut d_logits = e2ecomm_core::ndcore::softmax_ce_backward(probs.tensor(), &msgs)?;
        d_logits.scale(1.0 / batch as f64);
        let (analytic, d_y) = rx.backward(&cache, &d_logits)?;
        let f0 = mean_ce(&rx, &y, &msgs)?;

        let numeric = finite_diff_grad(
            |p| mean_ce(&RxModel::from_params(m, n, variant, p.clone())?, &y, &msgs),
            rx.params(),
            FD_STEP,
        )?;
        t.add(&analytic.flatten(), &numeric.flatten(), f0);

        let y_flat = complex_to_real(&y);
        let numeric_y = finite_diff_vec(
            |v| mean_ce(&rx, &real_to_complex(&RealTensor::new(y_flat.shape().to_vec(), v.to_vec())?)?, &msgs),
            y_flat.data(),
            FD_STEP,
        )?;
        t.add(d_y.data(), &numeric_y, f0);
        t.instances += 1;
    }
    Ok(t)
}

fn supervised_family(rbf: bool, instances: usize, rng: &mut RngStream) -> Result<Tally> {
    let mut t = Tally::default();
    for _ in 0..instances {
        let (m, n, batch) = (dim(rng, 2, 6), dim(rng, 1, 2), dim(rng, 1, 6));
        let (variant, channel): (RxVariant, Box<dyn DifferentiableChannel>) = if rbf {
            (RxVariant::Rbf { head_width: dim(rng, 2, 6) }, Box::new(DifferentiableRayleigh::new(0.05)))
        } else {
            (RxVariant::Awgn, Box::new(DifferentiableAwgn { noise_variance: 0.05 }))
        };
        let mut tx = TxModel::new(m, n, rng)?;
        let mut rx = RxModel::new(m, n, variant, rng)?;
        randomize(tx.params_mut(), rng);
        randomize(rx.params_mut(), rng);
        let msgs = messages(rng, batch, m);
        // The channel realization is pinned by replaying the same stream.
        let ch_rng = RngStream::new(rng.next_u64());

        let g = joint_gradients(&tx, &rx, channel.as_ref(), &msgs, &msgs, &mut ch_rng.clone())?;
        let loss = |tx: &TxModel, rx: &RxModel| -> e2ecomm_core::Result<f64> {
            let (x, _) = tx.forward(&msgs)?;
            let (y, _) = channel.transmit_diff(&x, &mut ch_rng.clone())?;
            mean_ce(rx, &y, &msgs)
        };
        let f0 = g.losses.mean();
        let num_tx = finite_diff_grad(|p| loss(&TxModel::from_params(m, n, p.clone())?, &rx), tx.params(), FD_STEP)?;
        t.add(&g.tx.flatten(), &num_tx.flatten(), f0);
        let num_rx = finite_diff_grad(
            |p| loss(&tx, &RxModel::from_params(m, n, variant, p.clone())?),
            rx.params(),
            FD_STEP,
        )?;
        t.add(&g.rx.flatten(), &num_rx.flatten(), f0);
        t.instances += 1;
    }
    Ok(t)
}

fn log_policy_family(instances: usize, rng: &mut RngStream) -> Result<Tally> {
    let mut t = Tally::default();
    for _ in 0..instances {
        let (m, n, batch) = (dim(rng, 2, 8), dim(rng, 1, 4), dim(rng, 1, 5));
        let cfg = PolicyConfig::new(0.01 + 0.5 * rng.uniform())?;
        let tx = TxModel::new(m, n, rng)?;
        let (x, cache) = tx.forward(&messages(rng, batch, m))?;
        let sample = policy_sample(x, cache, &cfg, rng)?;
        let analytic = log_policy_grad_wrt_mean(&sample, &cfg);
        // Sum over rows: each row's log-density depends on its own mean only.
        let x_flat = complex_to_real(&sample.x);
        let f = |v: &[f64]| -> e2ecomm_core::Result<f64> {
            let x = real_to_complex(&RealTensor::new(x_flat.shape().to_vec(), v.to_vec())?)?;
            Ok(log_policy_density(&sample.x_p, &x, &cfg)?.iter().sum())
        };
        let numeric = finite_diff_vec(f, x_flat.data(), FD_STEP)?;
        t.add(analytic.data(), &numeric, f(x_flat.data())?);
        t.instances += 1;
    }
    Ok(t)
}

/// Finite-difference checks of every analytic backward pass, `instances`
/// randomized instances per family.
pub fn gradient_suite(instances: usize, seed: u64) -> Result<Vec<OracleOutcome>> {
    let root = RngStream::new(seed);
    let mut out = Vec::new();
    for (k, (name, act)) in [
        ("dense linear", Activation::Linear),
        ("dense relu", Activation::Relu),
        ("dense elu", Activation::Elu),
        ("dense softmax", Activation::Softmax),
    ]
    .into_iter()
    .enumerate()
    {
        out.push(dense_family(act, instances, &mut root.derive(k as u64))?.outcome(name));
    }
    out.push(embedding_family(instances, &mut root.derive(10))?.outcome("embedding elu"));
    out.push(normalization_family(instances, &mut root.derive(11))?.outcome("energy normalization"));
    out.push(tx_family(instances, &mut root.derive(12))?.outcome("transmitter"));
    out.push(rx_family(|_| RxVariant::Awgn, instances, &mut root.derive(13))?.outcome("receiver awgn"));
    out.push(
        rx_family(|r| RxVariant::Rbf { head_width: dim(r, 2, 6) }, instances, &mut root.derive(14))?
            .outcome("receiver rbf (division head)"),
    );
    out.push(supervised_family(false, instances, &mut root.derive(15))?.outcome("end-to-end supervised awgn"));
    out.push(supervised_family(true, instances, &mut root.derive(16))?.outcome("end-to-end supervised rbf"));
    out.push(log_policy_family(instances, &mut root.derive(17))?.outcome("log-policy wrt mean"));
    Ok(out)
}

/// Per-coordinate comparison of the Monte-Carlo estimator mean with the
/// gradient of the smoothed objective.
#[derive(Debug, Clone)]
pub struct EstimatorCheck {
    pub draws: usize,
    pub reference: Vec<f64>,
    pub mc_mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// `(mc_mean − reference) / std_error` per coordinate.
    pub z: Vec<f64>,
}

impl EstimatorCheck {
    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().fold(0.0, |a, z| a.max(z.abs()))
    }
}

/// Half-width of the quadrature box in standard deviations, and points per
/// axis.
const QUAD_SPAN: f64 = 8.0;
const QUAD_POINTS: usize = 241;

/// Losses of a frozen receiver on a fixed 2-D grid around each message's
/// policy mean, for `N = 1`.
struct SmoothedObjective {
    msgs: Vec<MessageId>,
    cfg: PolicyConfig,
    /// Per message: grid points and receiver losses at them.
    grids: Vec<(Vec<Complex64>, Vec<f64>)>,
    cell_area: f64,
}

impl SmoothedObjective {
    fn new(tx: &TxModel, rx: &RxModel, msgs: &[MessageId], cfg: PolicyConfig) -> Result<Self> {
        let (x, _) = tx.forward(msgs)?;
        let sd = (cfg.variance / 2.0).sqrt();
        let h = 2.0 * QUAD_SPAN * sd / (QUAD_POINTS - 1) as f64;
        let mut grids = Vec::with_capacity(msgs.len());
        for (i, &m) in msgs.iter().enumerate() {
            let center = x.row(i)[0] * cfg.mean_scale();
            let pts: Vec<Complex64> = (0..QUAD_POINTS * QUAD_POINTS)
                .map(|k| {
                    let (a, b) = (k / QUAD_POINTS, k % QUAD_POINTS);
                    center + Complex64::new(-QUAD_SPAN * sd + a as f64 * h, -QUAD_SPAN * sd + b as f64 * h)
                })
                .collect();
            let y = SymbolBlock::new(pts.len(), 1, pts.clone())?;
            let losses = ce_per_example(&rx.forward(&y)?.0, &vec![m; pts.len()])?.0;
            grids.push((pts, losses));
        }
        Ok(Self {
            msgs: msgs.to_vec(),
            cfg,
            grids,
            cell_area: h * h,
        })
    }

    /// `J(θ) = (1/B) Σᵢ E_{x_p ~ π(·|f_θ(mᵢ))}[lᵢ(x_p)]` by quadrature.
    fn value(&self, tx: &TxModel) -> e2ecomm_core::Result<f64> {
        let (x, _) = tx.forward(&self.msgs)?;
        let var = self.cfg.variance;
        let mut total = 0.0;
        for (i, (pts, losses)) in self.grids.iter().enumerate() {
            let mean = x.row(i)[0] * self.cfg.mean_scale();
            let s: f64 = pts
                .iter()
                .zip(losses)
                .map(|(p, l)| l * (-(p - mean).norm_sqr() / var).exp())
                .sum();
            total += s * self.cell_area / (PI * var);
        }
        Ok(total / self.msgs.len() as f64)
    }
}

/// Unbiasedness of the transmitter gradient estimator on `M = 4, N = 1`
/// with a briefly pre-trained, then frozen, receiver and a noiseless
/// channel: the mean over `draws` policy draws of the batch `[0, 1, 2, 3]`
/// is compared with finite differences of the quadrature objective.
pub fn estimator_unbiasedness(draws: usize, seed: u64) -> Result<EstimatorCheck> {
    let cfg = PolicyConfig::default();
    let root = RngStream::new(seed);
    let mut state = SystemState::new(4, 1, RxVariant::Awgn, cfg, &mut root.derive(0))?;
    let mut rngs = TrainingRngs::from_seed(seed);
    let warmup = Awgn { noise_variance: 0.05 };
    for _ in 0..100 {
        train_receiver_step(&mut state, &warmup, 64, 1e-2, &mut rngs)?;
    }
    let (tx, rx) = (state.tx, state.rx);
    let msgs: Vec<MessageId> = vec![0, 1, 2, 3];

    let objective = SmoothedObjective::new(&tx, &rx, &msgs, cfg)?;
    let reference = finite_diff_grad(
        |p| objective.value(&TxModel::from_params(4, 1, p.clone())?),
        tx.params(),
        1e-5,
    )?
    .flatten();

    // Draws are batched in chunks; each chunk mean is one sample for the
    // standard error.
    const PER_CHUNK: usize = 100;
    let chunks = draws.div_ceil(PER_CHUNK);
    let batch: Vec<MessageId> = (0..PER_CHUNK).flat_map(|_| msgs.iter().copied()).collect();
    let mut rng = root.derive(1);
    let dim = reference.len();
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for _ in 0..chunks {
        let (x, cache) = tx.forward(&batch)?;
        let sample: PolicySample = policy_sample(x, cache, &cfg, &mut rng)?;
        // Noiseless channel: the receiver sees x_p itself.
        let losses = ce_per_example(&rx.forward(&sample.x_p)?.0, &batch)?;
        let g = estimate_tx_gradient(&tx, &losses, &sample, &cfg)?.flatten();
        for j in 0..dim {
            sum[j] += g[j];
            sum_sq[j] += g[j] * g[j];
        }
    }
    let k = chunks as f64;
    let mc_mean: Vec<f64> = sum.iter().map(|s| s / k).collect();
    let std_error: Vec<f64> = (0..dim)
        .map(|j| ((sum_sq[j] / k - mc_mean[j] * mc_mean[j]) * k / (k - 1.0)).max(0.0).sqrt() / k.sqrt())
        .collect();
    let z = (0..dim)
        .map(|j| {
            let d = mc_mean[j] - reference[j];
            if std_error[j] > 0.0 {
                d / std_error[j]
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    Ok(EstimatorCheck {
        draws: chunks * PER_CHUNK,
        reference,
        mc_mean,
        std_error,
        z,
    })
}

/// `‖x‖² = N` for every transmitted message (relative 1e-12), and the
/// Monte-Carlo mean of `‖x_p‖²/N` within four standard errors of 1.
pub fn energy_invariants(seed: u64) -> Result<Vec<OracleOutcome>> {
    let mut rng = RngStream::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (m, n) = (dim(&mut rng, 2, 64), dim(&mut rng, 1, 8));
        let tx = TxModel::new(m, n, &mut rng)?;
        let all: Vec<MessageId> = (0..m).collect();
        let (x, _) = tx.forward(&all)?;
        for i in 0..m {
            worst = worst.max((x.row_energy(i) / n as f64 - 1.0).abs());
        }
    }
    let cfg = PolicyConfig::default();
    let tx = TxModel::new(256, 4, &mut rng)?;
    let msgs = messages(&mut rng, 250_000, 256);
    let (x, cache) = tx.forward(&msgs)?;
    let s = policy_sample(x, cache, &cfg, &mut rng)?;
    let e: Vec<f64> = (0..s.x_p.batch()).map(|i| s.x_p.row_energy(i) / 4.0).collect();
    let k = e.len() as f64;
    let mean = e.iter().sum::<f64>() / k;
    let se = (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
    Ok(vec![
        OracleOutcome {
            name: "energy per message".into(),
            passed: worst <= 1e-12,
            detail: format!("max |‖x‖²/N − 1| = {worst:.2e} over 100 random transmitters"),
        },
        OracleOutcome {
            name: "explored energy".into(),
            passed: (mean - 1.0).abs() < 4.0 * se,
            detail: format!("E[‖x_p‖²]/N = {mean:.6} (se {se:.1e}, 250000 messages, σ² = {})", cfg.variance),
        },
    ])
}

/// Everything `selftest` runs.
pub fn selftest(seed: u64) -> Result<Vec<OracleOutcome>> {
    let mut out = gradient_suite(100, seed)?;
    let est = estimator_unbiasedness(100_000, seed)?;
    out.push(OracleOutcome {
        name: "estimator unbiasedness".into(),
        passed: est.max_abs_z() < 3.0,
        detail: format!(
            "{} draws, {} coordinates, max |z| = {:.2}",
            est.draws,
            est.z.len(),
            est.max_abs_z()
        ),
    });
    out.extend(energy_invariants(seed)?);
    Ok(out)
}
