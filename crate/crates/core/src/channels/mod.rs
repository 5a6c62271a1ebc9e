//! Channels.
//!
//! [`BlackBoxChannel`] is the only surface the alternating training path
//! sees: symbols in, symbols out. [`DifferentiableChannel`] adapters exist
//! for the supervised baseline, which has to backpropagate through a model
//! of the channel. The two traits are deliberately unrelated, and the
//! black-box types do not implement the differentiable one.

mod differentiable;

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{sample_cgaussian, RngStream, SymbolBlock};

pub use differentiable::{ChannelCache, DifferentiableAwgn, DifferentiableChannel, DifferentiableRayleigh};

/// A channel observable only through its inputs and outputs.
pub trait BlackBoxChannel: Send + Sync {
    fn transmit(&self, x: &SymbolBlock, rng: &mut RngStream) -> Result<SymbolBlock>;
}

fn check_variance(noise_variance: f64) -> Result<()> {
    if noise_variance >= 0.0 && noise_variance.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("noise variance must be finite and >= 0, got {noise_variance}")))
    }
}

/// `Y = X + n`, `n` i.i.d. CN(0, σ²).
pub fn awgn_transmit(x: &SymbolBlock, noise_variance: f64, rng: &mut RngStream) -> Result<SymbolBlock> {
    check_variance(noise_variance)?;
    let noise = sample_cgaussian(x.data().len(), noise_variance, rng)?;
    let mut y = x.clone();
    y.data_mut().iter_mut().zip(noise).for_each(|(s, w)| *s += w);
    Ok(y)
}

/// Draws the per-message gains and applies `Y[i] = hᵢ·X[i] + n`. Gains come
/// first for each row, then that row's noise.
pub(crate) fn rayleigh_realize(
    x: &SymbolBlock,
    noise_variance: f64,
    pinned_gain: Option<Complex64>,
    rng: &mut RngStream,
) -> Result<(SymbolBlock, Vec<Complex64>)> {
    check_variance(noise_variance)?;
    let mut y = x.clone();
    let mut gains = Vec::with_capacity(x.batch());
    for i in 0..x.batch() {
        let h = match pinned_gain {
            Some(h) => h,
            None => sample_cgaussian(1, 1.0, rng)?[0],
        };
        let noise = sample_cgaussian(x.n(), noise_variance, rng)?;
        y.row_mut(i)
            .iter_mut()
            .zip(noise)
            .for_each(|(s, w)| *s = h * *s + w);
        gains.push(h);
    }
    Ok((y, gains))
}

/// Rayleigh block fading: one gain `h ~ CN(0, 1)` per message, shared by its
/// N channel uses, i.i.d. across messages, plus CN(0, σ²) noise.
pub fn rbf_transmit(x: &SymbolBlock, noise_variance: f64, rng: &mut RngStream) -> Result<SymbolBlock> {
    Ok(rayleigh_realize(x, noise_variance, None, rng)?.0)
}

fn quadrant(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Adds CN(0, σ²) noise, then keeps only the quadrant of each symbol:
/// `(sign(re) + i·sign(im))/√2`. Not differentiable.
pub fn quantizer_transmit(x: &SymbolBlock, noise_variance: f64, rng: &mut RngStream) -> Result<SymbolBlock> {
    let mut y = awgn_transmit(x, noise_variance, rng)?;
    y.data_mut()
        .iter_mut()
        .for_each(|s| *s = Complex64::new(quadrant(s.re), quadrant(s.im)) * FRAC_1_SQRT_2);
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Awgn {
    pub noise_variance: f64,
}

impl BlackBoxChannel for Awgn {
    fn transmit(&self, x: &SymbolBlock, rng: &mut RngStream) -> Result<SymbolBlock> {
        awgn_transmit(x, self.noise_variance, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayleighBlockFading {
    noise_variance: f64,
    pinned_gain: Option<Complex64>,
}

impl RayleighBlockFading {
    pub fn new(noise_variance: f64) -> Self {
        Self {
            noise_variance,
            pinned_gain: None,
        }
    }

    /// Replaces the random gain by a constant.
    #[cfg(any(test, feature = "test-seams"))]
    pub fn with_pinned_gain(noise_variance: f64, gain: Complex64) -> Self {
        Self {
            noise_variance,
            pinned_gain: Some(gain),
        }
    }
}

impl BlackBoxChannel for RayleighBlockFading {
    fn transmit(&self, x: &SymbolBlock, rng: &mut RngStream) -> Result<SymbolBlock> {
        Ok(rayleigh_realize(x, self.noise_variance, self.pinned_gain, rng)?.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub noise_variance: f64,
}

impl BlackBoxChannel for Quantizer {
    fn transmit(&self, x: &SymbolBlock, rng: &mut RngStream) -> Result<SymbolBlock> {
        quantizer_transmit(x, self.noise_variance, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Rbf,
    Quantizer,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rbf => "rbf",
            ChannelKind::Quantizer => "quantizer",
        }
    }

    pub fn black_box(self, noise_variance: f64) -> Box<dyn BlackBoxChannel> {
        match self {
            ChannelKind::Awgn => Box::new(Awgn { noise_variance }),
            ChannelKind::Rbf => Box::new(RayleighBlockFading::new(noise_variance)),
            ChannelKind::Quantizer => Box::new(Quantizer { noise_variance }),
        }
    }

    /// `None` for channels without a differentiable model.
    pub fn differentiable(self, noise_variance: f64) -> Option<Box<dyn DifferentiableChannel>> {
        match self {
            ChannelKind::Awgn => Some(Box::new(DifferentiableAwgn { noise_variance })),
            ChannelKind::Rbf => Some(Box::new(DifferentiableRayleigh::new(noise_variance))),
            ChannelKind::Quantizer => None,
        }
    }
}

impl std::str::FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "awgn" => Ok(Self::Awgn),
            "rbf" => Ok(Self::Rbf),
            "quantizer" => Ok(Self::Quantizer),
            other => Err(Error::InvalidArgument(format!("unknown channel `{other}`"))),
        }
    }
}
