//! Gaussian exploration policy around the transmitter output and the
//! score-function estimator of the transmitter gradient.
//!
//! The policy is `x_p = √(1−σ²)·x + w` with `w ~ CN(0, σ²I)`, i.e.
//!
//! ```text
//! π(x_p | x) = (πσ²)^(−N) · exp(−‖x_p − √(1−σ²)·x‖² / σ²)
//! ```
//!
//! with σ² fixed, so the policy has no trainable parameters of its own. The
//! estimator consumes only per-example losses and the sample record; it has
//! no access to the channel.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::ndcore::{ParamSet, RealTensor};
use crate::signal::{complex_to_real, sample_cgaussian, RngStream, SymbolBlock};
use crate::transceiver::{LossVector, TxCache, TxModel};

pub const DEFAULT_POLICY_VARIANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Exploration variance σ² in (0, 1).
    pub variance: f64,
    /// Subtract the batch-mean loss before weighting (variance reduction).
    #[serde(default)]
    pub baseline: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            variance: DEFAULT_POLICY_VARIANCE,
            baseline: false,
        }
    }
}

impl PolicyConfig {
    pub fn new(variance: f64) -> Result<Self> {
        let cfg = Self {
            variance,
            baseline: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variance > 0.0 && self.variance < 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "policy variance must lie in (0, 1), got {}",
                self.variance
            )))
        }
    }

    /// `√(1−σ²)`, the scale applied to the transmitter output.
    pub fn mean_scale(&self) -> f64 {
        (1.0 - self.variance).sqrt()
    }

    /// `2√(1−σ²)/σ²`, the coefficient of the log-density gradient.
    pub fn score_coefficient(&self) -> f64 {
        2.0 * self.mean_scale() / self.variance
    }
}

/// One exploration draw: the deterministic output, its perturbation, and
/// the transmitter cache that produced the output.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub x: SymbolBlock,
    pub x_p: SymbolBlock,
    pub cache: TxCache,
}

impl PolicySample {
    /// The recorded perturbation `x_p − √(1−σ²)·x`.
    pub fn perturbation(&self, cfg: &PolicyConfig) -> SymbolBlock {
        let c = cfg.mean_scale();
        let mut w = self.x_p.clone();
        w.data_mut()
            .iter_mut()
            .zip(self.x.data())
            .for_each(|(wp, xv)| *wp -= xv * c);
        w
    }
}

pub fn policy_sample(x: SymbolBlock, cache: TxCache, cfg: &PolicyConfig, rng: &mut RngStream) -> Result<PolicySample> {
    cfg.validate()?;
    let noise = sample_cgaussian(x.data().len(), cfg.variance, rng)?;
    let c = cfg.mean_scale();
    let data = x.data().iter().zip(noise).map(|(xv, w)| xv * c + w).collect();
    let x_p = SymbolBlock::new(x.batch(), x.n(), data)?;
    Ok(PolicySample { x, x_p, cache })
}

/// `∇_x log π(x_p | x)` for every row in the stacked (re, im) layout:
/// `(2√(1−σ²)/σ²)·(x_p − √(1−σ²)·x)`.
pub fn log_policy_grad_wrt_mean(sample: &PolicySample, cfg: &PolicyConfig) -> RealTensor {
    let mut g = complex_to_real(&sample.perturbation(cfg));
    g.scale(cfg.score_coefficient());
    g
}

/// `log π(x_p | x)` per row.
pub fn log_policy_density(x_p: &SymbolBlock, x: &SymbolBlock, cfg: &PolicyConfig) -> Result<Vec<f64>> {
    if !x_p.same_shape(x) {
        return Err(dim_err("log_policy_density", format!("{}x{}", x.batch(), x.n()), format!("{}x{}", x_p.batch(), x_p.n())));
    }
    let c = cfg.mean_scale();
    let norm = -(x.n() as f64) * (PI * cfg.variance).ln();
    Ok((0..x.batch())
        .map(|i| {
            let dist: f64 = x_p.row(i).iter().zip(x.row(i)).map(|(p, m)| (p - m * c).norm_sqr()).sum();
            norm - dist / cfg.variance
        })
        .collect())
}

/// `(1/B) Σᵢ lᵢ · ∇_θ log π(x_p⁽ⁱ⁾ | f_θ(mᵢ))`, optionally with the batch-mean
/// loss subtracted from every `lᵢ`.
pub fn estimate_tx_gradient(
    tx: &TxModel,
    losses: &LossVector,
    sample: &PolicySample,
    cfg: &PolicyConfig,
) -> Result<ParamSet> {
    let batch = sample.x.batch();
    if losses.len() != batch {
        return Err(dim_err("estimate_tx_gradient", batch, losses.len()));
    }
    if batch == 0 {
        return Ok(tx.params().zeros_like());
    }
    let baseline = if cfg.baseline { losses.mean() } else { 0.0 };
    let mut weighted = log_policy_grad_wrt_mean(sample, cfg);
    let inv_batch = 1.0 / batch as f64;
    for (i, l) in losses.as_slice().iter().enumerate() {
        let w = (l - baseline) * inv_batch;
        weighted.row_mut(i).iter_mut().for_each(|g| *g *= w);
    }
    tx.backward(&sample.cache, &weighted)
}
