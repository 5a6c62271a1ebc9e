use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{Error, Result};

fn check_rate(lr: f64) -> Result<()> {
    if lr.is_finite() && lr >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("learning rate must be finite and >= 0, got {lr}")))
    }
}

/// Plain gradient descent: `θ ← θ − η ∇`.
pub fn sgd_step(params: &mut ParamSet, grads: &ParamSet, lr: f64) -> Result<()> {
    check_rate(lr)?;
    params.axpy(-lr, grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates and the step counter of Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub first: ParamSet,
    pub second: ParamSet,
}

impl OptimizerState {
    pub fn for_params(params: &ParamSet) -> Self {
        Self {
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut OptimizerState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    check_rate(lr)?;
    params.check_congruent(grads)?;
    params.check_congruent(&state.first)?;
    params.check_congruent(&state.second)?;

    let step = state.step + 1;
    let bias1 = 1.0 - cfg.beta1.powi(step as i32);
    let bias2 = 1.0 - cfg.beta2.powi(step as i32);
    for (name, theta) in params.iter_mut() {
        let g = grads.get(name)?.data();
        let m = state.first.get_mut(name)?.data_mut();
        for (mk, gk) in m.iter_mut().zip(g) {
            *mk = cfg.beta1 * *mk + (1.0 - cfg.beta1) * gk;
        }
        let v = state.second.get_mut(name)?.data_mut();
        for (vk, gk) in v.iter_mut().zip(g) {
            *vk = cfg.beta2 * *vk + (1.0 - cfg.beta2) * gk * gk;
        }
        let m = state.first.get(name)?.data();
        let v = state.second.get(name)?.data();
        for ((t, mk), vk) in theta.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mk / bias1;
            let v_hat = vk / bias2;
            *t -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    state.step = step;
    Ok(())
}
