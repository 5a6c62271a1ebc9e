use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::ndcore::{
    dense_backward, dense_forward, glorot_uniform, softmax_into, Activation, DenseCache, ParamSet, RealTensor,
};
use crate::signal::{complex_to_real, RngStream, SymbolBlock};

use super::ProbBatch;

pub const RX_HIDDEN_WEIGHT: &str = "hidden.weight";
pub const RX_HIDDEN_BIAS: &str = "hidden.bias";
pub const RX_OUT_WEIGHT: &str = "out.weight";
pub const RX_OUT_BIAS: &str = "out.bias";
pub const RX_EST_HIDDEN_WEIGHT: &str = "estimator.hidden.weight";
pub const RX_EST_HIDDEN_BIAS: &str = "estimator.hidden.bias";
pub const RX_EST_OUT_WEIGHT: &str = "estimator.out.weight";
pub const RX_EST_OUT_BIAS: &str = "estimator.out.bias";

/// Floor on `|ĥ|²` in the equalizing division.
pub const DIVISION_EPSILON: f64 = 1e-6;

/// Default width of the hidden layer of the channel-estimate head.
pub const DEFAULT_HEAD_WIDTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RxVariant {
    /// ℂ→ℝ, dense(M, ReLU), dense(M, softmax).
    Awgn,
    /// A two-layer head (2N → S ReLU → 2 linear) estimates a complex gain ĥ;
    /// the received symbols are divided by ĥ and fed to the AWGN tail.
    Rbf { head_width: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxModel {
    m: usize,
    n: usize,
    variant: RxVariant,
    params: ParamSet,
}

#[derive(Debug, Clone)]
struct HeadCache {
    hidden: DenseCache,
    out: DenseCache,
    received: SymbolBlock,
    estimate: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct RxCache {
    head: Option<HeadCache>,
    hidden: DenseCache,
    out: DenseCache,
}

impl RxCache {
    /// Channel estimates ĥ of the RBF head, one per message.
    pub fn channel_estimates(&self) -> Option<&[Complex64]> {
        self.head.as_ref().map(|h| h.estimate.as_slice())
    }
}

impl RxModel {
    pub fn new(m: usize, n: usize, variant: RxVariant, rng: &mut RngStream) -> Result<Self> {
        if m < 2 || n < 1 {
            return Err(Error::InvalidArgument(format!("receiver needs M >= 2 and N >= 1, got M={m}, N={n}")));
        }
        let mut params = ParamSet::new();
        if let RxVariant::Rbf { head_width } = variant {
            if head_width == 0 {
                return Err(Error::InvalidArgument("RBF head width must be >= 1".into()));
            }
            params.insert(RX_EST_HIDDEN_WEIGHT, glorot_uniform(rng.inner(), head_width, 2 * n));
            params.insert(RX_EST_HIDDEN_BIAS, RealTensor::zeros(&[head_width]));
            params.insert(RX_EST_OUT_WEIGHT, glorot_uniform(rng.inner(), 2, head_width));
            params.insert(RX_EST_OUT_BIAS, RealTensor::zeros(&[2]));
        }
        params.insert(RX_HIDDEN_WEIGHT, glorot_uniform(rng.inner(), m, 2 * n));
        params.insert(RX_HIDDEN_BIAS, RealTensor::zeros(&[m]));
        params.insert(RX_OUT_WEIGHT, glorot_uniform(rng.inner(), m, m));
        params.insert(RX_OUT_BIAS, RealTensor::zeros(&[m]));
        Ok(Self { m, n, variant, params })
    }

    pub fn from_params(m: usize, n: usize, variant: RxVariant, params: ParamSet) -> Result<Self> {
        let mut expected = vec![
            (RX_HIDDEN_WEIGHT, vec![m, 2 * n]),
            (RX_HIDDEN_BIAS, vec![m]),
            (RX_OUT_WEIGHT, vec![m, m]),
            (RX_OUT_BIAS, vec![m]),
        ];
        if let RxVariant::Rbf { head_width } = variant {
            expected.extend([
                (RX_EST_HIDDEN_WEIGHT, vec![head_width, 2 * n]),
                (RX_EST_HIDDEN_BIAS, vec![head_width]),
                (RX_EST_OUT_WEIGHT, vec![2, head_width]),
                (RX_EST_OUT_BIAS, vec![2]),
            ]);
        }
        super::check_param_shapes(&params, &expected)?;
        Ok(Self { m, n, variant, params })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn variant(&self) -> RxVariant {
        self.variant
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn forward(&self, y: &SymbolBlock) -> Result<(ProbBatch, RxCache)> {
        if y.n() != self.n {
            return Err(dim_err("rx_forward", format!("{} channel uses", self.n), y.n()));
        }
        let (tail_input, head) = match self.variant {
            RxVariant::Awgn => (complex_to_real(y), None),
            RxVariant::Rbf { .. } => {
                let reals = complex_to_real(y);
                let (hidden_out, hidden) = dense_forward(
                    self.params.get(RX_EST_HIDDEN_WEIGHT)?,
                    self.params.get(RX_EST_HIDDEN_BIAS)?,
                    &reals,
                    Activation::Relu,
                )?;
                let (est, out) = dense_forward(
                    self.params.get(RX_EST_OUT_WEIGHT)?,
                    self.params.get(RX_EST_OUT_BIAS)?,
                    &hidden_out,
                    Activation::Linear,
                )?;
                let estimate: Vec<Complex64> = (0..y.batch())
                    .map(|i| Complex64::new(est.row(i)[0], est.row(i)[1]))
                    .collect();
                let equalized = equalize(y, &estimate);
                (
                    complex_to_real(&equalized),
                    Some(HeadCache {
                        hidden,
                        out,
                        received: y.clone(),
                        estimate,
                    }),
                )
            }
        };
        let (h, hidden) = dense_forward(
            self.params.get(RX_HIDDEN_WEIGHT)?,
            self.params.get(RX_HIDDEN_BIAS)?,
            &tail_input,
            Activation::Relu,
        )?;
        let (logits, out) = dense_forward(
            self.params.get(RX_OUT_WEIGHT)?,
            self.params.get(RX_OUT_BIAS)?,
            &h,
            Activation::Linear,
        )?;
        let mut probs = logits.clone();
        for i in 0..logits.rows() {
            softmax_into(logits.row(i), probs.row_mut(i));
        }
        Ok((ProbBatch::from_tensor_unchecked(probs), RxCache { head, hidden, out }))
    }

    /// Backpropagates a gradient w.r.t. the pre-softmax logits. Returns the
    /// parameter gradients and the gradient w.r.t. the received symbols in
    /// the stacked (re, im) layout.
    pub fn backward(&self, cache: &RxCache, d_logits: &RealTensor) -> Result<(ParamSet, RealTensor)> {
        let out = dense_backward(&cache.out, d_logits)?;
        let hidden = dense_backward(&cache.hidden, &out.input)?;
        let mut grads = ParamSet::new();
        grads.insert(RX_OUT_WEIGHT, out.weight);
        grads.insert(RX_OUT_BIAS, out.bias);
        grads.insert(RX_HIDDEN_WEIGHT, hidden.weight);
        grads.insert(RX_HIDDEN_BIAS, hidden.bias);

        let d_y = match &cache.head {
            None => hidden.input,
            Some(head) => {
                let (mut d_y, d_est) = equalize_backward(&head.received, &head.estimate, &hidden.input);
                let est_out = dense_backward(&head.out, &d_est)?;
                let est_hidden = dense_backward(&head.hidden, &est_out.input)?;
                d_y.axpy(1.0, &est_hidden.input)?;
                grads.insert(RX_EST_OUT_WEIGHT, est_out.weight);
                grads.insert(RX_EST_OUT_BIAS, est_out.bias);
                grads.insert(RX_EST_HIDDEN_WEIGHT, est_hidden.weight);
                grads.insert(RX_EST_HIDDEN_BIAS, est_hidden.bias);
                d_y
            }
        };
        Ok((grads, d_y))
    }
}

/// `y · conj(ĥ) / max(|ĥ|², ε)` per symbol, one estimate per message.
fn equalize(y: &SymbolBlock, estimate: &[Complex64]) -> SymbolBlock {
    let mut out = y.clone();
    for (i, h) in estimate.iter().enumerate() {
        let denom = h.norm_sqr().max(DIVISION_EPSILON);
        let scale = h.conj() / denom;
        out.row_mut(i).iter_mut().for_each(|s| *s *= scale);
    }
    out
}

/// Jacobian-transpose of [`equalize`]: returns `(d_y, d_ĥ)` with `d_y` in the
/// stacked layout `[batch × 2N]` and `d_ĥ` as `[batch × 2]`.
fn equalize_backward(y: &SymbolBlock, estimate: &[Complex64], upstream: &RealTensor) -> (RealTensor, RealTensor) {
    let n = y.n();
    let mut d_y = RealTensor::zeros(&[y.batch(), 2 * n]);
    let mut d_h = RealTensor::zeros(&[y.batch(), 2]);
    for (i, h) in estimate.iter().enumerate() {
        let (a, b) = (h.re, h.im);
        let energy = a * a + b * b;
        let clamped = energy < DIVISION_EPSILON;
        let d = energy.max(DIVISION_EPSILON);
        let up = upstream.row(i);
        let (mut da, mut db) = (0.0, 0.0);
        let dy = d_y.row_mut(i);
        for (k, s) in y.row(i).iter().enumerate() {
            let (u, v) = (s.re, s.im);
            let (gre, gim) = (up[2 * k], up[2 * k + 1]);
            // q_re = (u a + v b)/d, q_im = (v a − u b)/d
            dy[2 * k] = (gre * a - gim * b) / d;
            dy[2 * k + 1] = (gre * b + gim * a) / d;
            let num_re = u * a + v * b;
            let num_im = v * a - u * b;
            da += gre * u / d + gim * v / d;
            db += gre * v / d - gim * u / d;
            if !clamped {
                let dd = 1.0 / (d * d);
                da -= (gre * num_re + gim * num_im) * 2.0 * a * dd;
                db -= (gre * num_re + gim * num_im) * 2.0 * b * dd;
            }
        }
        d_h.row_mut(i).copy_from_slice(&[da, db]);
    }
    (d_y, d_h)
}

pub fn rx_forward(rx: &RxModel, y: &SymbolBlock) -> Result<(ProbBatch, RxCache)> {
    rx.forward(y)
}

pub fn rx_backward(rx: &RxModel, cache: &RxCache, d_logits: &RealTensor) -> Result<(ParamSet, RealTensor)> {
    rx.backward(cache, d_logits)
}
