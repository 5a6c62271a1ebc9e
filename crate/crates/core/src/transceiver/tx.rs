use crate::error::{Error, Result};
use crate::ndcore::{
    dense_backward, dense_forward, embedding_backward, embedding_forward, glorot_uniform, Activation, DenseCache,
    EmbeddingCache, ParamSet, RealTensor,
};
use crate::signal::{normalize_energy, normalize_energy_backward, real_to_complex, NormCache, RngStream, SymbolBlock};

use super::{validate_messages, MessageId};

pub const TX_EMBED_WEIGHT: &str = "embed.weight";
pub const TX_EMBED_BIAS: &str = "embed.bias";
pub const TX_OUT_WEIGHT: &str = "out.weight";
pub const TX_OUT_BIAS: &str = "out.bias";

/// Transmitter network: one-hot(m) → dense(M, ELU) → dense(2N, linear) →
/// ℝ²ᴺ→ℂᴺ → per-message energy normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct TxModel {
    m: usize,
    n: usize,
    params: ParamSet,
}

#[derive(Debug, Clone)]
pub struct TxCache {
    embed: EmbeddingCache,
    out: DenseCache,
    norm: NormCache,
}

impl TxModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new(m: usize, n: usize, rng: &mut RngStream) -> Result<Self> {
        if m < 2 || n < 1 {
            return Err(Error::InvalidArgument(format!("transmitter needs M >= 2 and N >= 1, got M={m}, N={n}")));
        }
        let mut params = ParamSet::new();
        params.insert(TX_EMBED_WEIGHT, glorot_uniform(rng.inner(), m, m));
        params.insert(TX_EMBED_BIAS, RealTensor::zeros(&[m]));
        params.insert(TX_OUT_WEIGHT, glorot_uniform(rng.inner(), 2 * n, m));
        params.insert(TX_OUT_BIAS, RealTensor::zeros(&[2 * n]));
        Ok(Self { m, n, params })
    }

    /// Rebuilds a model from stored parameters, checking every shape.
    pub fn from_params(m: usize, n: usize, params: ParamSet) -> Result<Self> {
        let expected = [
            (TX_EMBED_WEIGHT, vec![m, m]),
            (TX_EMBED_BIAS, vec![m]),
            (TX_OUT_WEIGHT, vec![2 * n, m]),
            (TX_OUT_BIAS, vec![2 * n]),
        ];
        super::check_param_shapes(&params, &expected)?;
        Ok(Self { m, n, params })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn forward(&self, msgs: &[MessageId]) -> Result<(SymbolBlock, TxCache)> {
        validate_messages(msgs, self.m)?;
        let (hidden, embed) = embedding_forward(
            self.params.get(TX_EMBED_WEIGHT)?,
            self.params.get(TX_EMBED_BIAS)?,
            msgs,
            Activation::Elu,
        )?;
        let (reals, out) = dense_forward(
            self.params.get(TX_OUT_WEIGHT)?,
            self.params.get(TX_OUT_BIAS)?,
            &hidden,
            Activation::Linear,
        )?;
        let (x, norm) = normalize_energy(&real_to_complex(&reals)?)?;
        Ok((x, TxCache { embed, out, norm }))
    }

    /// Gradient of `Σᵢ ⟨d_x[i], x[i]⟩` w.r.t. the parameters, where `d_x` is
    /// in the stacked (re, im) layout of the normalized output.
    pub fn backward(&self, cache: &TxCache, d_x: &RealTensor) -> Result<ParamSet> {
        let d_reals = normalize_energy_backward(&cache.norm, d_x)?;
        let out = dense_backward(&cache.out, &d_reals)?;
        let (embed_w, embed_b) = embedding_backward(&cache.embed, &out.input)?;
        let mut grads = ParamSet::new();
        grads.insert(TX_EMBED_WEIGHT, embed_w);
        grads.insert(TX_EMBED_BIAS, embed_b);
        grads.insert(TX_OUT_WEIGHT, out.weight);
        grads.insert(TX_OUT_BIAS, out.bias);
        Ok(grads)
    }
}

/// Free-function form of [`TxModel::forward`].
pub fn tx_forward(tx: &TxModel, msgs: &[MessageId]) -> Result<(SymbolBlock, TxCache)> {
    tx.forward(msgs)
}

/// Free-function form of [`TxModel::backward`].
pub fn tx_backward(tx: &TxModel, cache: &TxCache, d_x: &RealTensor) -> Result<ParamSet> {
    tx.backward(cache, d_x)
}
