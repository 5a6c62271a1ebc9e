//! Transmitter and receiver networks, the cross-entropy loss, hard
//! decisions, and the on-disk model format.

mod model_file;
mod rx;
mod tx;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::ndcore::{ParamSet, RealTensor};

pub use model_file::{ModelRecord, ModelRole, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use rx::{rx_backward, rx_forward, RxCache, RxModel, RxVariant, DEFAULT_HEAD_WIDTH, DIVISION_EPSILON};
pub use tx::{tx_backward, tx_forward, TxCache, TxModel};

/// Zero-based message index in `[0, M)`.
pub type MessageId = usize;

/// Probabilities below this are clipped before taking the log in the loss.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn validate_messages(msgs: &[MessageId], m: usize) -> Result<()> {
    match msgs.iter().find(|&&id| id >= m) {
        Some(&id) => Err(Error::InvalidMessage { id, m }),
        None => Ok(()),
    }
}

pub(crate) fn check_param_shapes(params: &ParamSet, expected: &[(&str, Vec<usize>)]) -> Result<()> {
    if params.len() != expected.len() {
        return Err(dim_err("model parameters", expected.len(), params.len()));
    }
    for (name, shape) in expected {
        let t = params.get(name)?;
        if t.shape() != shape.as_slice() {
            return Err(dim_err("model parameters", format!("{name}: {shape:?}"), format!("{:?}", t.shape())));
        }
    }
    Ok(())
}

/// Batch of probability vectors over the message set, one row per example.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbBatch {
    probs: RealTensor,
}

impl ProbBatch {
    /// Validates that every row is a probability vector (sum within 1e-9).
    pub fn new(probs: RealTensor) -> Result<Self> {
        let (batch, _) = probs.dims2("ProbBatch::new")?;
        for i in 0..batch {
            let row = probs.row(i);
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| p.is_nan() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("row {i} is not a probability vector")));
            }
        }
        Ok(Self { probs })
    }

    pub(crate) fn from_tensor_unchecked(probs: RealTensor) -> Self {
        Self { probs }
    }

    pub fn tensor(&self) -> &RealTensor {
        &self.probs
    }

    pub fn batch(&self) -> usize {
        self.probs.rows()
    }

    pub fn m(&self) -> usize {
        self.probs.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.probs.row(i)
    }
}

/// Per-example losses fed back from the receiver to the transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossVector(pub Vec<f64>);

impl LossVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            0.0
        } else {
            self.0.iter().sum::<f64>() / self.0.len() as f64
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `l[i] = −log max(P[i][m_i], 1e-12)`; the batch mean is the
/// cross-entropy training loss.
pub fn ce_per_example(probs: &ProbBatch, msgs: &[MessageId]) -> Result<LossVector> {
    if msgs.len() != probs.batch() {
        return Err(dim_err("ce_per_example", probs.batch(), msgs.len()));
    }
    validate_messages(msgs, probs.m())?;
    Ok(LossVector(
        msgs.iter()
            .enumerate()
            .map(|(i, &m)| -probs.row(i)[m].max(PROB_FLOOR).ln())
            .collect(),
    ))
}

/// Row-wise argmax; ties go to the lowest index.
pub fn hard_decision(probs: &ProbBatch) -> Vec<MessageId> {
    (0..probs.batch())
        .map(|i| {
            let row = probs.row(i);
            let mut best = 0;
            for (k, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Number of positions where the decisions differ from the sent messages.
pub fn count_errors(decisions: &[MessageId], sent: &[MessageId]) -> usize {
    decisions.iter().zip(sent).filter(|(d, s)| d != s).count()
}
