use serde::{Deserialize, Serialize};

use e2ecomm_core::channels::BlackBoxChannel;
use e2ecomm_core::policy::PolicyConfig;
use e2ecomm_core::signal::{RngStream, SymbolBlock};
use e2ecomm_core::training::{init_stream, training_source, SystemState};
use e2ecomm_core::transceiver::{count_errors, hard_decision, RxVariant};
use e2ecomm_core::{Error, Result};

/// Two-sided 95% standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Messages pushed through the channel and receiver at a time.
const EVAL_CHUNK: usize = 4096;

/// Message (block) error rate with a Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub rate: f64,
    pub errors: u64,
    pub n: u64,
    /// Half-width of the Wilson score interval.
    pub ci95: f64,
}

impl ErrorEstimate {
    pub fn from_counts(errors: u64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("an error estimate needs n >= 1".into()));
        }
        if errors > n {
            return Err(Error::InvalidArgument(format!("{errors} errors out of {n} messages")));
        }
        let nf = n as f64;
        let p = errors as f64 / nf;
        let z2 = Z95 * Z95;
        let ci95 = Z95 / (1.0 + z2 / nf) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
        Ok(Self { rate: p, errors, n, ci95 })
    }
}

/// Error rate of the deterministic transmitter (no exploration) and the
/// receiver over `n_msgs` uniform messages.
pub fn evaluate_error_rate(
    state: &SystemState,
    channel: &dyn BlackBoxChannel,
    n_msgs: u64,
    rng: &mut RngStream,
) -> Result<ErrorEstimate> {
    if n_msgs == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one message".into()));
    }
    let m = state.m();
    let n = state.n();
    // Every message maps to one fixed codeword, so encode the whole set once.
    let all: Vec<usize> = (0..m).collect();
    let (codebook, _) = state.tx.forward(&all)?;

    let mut errors = 0u64;
    let mut remaining = n_msgs;
    while remaining > 0 {
        let count = remaining.min(EVAL_CHUNK as u64) as usize;
        let msgs = training_source(rng, count, m);
        let mut data = Vec::with_capacity(count * n);
        for &id in &msgs {
            data.extend_from_slice(codebook.row(id));
        }
        let x = SymbolBlock::new(count, n, data)?;
        let y = channel.transmit(&x, rng)?;
        let (probs, _) = state.rx.forward(&y)?;
        errors += count_errors(&hard_decision(&probs), &msgs) as u64;
        remaining -= count as u64;
    }
    ErrorEstimate::from_counts(errors, n_msgs)
}

/// Error rate of untrained systems, pooled over `inits` independent
/// initializations with `msgs_per_init` messages each.
///
/// A single fixed initialization is not at chance: its decisions depend on
/// the received signal, and by luck it may favour or avoid the sent
/// message. Message indices are exchangeable under the initialization
/// distribution, so the pooled hit probability is exactly `1/M`.
pub fn untrained_error_rate(
    m: usize,
    n: usize,
    channel: &dyn BlackBoxChannel,
    inits: u64,
    msgs_per_init: u64,
    seed: u64,
) -> Result<ErrorEstimate> {
    let base = init_stream(seed);
    let mut errors = 0u64;
    for i in 0..inits {
        let mut rng = base.derive(i);
        let state = SystemState::new(m, n, RxVariant::Awgn, PolicyConfig::default(), &mut rng)?;
        errors += evaluate_error_rate(&state, channel, msgs_per_init, &mut rng)?.errors;
    }
    ErrorEstimate::from_counts(errors, inits * msgs_per_init)
}
