//! The alternating training loop.
//!
//! Receiver phase: supervised cross-entropy on received symbols.
//! Transmitter phase: the transmitter explores with the Gaussian policy and
//! updates from the per-example losses alone. The channel is reached only
//! through [`BlackBoxChannel::transmit`].

use crate::channels::BlackBoxChannel;
use crate::error::Result;
use crate::ndcore::{adam_step, softmax_ce_backward};
use crate::policy::{estimate_tx_gradient, policy_sample};
use crate::transceiver::{ce_per_example, count_errors, hard_decision};

use super::feedback::FeedbackMessage;
use super::source::training_source;
use super::state::{StepStats, SystemState, TraceRow, TrainSchedule, TrainingRngs};

/// One receiver update on a fresh minibatch; the transmitter is untouched.
pub fn train_receiver_step(
    state: &mut SystemState,
    channel: &dyn BlackBoxChannel,
    batch: usize,
    lr: f64,
    rngs: &mut TrainingRngs,
) -> Result<StepStats> {
    let m = state.m();

    // Transmitter side.
    let msgs = training_source(&mut rngs.tx_source, batch, m);
    let (x, _) = state.tx.forward(&msgs)?;

    let y = channel.transmit(&x, &mut rngs.channel)?;

    // Receiver side: regenerates the labels from its own copy of the source.
    let labels = training_source(&mut rngs.rx_source, batch, m);
    let (probs, cache) = state.rx.forward(&y)?;
    let losses = ce_per_example(&probs, &labels)?;
    let mut d_logits = softmax_ce_backward(probs.tensor(), &labels)?;
    d_logits.scale(1.0 / batch as f64);
    let (grads, _) = state.rx.backward(&cache, &d_logits)?;
    adam_step(state.rx.params_mut(), &grads, &mut state.rx_opt, lr, &state.adam)?;
    state.counters.rx_steps += 1;

    Ok(StepStats {
        batch,
        errors: count_errors(&hard_decision(&probs), &labels),
        mean_loss: losses.mean(),
    })
}

/// One transmitter update from fed-back losses; the receiver is untouched.
pub fn train_transmitter_step(
    state: &mut SystemState,
    channel: &dyn BlackBoxChannel,
    batch: usize,
    lr: f64,
    rngs: &mut TrainingRngs,
) -> Result<StepStats> {
    let m = state.m();

    // Transmitter side: encode and explore.
    let msgs = training_source(&mut rngs.tx_source, batch, m);
    let (x, tx_cache) = state.tx.forward(&msgs)?;
    let sample = policy_sample(x, tx_cache, &state.policy, &mut rngs.exploration)?;

    let y = channel.transmit(&sample.x_p, &mut rngs.channel)?;

    // Receiver side: per-example losses, sent back over the feedback link.
    let labels = training_source(&mut rngs.rx_source, batch, m);
    let (probs, _) = state.rx.forward(&y)?;
    let losses = ce_per_example(&probs, &labels)?;
    let stats = StepStats {
        batch,
        errors: count_errors(&hard_decision(&probs), &labels),
        mean_loss: losses.mean(),
    };
    let wire = FeedbackMessage {
        sequence: state.counters.tx_steps,
        losses,
    }
    .encode();

    // Transmitter side again: only the decoded scalars are used.
    let feedback = FeedbackMessage::decode(&wire)?;
    let grads = estimate_tx_gradient(&state.tx, &feedback.losses, &sample, &state.policy)?;
    adam_step(state.tx.params_mut(), &grads, &mut state.tx_opt, lr, &state.adam)?;
    state.counters.tx_steps += 1;

    Ok(stats)
}

/// Runs `sched.main_iterations` main iterations, each made of
/// `rx_steps_per_main` receiver steps followed by `tx_steps_per_main`
/// transmitter steps. The trace row of an iteration reports the last
/// receiver minibatch (no exploration noise), or the last transmitter
/// minibatch when the iteration has no receiver step.
pub fn alternating_train(
    state: &mut SystemState,
    channel: &dyn BlackBoxChannel,
    sched: &TrainSchedule,
    rngs: &mut TrainingRngs,
) -> Result<Vec<TraceRow>> {
    state.validate()?;
    sched.validate()?;
    let mut trace = Vec::with_capacity(sched.main_iterations as usize);
    for _ in 0..sched.main_iterations {
        let mut rx_stats = None;
        for _ in 0..sched.rx_steps_per_main {
            rx_stats = Some(train_receiver_step(state, channel, sched.batch_rx, sched.lr_rx, rngs)?);
        }
        let mut tx_stats = None;
        for _ in 0..sched.tx_steps_per_main {
            tx_stats = Some(train_transmitter_step(state, channel, sched.batch_tx, sched.lr_tx, rngs)?);
        }
        state.counters.main_iterations += 1;
        if let Some(s) = rx_stats.or(tx_stats) {
            trace.push(TraceRow {
                iteration: state.counters.main_iterations,
                error_rate: s.error_rate(),
                mean_loss: s.mean_loss,
            });
        }
    }
    Ok(trace)
}
