//! Fully supervised end-to-end baseline: cross-entropy is backpropagated
//! through the receiver, a differentiable channel model, and the
//! transmitter, and both networks are updated jointly.

use crate::channels::DifferentiableChannel;
use crate::error::Result;
use crate::ndcore::{adam_step, softmax_ce_backward, ParamSet};
use crate::signal::RngStream;
use crate::transceiver::{
    ce_per_example, count_errors, hard_decision, LossVector, MessageId, ProbBatch, RxModel, TxModel,
};

use super::source::training_source;
use super::state::{StepStats, SystemState, TraceRow, TrainSchedule, TrainingRngs};

/// Gradients of both networks, and the forward results, for one minibatch
/// whose channel realization is drawn from `channel_rng`.
pub struct JointGradients {
    pub tx: ParamSet,
    pub rx: ParamSet,
    pub probs: ProbBatch,
    pub losses: LossVector,
}

pub fn joint_gradients(
    tx: &TxModel,
    rx: &RxModel,
    channel: &dyn DifferentiableChannel,
    msgs: &[MessageId],
    labels: &[MessageId],
    channel_rng: &mut RngStream,
) -> Result<JointGradients> {
    let (x, tx_cache) = tx.forward(msgs)?;
    let (y, ch_cache) = channel.transmit_diff(&x, channel_rng)?;
    let (probs, rx_cache) = rx.forward(&y)?;
    let losses = ce_per_example(&probs, labels)?;

    let mut d_logits = softmax_ce_backward(probs.tensor(), labels)?;
    d_logits.scale(1.0 / labels.len() as f64);
    let (rx_grads, d_y) = rx.backward(&rx_cache, &d_logits)?;
    let d_x = channel.backward(&ch_cache, &d_y)?;
    let tx_grads = tx.backward(&tx_cache, &d_x)?;
    Ok(JointGradients {
        tx: tx_grads,
        rx: rx_grads,
        probs,
        losses,
    })
}

/// One joint update of both networks on a minibatch of `batch` messages.
pub fn supervised_step(
    state: &mut SystemState,
    channel: &dyn DifferentiableChannel,
    batch: usize,
    lr_tx: f64,
    lr_rx: f64,
    rngs: &mut TrainingRngs,
) -> Result<StepStats> {
    let m = state.m();
    let msgs = training_source(&mut rngs.tx_source, batch, m);
    let labels = training_source(&mut rngs.rx_source, batch, m);
    let g = joint_gradients(&state.tx, &state.rx, channel, &msgs, &labels, &mut rngs.channel)?;

    adam_step(state.rx.params_mut(), &g.rx, &mut state.rx_opt, lr_rx, &state.adam)?;
    adam_step(state.tx.params_mut(), &g.tx, &mut state.tx_opt, lr_tx, &state.adam)?;
    state.counters.joint_steps += 1;

    Ok(StepStats {
        batch,
        errors: count_errors(&hard_decision(&g.probs), &labels),
        mean_loss: g.losses.mean(),
    })
}

/// `sched.main_iterations` joint steps with minibatch size `sched.batch_rx`.
pub fn supervised_train(
    state: &mut SystemState,
    channel: &dyn DifferentiableChannel,
    sched: &TrainSchedule,
    rngs: &mut TrainingRngs,
) -> Result<Vec<TraceRow>> {
    state.validate()?;
    sched.validate()?;
    let mut trace = Vec::with_capacity(sched.main_iterations as usize);
    for _ in 0..sched.main_iterations {
        let s = supervised_step(state, channel, sched.batch_rx, sched.lr_tx, sched.lr_rx, rngs)?;
        state.counters.main_iterations += 1;
        trace.push(TraceRow {
            iteration: state.counters.main_iterations,
            error_rate: s.error_rate(),
            mean_loss: s.mean_loss,
        });
    }
    Ok(trace)
}
