//! Training loops: alternating receiver/transmitter training over a
//! black-box channel, and the supervised end-to-end baseline over a
//! differentiable channel model.

mod alternating;
mod checkpoint;
mod feedback;
mod source;
mod state;
mod supervised;

pub use alternating::{alternating_train, train_receiver_step, train_transmitter_step};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_FORMAT_VERSION};
pub use feedback::FeedbackMessage;
pub use source::training_source;
pub use state::{
    eval_stream, init_stream, PhaseCounters, RngsSnapshot, StepStats, SystemState, TraceRow, TrainSchedule,
    TrainingRngs, STREAM_CHANNEL, STREAM_EVAL, STREAM_EXPLORATION, STREAM_INIT, STREAM_SOURCE,
};
pub use supervised::{joint_gradients, supervised_step, supervised_train, JointGradients};

#[cfg(test)]
mod tests;
