//! Minimal differentiable compute core: the fixed layer set the transmitter
//! and receiver networks need, with hand-written backward passes.
//!
//! Gradients returned by backward passes are sums over the batch; losses
//! divide by the batch size.

mod gradcheck;
mod layers;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{compare_gradients, finite_diff_grad, finite_diff_vec, GradCheckReport, GradTolerance};
pub use layers::{
    dense_backward, dense_forward, elu, embedding_backward, embedding_forward, one_hot, softmax,
    softmax_ce_backward, softmax_into, Activation, DenseCache, DenseGrads, EmbeddingCache,
};
pub use optim::{adam_step, sgd_step, AdamConfig, OptimizerState};
pub use params::{glorot_uniform, ParamSet};
pub use tensor::RealTensor;
