//! Channel-model-free end-to-end training of a point-to-point communications
//! link.
//!
//! The receiver is trained by supervised cross-entropy; the transmitter is
//! trained by a Gaussian-policy gradient estimator that only consumes scalar
//! per-example losses fed back from the receiver. The fully supervised
//! autoencoder (backpropagation through a differentiable channel model) is
//! provided as a baseline.
//!
//! Layout:
//! - [`ndcore`]: tensors, dense layers, softmax, optimizers, finite differences
//! - [`signal`]: complex baseband packing, energy normalization, SNR, RNG streams
//! - [`transceiver`]: transmitter/receiver networks, loss, decisions, model files
//! - [`policy`]: exploration policy and the transmitter gradient estimator
//! - [`channels`]: black-box channels and differentiable adapters
//! - [`training`]: the alternating loop and the supervised baseline

pub mod channels;
pub mod error;
pub mod ndcore;
pub mod policy;
pub mod signal;
pub mod training;
pub mod transceiver;

pub use error::{Error, Result};
