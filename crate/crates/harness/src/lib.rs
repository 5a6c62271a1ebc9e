//! Experiment driver: configuration, evaluation, multi-seed convergence and
//! SNR-sweep experiments with CSV output, and the oracle suites behind
//! `e2ecomm selftest`.

pub mod config;
pub mod eval;
pub mod experiment;
pub mod oracles;

pub use config::{ConfigError, ExperimentConfig, Method, Overrides, TrainMethod};
pub use eval::{evaluate_error_rate, untrained_error_rate, ErrorEstimate};
pub use experiment::{run_convergence_experiment, run_snr_sweep, ConvergenceResult, SweepTable};
