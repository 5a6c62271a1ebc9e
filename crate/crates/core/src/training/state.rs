use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{AdamConfig, OptimizerState};
use crate::policy::PolicyConfig;
use crate::signal::{RngSnapshot, RngStream};
use crate::transceiver::{RxModel, RxVariant, TxModel};

/// Both networks, their optimizer states, the exploration policy, and how
/// far training has progressed.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub tx: TxModel,
    pub rx: RxModel,
    pub tx_opt: OptimizerState,
    pub rx_opt: OptimizerState,
    pub adam: AdamConfig,
    pub policy: PolicyConfig,
    pub counters: PhaseCounters,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounters {
    pub main_iterations: u64,
    pub rx_steps: u64,
    pub tx_steps: u64,
    pub joint_steps: u64,
}

impl SystemState {
    /// Freshly initialized networks drawn from `init`.
    pub fn new(m: usize, n: usize, variant: RxVariant, policy: PolicyConfig, init: &mut RngStream) -> Result<Self> {
        policy.validate()?;
        let tx = TxModel::new(m, n, init)?;
        let rx = RxModel::new(m, n, variant, init)?;
        Ok(Self::from_models(tx, rx, policy))
    }

    pub fn from_models(tx: TxModel, rx: RxModel, policy: PolicyConfig) -> Self {
        Self {
            tx_opt: OptimizerState::for_params(tx.params()),
            rx_opt: OptimizerState::for_params(rx.params()),
            tx,
            rx,
            adam: AdamConfig::default(),
            policy,
            counters: PhaseCounters::default(),
        }
    }

    pub fn m(&self) -> usize {
        self.tx.m()
    }

    pub fn n(&self) -> usize {
        self.tx.n()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tx.m() != self.rx.m() || self.tx.n() != self.rx.n() {
            return Err(Error::InvalidArgument(format!(
                "transmitter ({}, {}) and receiver ({}, {}) disagree on (M, N)",
                self.tx.m(),
                self.tx.n(),
                self.rx.m(),
                self.rx.n()
            )));
        }
        self.policy.validate()
    }
}

/// Knobs of one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub main_iterations: u64,
    pub rx_steps_per_main: u32,
    pub tx_steps_per_main: u32,
    pub batch_rx: usize,
    pub batch_tx: usize,
    pub lr_rx: f64,
    pub lr_tx: f64,
    pub snr_db: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            main_iterations: 500,
            rx_steps_per_main: 1,
            tx_steps_per_main: 1,
            batch_rx: 64,
            batch_tx: 64,
            lr_rx: 1e-3,
            lr_tx: 1e-3,
            snr_db: 10.0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch_rx == 0 || self.batch_tx == 0 {
            return Err(Error::InvalidArgument("batch sizes must be >= 1".into()));
        }
        for (name, lr) in [("lr_rx", self.lr_rx), ("lr_tx", self.lr_tx)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {lr}")));
            }
        }
        if self.rx_steps_per_main == 0 && self.tx_steps_per_main == 0 {
            return Err(Error::InvalidArgument("a main iteration needs at least one receiver or transmitter step".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidArgument("snr_db must be finite".into()));
        }
        Ok(())
    }
}

/// The random streams of one run. The transmitter and receiver message
/// sources are seeded identically, so both sides draw the same training
/// messages without exchanging them.
#[derive(Debug, Clone)]
pub struct TrainingRngs {
    pub tx_source: RngStream,
    pub rx_source: RngStream,
    pub exploration: RngStream,
    pub channel: RngStream,
}

pub const STREAM_INIT: u64 = 0;
pub const STREAM_SOURCE: u64 = 1;
pub const STREAM_EXPLORATION: u64 = 2;
pub const STREAM_CHANNEL: u64 = 3;
pub const STREAM_EVAL: u64 = 4;

impl TrainingRngs {
    pub fn from_seed(seed: u64) -> Self {
        let root = RngStream::new(seed);
        Self {
            tx_source: root.derive(STREAM_SOURCE),
            rx_source: root.derive(STREAM_SOURCE),
            exploration: root.derive(STREAM_EXPLORATION),
            channel: root.derive(STREAM_CHANNEL),
        }
    }

    pub fn snapshot(&self) -> RngsSnapshot {
        RngsSnapshot {
            tx_source: self.tx_source.snapshot(),
            rx_source: self.rx_source.snapshot(),
            exploration: self.exploration.snapshot(),
            channel: self.channel.snapshot(),
        }
    }

    pub fn restore(s: &RngsSnapshot) -> Self {
        Self {
            tx_source: RngStream::restore(s.tx_source),
            rx_source: RngStream::restore(s.rx_source),
            exploration: RngStream::restore(s.exploration),
            channel: RngStream::restore(s.channel),
        }
    }
}

/// Stream used to initialize the networks for a seed.
pub fn init_stream(seed: u64) -> RngStream {
    RngStream::new(seed).derive(STREAM_INIT)
}

/// Stream used for evaluation after training for a seed.
pub fn eval_stream(seed: u64) -> RngStream {
    RngStream::new(seed).derive(STREAM_EVAL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngsSnapshot {
    pub tx_source: RngSnapshot,
    pub rx_source: RngSnapshot,
    pub exploration: RngSnapshot,
    pub channel: RngSnapshot,
}

/// Per-main-iteration training metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// 1-based, counted from the first iteration of the state.
    pub iteration: u64,
    pub error_rate: f64,
    pub mean_loss: f64,
}

/// Errors and mean loss of one minibatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub batch: usize,
    pub errors: usize,
    pub mean_loss: f64,
}

impl StepStats {
    pub fn error_rate(&self) -> f64 {
        self.errors as f64 / self.batch as f64
    }
}
