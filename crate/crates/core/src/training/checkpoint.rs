use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{AdamConfig, OptimizerState};
use crate::policy::PolicyConfig;
use crate::transceiver::{ModelRecord, RxModel, TxModel};

use super::state::{PhaseCounters, RngsSnapshot, SystemState, TrainingRngs};

pub const CHECKPOINT_FORMAT: &str = "e2ecomm-checkpoint";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Everything needed to continue a run bit-for-bit: both networks, their
/// optimizer moments, the policy, the phase counters, and the RNG positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub tx: ModelRecord,
    pub rx: ModelRecord,
    pub tx_opt: OptimizerState,
    pub rx_opt: OptimizerState,
    pub adam: AdamConfig,
    pub policy: PolicyConfig,
    pub counters: PhaseCounters,
    pub rngs: RngsSnapshot,
}

impl Checkpoint {
    pub fn capture(state: &SystemState, rngs: &TrainingRngs) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_FORMAT_VERSION,
            tx: ModelRecord::from(&state.tx),
            rx: ModelRecord::from(&state.rx),
            tx_opt: state.tx_opt.clone(),
            rx_opt: state.rx_opt.clone(),
            adam: state.adam,
            policy: state.policy,
            counters: state.counters,
            rngs: rngs.snapshot(),
        }
    }

    pub fn restore(self) -> Result<(SystemState, TrainingRngs)> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint {} v{}", self.format, self.version)));
        }
        let tx = TxModel::try_from(self.tx)?;
        let rx = RxModel::try_from(self.rx)?;
        tx.params().check_congruent(&self.tx_opt.first)?;
        tx.params().check_congruent(&self.tx_opt.second)?;
        rx.params().check_congruent(&self.rx_opt.first)?;
        rx.params().check_congruent(&self.rx_opt.second)?;
        let state = SystemState {
            tx,
            rx,
            tx_opt: self.tx_opt,
            rx_opt: self.rx_opt,
            adam: self.adam,
            policy: self.policy,
            counters: self.counters,
        };
        state.validate()?;
        Ok((state, TrainingRngs::restore(&self.rngs)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoints always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("checkpoint: {e}")))
    }
}
