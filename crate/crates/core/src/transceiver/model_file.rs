//! Versioned JSON record of one network: dimensions, receiver variant, and
//! the named parameter tensors. Floats are written in shortest round-trip
//! form, so a load/save cycle is lossless and byte-stable.

use serde::{Deserialize, Serialize};

use super::{RxModel, RxVariant, TxModel};
use crate::error::{Error, Result};
use crate::ndcore::ParamSet;

pub const MODEL_FORMAT: &str = "e2ecomm-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelRole {
    Transmitter,
    Receiver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub format: String,
    pub version: u32,
    pub role: ModelRole,
    pub m: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<RxVariant>,
    pub params: ParamSet,
}

impl ModelRecord {
    fn check_header(&self, role: ModelRole) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Format(format!("unexpected format tag `{}`", self.format)));
        }
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", self.version)));
        }
        if self.role != role {
            return Err(Error::Format(format!("expected a {role:?} record, found {:?}", self.role)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model records always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }
}

impl From<&TxModel> for ModelRecord {
    fn from(tx: &TxModel) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            role: ModelRole::Transmitter,
            m: tx.m(),
            n: tx.n(),
            variant: None,
            params: tx.params().clone(),
        }
    }
}

impl From<&RxModel> for ModelRecord {
    fn from(rx: &RxModel) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            role: ModelRole::Receiver,
            m: rx.m(),
            n: rx.n(),
            variant: Some(rx.variant()),
            params: rx.params().clone(),
        }
    }
}

impl TryFrom<ModelRecord> for TxModel {
    type Error = Error;

    fn try_from(rec: ModelRecord) -> Result<Self> {
        rec.check_header(ModelRole::Transmitter)?;
        TxModel::from_params(rec.m, rec.n, rec.params)
    }
}

impl TryFrom<ModelRecord> for RxModel {
    type Error = Error;

    fn try_from(rec: ModelRecord) -> Result<Self> {
        rec.check_header(ModelRole::Receiver)?;
        let variant = rec
            .variant
            .ok_or_else(|| Error::Format("receiver record without variant".into()))?;
        RxModel::from_params(rec.m, rec.n, variant, rec.params)
    }
}
