//! Experiment configuration: a flat TOML table. Every key is optional and
//! falls back to the defaults below; unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use e2ecomm_core::channels::ChannelKind;
use e2ecomm_core::policy::PolicyConfig;
use e2ecomm_core::training::TrainSchedule;
use e2ecomm_core::transceiver::{RxVariant, DEFAULT_HEAD_WIDTH};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Alternating,
    Supervised,
    Both,
}

impl Method {
    /// Individual training methods, supervised first (CSV column order).
    pub fn expand(self) -> Vec<TrainMethod> {
        match self {
            Method::Alternating => vec![TrainMethod::Alternating],
            Method::Supervised => vec![TrainMethod::Supervised],
            Method::Both => vec![TrainMethod::Supervised, TrainMethod::Alternating],
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "alternating" => Ok(Method::Alternating),
            "supervised" => Ok(Method::Supervised),
            "both" => Ok(Method::Both),
            other => Err(format!("unknown method `{other}` (expected alternating, supervised or both)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMethod {
    Supervised,
    Alternating,
}

impl TrainMethod {
    /// Column suffix used in the CSV outputs.
    pub fn tag(self) -> &'static str {
        match self {
            TrainMethod::Supervised => "sl",
            TrainMethod::Alternating => "rl",
        }
    }
}

impl fmt::Display for TrainMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMethod::Supervised => "supervised",
            TrainMethod::Alternating => "alternating",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub channels: Vec<ChannelKind>,
    pub method: Method,

    pub main_iterations: u64,
    pub rx_steps_per_main: u32,
    pub tx_steps_per_main: u32,
    pub batch_rx: usize,
    pub batch_tx: usize,
    pub lr_rx: f64,
    pub lr_tx: f64,

    pub policy_variance: f64,
    pub policy_baseline: bool,
    pub rbf_head_width: usize,

    /// Training SNR per channel kind, in dB.
    pub awgn_train_snr_db: f64,
    pub rbf_train_snr_db: f64,
    pub quantizer_train_snr_db: f64,

    /// Evaluation SNR grids per channel kind, in dB, strictly increasing.
    pub awgn_eval_snr_db: Vec<f64>,
    pub rbf_eval_snr_db: Vec<f64>,
    pub quantizer_eval_snr_db: Vec<f64>,
    pub eval_messages: u64,

    /// Explicit seed list; when absent, seeds are `0..seed_count`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    pub seed_count: u64,

    /// Output directory and worker count do not influence any result, so
    /// they are left out of the serialized (hashed) form.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    #[serde(skip_serializing)]
    pub threads: usize,
}

fn grid(lo: i32, hi: i32, step: i32) -> Vec<f64> {
    (lo..=hi).step_by(step as usize).map(f64::from).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sched = TrainSchedule::default();
        Self {
            m: 256,
            n: 4,
            channels: vec![ChannelKind::Awgn],
            method: Method::Both,
            main_iterations: sched.main_iterations,
            rx_steps_per_main: sched.rx_steps_per_main,
            tx_steps_per_main: sched.tx_steps_per_main,
            batch_rx: sched.batch_rx,
            batch_tx: sched.batch_tx,
            lr_rx: sched.lr_rx,
            lr_tx: sched.lr_tx,
            policy_variance: PolicyConfig::default().variance,
            policy_baseline: false,
            rbf_head_width: DEFAULT_HEAD_WIDTH,
            awgn_train_snr_db: 10.0,
            rbf_train_snr_db: 20.0,
            quantizer_train_snr_db: 10.0,
            awgn_eval_snr_db: grid(-4, 16, 2),
            rbf_eval_snr_db: grid(0, 20, 2),
            quantizer_eval_snr_db: grid(-4, 16, 2),
            eval_messages: 100_000,
            seeds: None,
            seed_count: 20,
            out_dir: PathBuf::from("out"),
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.m < 2 {
            return Err(invalid("m", format!("must be >= 2, got {}", self.m)));
        }
        if self.n < 1 {
            return Err(invalid("n", "must be >= 1"));
        }
        if self.channels.is_empty() {
            return Err(invalid("channels", "must name at least one channel"));
        }
        let mut sorted = self.channels.clone();
        sorted.sort_by_key(|c| c.name());
        sorted.dedup();
        if sorted.len() != self.channels.len() {
            return Err(invalid("channels", "contains duplicates"));
        }
        if self.method != Method::Alternating && self.channels.contains(&ChannelKind::Quantizer) {
            return Err(invalid(
                "method",
                "supervised training needs a differentiable channel model, which the quantizer does not have",
            ));
        }
        if self.rx_steps_per_main == 0 && self.tx_steps_per_main == 0 {
            return Err(invalid("rx_steps_per_main", "and tx_steps_per_main cannot both be 0"));
        }
        if self.batch_rx == 0 {
            return Err(invalid("batch_rx", "must be >= 1"));
        }
        if self.batch_tx == 0 {
            return Err(invalid("batch_tx", "must be >= 1"));
        }
        for (field, lr) in [("lr_rx", self.lr_rx), ("lr_tx", self.lr_tx)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(invalid(field, format!("must be a finite value > 0, got {lr}")));
            }
        }
        if !(self.policy_variance > 0.0 && self.policy_variance < 1.0) {
            return Err(invalid("policy_variance", format!("must lie in (0, 1), got {}", self.policy_variance)));
        }
        if self.rbf_head_width == 0 {
            return Err(invalid("rbf_head_width", "must be >= 1"));
        }
        for (field, snr) in [
            ("awgn_train_snr_db", self.awgn_train_snr_db),
            ("rbf_train_snr_db", self.rbf_train_snr_db),
            ("quantizer_train_snr_db", self.quantizer_train_snr_db),
        ] {
            if !snr.is_finite() {
                return Err(invalid(field, "must be finite"));
            }
        }
        for (field, g) in [
            ("awgn_eval_snr_db", &self.awgn_eval_snr_db),
            ("rbf_eval_snr_db", &self.rbf_eval_snr_db),
            ("quantizer_eval_snr_db", &self.quantizer_eval_snr_db),
        ] {
            if g.is_empty() {
                return Err(invalid(field, "must contain at least one SNR"));
            }
            if g.iter().any(|s| !s.is_finite()) || g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid(field, "must be finite and strictly increasing"));
            }
        }
        if self.eval_messages == 0 {
            return Err(invalid("eval_messages", "must be >= 1"));
        }
        match &self.seeds {
            Some(s) if s.is_empty() => return Err(invalid("seeds", "must not be empty")),
            None if self.seed_count == 0 => return Err(invalid("seed_count", "must be >= 1")),
            _ => {}
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.seed_count).collect(),
        }
    }

    pub fn methods(&self) -> Vec<TrainMethod> {
        self.method.expand()
    }

    pub fn schedule(&self, channel: ChannelKind) -> TrainSchedule {
        TrainSchedule {
            main_iterations: self.main_iterations,
            rx_steps_per_main: self.rx_steps_per_main,
            tx_steps_per_main: self.tx_steps_per_main,
            batch_rx: self.batch_rx,
            batch_tx: self.batch_tx,
            lr_rx: self.lr_rx,
            lr_tx: self.lr_tx,
            snr_db: self.train_snr_db(channel),
        }
    }

    pub fn policy(&self) -> PolicyConfig {
        PolicyConfig {
            variance: self.policy_variance,
            baseline: self.policy_baseline,
        }
    }

    /// The RBF channel gets the receiver with the channel-estimation head.
    pub fn rx_variant(&self, channel: ChannelKind) -> RxVariant {
        match channel {
            ChannelKind::Rbf => RxVariant::Rbf {
                head_width: self.rbf_head_width,
            },
            ChannelKind::Awgn | ChannelKind::Quantizer => RxVariant::Awgn,
        }
    }

    pub fn train_snr_db(&self, channel: ChannelKind) -> f64 {
        match channel {
            ChannelKind::Awgn => self.awgn_train_snr_db,
            ChannelKind::Rbf => self.rbf_train_snr_db,
            ChannelKind::Quantizer => self.quantizer_train_snr_db,
        }
    }

    pub fn eval_grid(&self, channel: ChannelKind) -> &[f64] {
        match channel {
            ChannelKind::Awgn => &self.awgn_eval_snr_db,
            ChannelKind::Rbf => &self.rbf_eval_snr_db,
            ChannelKind::Quantizer => &self.quantizer_eval_snr_db,
        }
    }

    /// Canonical TOML of every result-relevant knob, with seeds resolved.
    pub fn canonical_toml(&self) -> String {
        let mut resolved = self.clone();
        resolved.seeds = Some(self.seed_list());
        toml::to_string(&resolved).expect("configs always serialize")
    }

    /// SHA-256 of [`Self::canonical_toml`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_toml().as_bytes()))
    }
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed_count: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub method: Option<Method>,
    pub channel: Option<ChannelKind>,
    pub threads: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), ConfigError> {
        if let Some(k) = self.seed_count {
            cfg.seed_count = k;
            cfg.seeds = None;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(c) = self.channel {
            cfg.channels = vec![c];
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        cfg.validate()
    }
}
