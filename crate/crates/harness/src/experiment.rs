//! Multi-seed experiments. Every (channel, method, seed) cell trains from
//! its own derived RNG streams, so cells run in parallel and the assembled
//! results do not depend on the worker count.

use std::fmt::Write as _;

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;

use e2ecomm_core::channels::ChannelKind;
use e2ecomm_core::signal::{snr_db_to_noise_variance, RNG_ALGORITHM};
use e2ecomm_core::training::{
    alternating_train, eval_stream, init_stream, supervised_train, SystemState, TraceRow, TrainingRngs,
};

use crate::config::{ExperimentConfig, TrainMethod};
use crate::eval::{evaluate_error_rate, ErrorEstimate};

/// Result of training one cell.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub channel: ChannelKind,
    pub method: TrainMethod,
    pub seed: u64,
    pub state: SystemState,
    pub rngs: TrainingRngs,
    pub trace: Vec<TraceRow>,
}

/// Trains one cell from scratch.
pub fn train_cell(cfg: &ExperimentConfig, channel: ChannelKind, method: TrainMethod, seed: u64) -> Result<TrainedRun> {
    let sched = cfg.schedule(channel);
    let noise_variance = snr_db_to_noise_variance(sched.snr_db);
    let mut state = SystemState::new(cfg.m, cfg.n, cfg.rx_variant(channel), cfg.policy(), &mut init_stream(seed))?;
    let mut rngs = TrainingRngs::from_seed(seed);
    let trace = match method {
        TrainMethod::Alternating => {
            alternating_train(&mut state, channel.black_box(noise_variance).as_ref(), &sched, &mut rngs)?
        }
        TrainMethod::Supervised => {
            let model = channel
                .differentiable(noise_variance)
                .ok_or_else(|| anyhow!("channel `{}` has no differentiable model", channel.name()))?;
            supervised_train(&mut state, model.as_ref(), &sched, &mut rngs)?
        }
    };
    Ok(TrainedRun {
        channel,
        method,
        seed,
        state,
        rngs,
        trace,
    })
}

/// Runs `f` on a pool of `threads` workers (0 = one per core).
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")?;
    Ok(pool.install(f))
}

fn cells(cfg: &ExperimentConfig) -> Vec<(ChannelKind, TrainMethod, u64)> {
    let seeds = cfg.seed_list();
    let mut out = Vec::new();
    for &ch in &cfg.channels {
        for method in cfg.methods() {
            out.extend(seeds.iter().map(|&s| (ch, method, s)));
        }
    }
    out
}

/// Training traces of one (channel, method) pair, one per seed.
#[derive(Debug, Clone)]
pub struct Series {
    pub channel: ChannelKind,
    pub method: TrainMethod,
    pub seeds: Vec<u64>,
    pub traces: Vec<Vec<TraceRow>>,
}

impl Series {
    /// Error rate at 0-based iteration `i` for every seed.
    pub fn errors_at(&self, i: usize) -> Vec<f64> {
        self.traces.iter().map(|t| t[i].error_rate).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    pub series: Vec<Series>,
    pub iterations: usize,
}

impl ConvergenceResult {
    pub fn get(&self, channel: ChannelKind, method: TrainMethod) -> Option<&Series> {
        self.series.iter().find(|s| s.channel == channel && s.method == method)
    }

    /// Series grouped by channel, in config order.
    fn by_channel(&self) -> Vec<Vec<&Series>> {
        let mut groups: Vec<Vec<&Series>> = Vec::new();
        for s in &self.series {
            match groups.last_mut() {
                Some(g) if g[0].channel == s.channel => g.push(s),
                _ => groups.push(vec![s]),
            }
        }
        groups
    }

    /// `iterations`, then per channel the mean of every method followed by
    /// the standard deviation of every method.
    pub fn header(&self) -> Vec<String> {
        let mut cols = vec!["iterations".to_string()];
        for g in self.by_channel() {
            cols.extend(g.iter().map(|s| format!("{}_{}", s.channel.name(), s.method.tag())));
            cols.extend(g.iter().map(|s| format!("{}_{}_std", s.channel.name(), s.method.tag())));
        }
        cols
    }

    pub fn to_csv(&self, cfg: &ExperimentConfig) -> Result<String> {
        let groups = self.by_channel();
        let rows: Vec<Vec<String>> = (0..self.iterations)
            .map(|i| {
                let mut row = vec![(i + 1).to_string()];
                for g in &groups {
                    let stats: Vec<(f64, f64)> = g.iter().map(|s| mean_std(&s.errors_at(i))).collect();
                    row.extend(stats.iter().map(|(mean, _)| mean.to_string()));
                    row.extend(stats.iter().map(|(_, std)| std.to_string()));
                }
                row
            })
            .collect();
        write_csv("convergence", cfg, &self.header(), &rows)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

pub fn run_convergence_experiment(cfg: &ExperimentConfig) -> Result<ConvergenceResult> {
    cfg.validate()?;
    let cells = cells(cfg);
    let runs: Vec<Vec<TraceRow>> = with_pool(cfg.threads, || {
        cells
            .par_iter()
            .map(|&(ch, method, seed)| train_cell(cfg, ch, method, seed).map(|r| r.trace))
            .collect::<Result<Vec<_>>>()
    })??;

    let seeds = cfg.seed_list();
    let mut series = Vec::new();
    let mut chunks = runs.chunks(seeds.len());
    for &ch in &cfg.channels {
        for method in cfg.methods() {
            let traces = chunks.next().expect("one chunk per series").to_vec();
            series.push(Series {
                channel: ch,
                method,
                seeds: seeds.clone(),
                traces,
            });
        }
    }
    Ok(ConvergenceResult {
        series,
        iterations: cfg.main_iterations as usize,
    })
}

/// Evaluation results of one channel: `rates[method][seed][snr]`.
#[derive(Debug, Clone)]
pub struct SweepTable {
    pub channel: ChannelKind,
    pub snr_db: Vec<f64>,
    pub methods: Vec<TrainMethod>,
    pub seeds: Vec<u64>,
    pub rates: Vec<Vec<Vec<ErrorEstimate>>>,
}

impl SweepTable {
    /// Median error rate across seeds at every grid point.
    pub fn median_rates(&self, method: TrainMethod) -> Option<Vec<f64>> {
        let k = self.methods.iter().position(|&m| m == method)?;
        Some(
            (0..self.snr_db.len())
                .map(|j| median(&self.rates[k].iter().map(|per_snr| per_snr[j].rate).collect::<Vec<_>>()))
                .collect(),
        )
    }

    pub fn header(&self) -> Vec<String> {
        let mut cols = vec!["snr".to_string()];
        cols.extend(self.methods.iter().map(|m| m.tag().to_string()));
        cols
    }

    pub fn to_csv(&self, cfg: &ExperimentConfig) -> Result<String> {
        let medians: Vec<Vec<f64>> = self.methods.iter().map(|&m| self.median_rates(m).unwrap()).collect();
        let rows: Vec<Vec<String>> = self
            .snr_db
            .iter()
            .enumerate()
            .map(|(j, snr)| {
                let mut row = vec![snr.to_string()];
                row.extend(medians.iter().map(|m| m[j].to_string()));
                row
            })
            .collect();
        write_csv(&format!("sweep {}", self.channel.name()), cfg, &self.header(), &rows)
    }
}

/// Evaluates a trained state over `grid`. Grid point `j` uses the stream
/// `eval(seed).derive(j)`, so every method sees the same messages and noise.
pub fn evaluate_grid(
    state: &SystemState,
    channel: ChannelKind,
    grid: &[f64],
    n_msgs: u64,
    seed: u64,
) -> Result<Vec<ErrorEstimate>> {
    let base = eval_stream(seed);
    grid.iter()
        .enumerate()
        .map(|(j, &snr)| {
            let ch = channel.black_box(snr_db_to_noise_variance(snr));
            Ok(evaluate_error_rate(state, ch.as_ref(), n_msgs, &mut base.derive(j as u64))?)
        })
        .collect()
}

pub fn run_snr_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepTable>> {
    cfg.validate()?;
    let cells = cells(cfg);
    let evals: Vec<Vec<ErrorEstimate>> = with_pool(cfg.threads, || {
        cells
            .par_iter()
            .map(|&(ch, method, seed)| {
                let run = train_cell(cfg, ch, method, seed)?;
                evaluate_grid(&run.state, ch, cfg.eval_grid(ch), cfg.eval_messages, seed)
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let seeds = cfg.seed_list();
    let methods = cfg.methods();
    let mut chunks = evals.chunks(seeds.len());
    Ok(cfg
        .channels
        .iter()
        .map(|&ch| SweepTable {
            channel: ch,
            snr_db: cfg.eval_grid(ch).to_vec(),
            methods: methods.clone(),
            seeds: seeds.clone(),
            rates: methods.iter().map(|_| chunks.next().expect("one chunk per method").to_vec()).collect(),
        })
        .collect())
}

/// `#`-prefixed provenance lines: what was run, the config hash, the seeds,
/// the RNG, the conventions that define the numbers, and the full config.
pub fn metadata_header(kind: &str, cfg: &ExperimentConfig) -> String {
    let seeds: Vec<String> = cfg.seed_list().iter().map(u64::to_string).collect();
    let mut out = String::new();
    let _ = writeln!(out, "# e2ecomm {kind}");
    let _ = writeln!(out, "# config_sha256 = {}", cfg.hash());
    let _ = writeln!(out, "# seeds = {}", seeds.join(","));
    let _ = writeln!(out, "# rng = {RNG_ALGORITHM}");
    let _ = writeln!(out, "# error_rate = message error rate, argmax decision");
    let _ = writeln!(out, "# iteration = alternating: rx_steps_per_main receiver + tx_steps_per_main transmitter steps; supervised: one joint step");
    let _ = writeln!(out, "# training_error = hard decisions on the iteration's last receiver (or joint) minibatch");
    let _ = writeln!(out, "# std = population standard deviation across seeds");
    let _ = writeln!(out, "# sweep_rate = median across seeds; evaluation without exploration noise");
    let _ = writeln!(out, "# energy_normalization = per message");
    for line in cfg.canonical_toml().lines().filter(|l| !l.is_empty()) {
        let _ = writeln!(out, "# {line}");
    }
    out
}

fn write_csv(kind: &str, cfg: &ExperimentConfig, header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(metadata_header(kind, cfg).into_bytes());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("flushing csv: {e}"))?;
    Ok(String::from_utf8(bytes)?)
}
