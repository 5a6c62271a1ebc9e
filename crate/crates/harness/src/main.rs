use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use e2ecomm_core::channels::ChannelKind;
use e2ecomm_core::signal::snr_db_to_noise_variance;
use e2ecomm_core::training::{eval_stream, Checkpoint};
use e2ecomm_harness::experiment::{train_cell, with_pool};
use e2ecomm_harness::oracles::selftest;
use e2ecomm_harness::{
    evaluate_error_rate, run_convergence_experiment, run_snr_sweep, ExperimentConfig, Method, Overrides,
};

#[derive(Debug, Parser)]
#[command(name = "e2ecomm", version, about = "Train and evaluate learned communication links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train every (channel, method, seed) cell; write checkpoints and traces
    Train(Common),
    /// Evaluate a checkpoint at one SNR
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluation SNR in dB (default: the channel's training SNR)
        #[arg(long)]
        snr_db: Option<f64>,
        /// Seed of the evaluation stream
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Error rate during training, mean and std across seeds
    Convergence(Common),
    /// Error rate against SNR after training, median across seeds
    Sweep(Common),
    /// Run the gradient, estimator and energy oracle suites
    Selftest {
        #[arg(long, default_value_t = 2018)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed_count: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long, value_parser = parse_channel)]
    channel: Option<ChannelKind>,
    /// Worker threads (0 = one per core)
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn parse_channel(s: &str) -> Result<ChannelKind, String> {
    s.parse().map_err(|e: e2ecomm_core::Error| e.to_string())
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        Overrides {
            seed_count: self.seed_count,
            out_dir: self.out.clone(),
            method: self.method,
            channel: self.channel,
            threads: self.threads,
        }
        .apply(&mut cfg)?;
        Ok(cfg)
    }
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn train(cfg: &ExperimentConfig) -> Result<()> {
    use rayon::prelude::*;
    let mut cells = Vec::new();
    for &ch in &cfg.channels {
        for method in cfg.methods() {
            cells.extend(cfg.seed_list().into_iter().map(|s| (ch, method, s)));
        }
    }
    let runs = with_pool(cfg.threads, || {
        cells
            .par_iter()
            .map(|&(ch, method, seed)| train_cell(cfg, ch, method, seed))
            .collect::<Result<Vec<_>>>()
    })??;
    for run in runs {
        let stem = format!("{}_{}_seed{}", run.channel.name(), run.method, run.seed);
        let ckpt = Checkpoint::capture(&run.state, &run.rngs);
        write_out(&cfg.out_dir, &format!("{stem}.checkpoint.json"), &ckpt.to_json())?;
        let mut csv = String::from("iteration,error_rate,mean_loss\n");
        for r in &run.trace {
            csv.push_str(&format!("{},{},{}\n", r.iteration, r.error_rate, r.mean_loss));
        }
        write_out(&cfg.out_dir, &format!("{stem}.trace.csv"), &csv)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(common) => train(&common.resolve()?)?,
        Command::Eval {
            common,
            checkpoint,
            snr_db,
            seed,
        } => {
            let cfg = common.resolve()?;
            let [channel] = cfg.channels[..] else {
                bail!("eval needs exactly one channel (use --channel)");
            };
            let text = fs::read_to_string(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
            let (state, _) = Checkpoint::from_json(&text)?.restore()?;
            if (state.m(), state.n()) != (cfg.m, cfg.n) {
                bail!("checkpoint has (M, N) = ({}, {}), config says ({}, {})", state.m(), state.n(), cfg.m, cfg.n);
            }
            let snr = snr_db.unwrap_or(cfg.train_snr_db(channel));
            let ch = channel.black_box(snr_db_to_noise_variance(snr));
            let est = evaluate_error_rate(&state, ch.as_ref(), cfg.eval_messages, &mut eval_stream(seed))?;
            println!("{}", serde_json::to_string(&est)?);
        }
        Command::Convergence(common) => {
            let cfg = common.resolve()?;
            let result = run_convergence_experiment(&cfg)?;
            write_out(&cfg.out_dir, "convergence.csv", &result.to_csv(&cfg)?)?;
        }
        Command::Sweep(common) => {
            let cfg = common.resolve()?;
            for table in run_snr_sweep(&cfg)? {
                write_out(&cfg.out_dir, &format!("sweep_{}.csv", table.channel.name()), &table.to_csv(&cfg)?)?;
            }
        }
        Command::Selftest { seed } => {
            let outcomes = selftest(seed)?;
            let mut ok = true;
            for o in &outcomes {
                println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
                ok &= o.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
