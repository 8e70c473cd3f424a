//! `smoothctl`: train, evaluate, compare, verify, and plot smoothing-
//! regularizer experiments. Exit codes: 0 success, 1 runtime failure,
//! 2 usage or configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use smoothctl::config::{ConfigError, ExperimentConfig};
use smoothctl::evaluation::eval_checkpoint;
use smoothctl::runner::atomic_write;
use smoothctl::verify::{report_lines, verify_env, VerifyOptions};
use smoothctl::UsageError;
use smoothrl::env::Env;

#[derive(Parser)]
#[command(
    name = "smoothctl",
    version,
    about = "Training and evaluation harness for action-smoothing regularizers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per configured seed and write run artifacts
    Train {
        /// Experiment config file
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint with the deterministic mean policy
    Eval {
        /// Checkpoint JSON produced by `train`
        #[arg(short = 'k', long)]
        checkpoint: PathBuf,
        /// Experiment config declaring the environment
        #[arg(short, long)]
        config: PathBuf,
        /// Episode count (defaults to the config's evaluation section)
        #[arg(short = 'n', long)]
        episodes: Option<usize>,
        /// Base seed for episode resets (defaults to the config's value)
        #[arg(short, long)]
        seed: Option<u64>,
        /// Also write the JSON report to this path
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Aggregate run directories into a method-comparison table
    Compare {
        /// Config-level run directories (each holding per-seed subdirs)
        dirs: Vec<PathBuf>,
        /// Method label used as the smoothness baseline
        #[arg(long, default_value = "base")]
        baseline: String,
        /// Directory receiving comparison.csv and comparison.md
        #[arg(short, long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Check an environment's declared noise bounds by Monte-Carlo sampling
    Verify {
        /// Registered environment name (alternative to --config)
        env: Option<String>,
        /// Experiment config naming the environment and its parameters
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Number of anchor states
        #[arg(long, default_value_t = 100)]
        anchors: usize,
        /// Noisy successor samples per anchor
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Probe pairs for the composite-Lipschitz estimate
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        /// Seed for the verification sampling
        #[arg(short, long, default_value_t = 0)]
        seed: u64,
        /// Optional checkpoint whose mean policy drives the probe
        #[arg(short = 'k', long)]
        checkpoint: Option<PathBuf>,
    },
    /// Render SVG plots for a config-level run directory
    Plot {
        /// Config-level run directory (holding per-seed subdirs)
        dir: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::from_file(path)
        .map_err(|e| anyhow::anyhow!(UsageError::new(format!("{}: {e}", path.display()))))?;
    cfg.validate()
        .map_err(|e| anyhow::anyhow!(UsageError::new(format!("{}: {e}", path.display()))))?;
    Ok(cfg)
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Train { config } => {
            let cfg = load_config(&config)?;
            let records = smoothctl::runner::cmd_train(&cfg)?;
            let failed = records.iter().filter(|r| r.failed).count();
            if failed > 0 {
                eprintln!("{failed} of {} runs failed", records.len());
                return Ok(1);
            }
            Ok(0)
        }
        Command::Eval { checkpoint, config, episodes, seed, output } => {
            let cfg = load_config(&config)?;
            let n = episodes.unwrap_or(cfg.n_eval_episodes);
            let base = seed.unwrap_or(cfg.eval_seed_base);
            let report = eval_checkpoint(&checkpoint, &cfg, n, base)?;
            let json = serde_json::to_string_pretty(&report)?;
            println!("{json}");
            if let Some(path) = output {
                atomic_write(&path, format!("{json}\n").as_bytes())?;
            }
            Ok(0)
        }
        Command::Compare { dirs, baseline, out_dir } => {
            let comparison = smoothctl::compare::cmd_compare(&dirs, &baseline, &out_dir)?;
            print!("{}", smoothctl::compare::comparison_text(&comparison));
            Ok(0)
        }
        Command::Verify { env, config, anchors, samples, pairs, seed, checkpoint } => {
            let (name, params) = match (env, config) {
                (Some(name), None) => (name, Vec::new()),
                (None, Some(path)) => {
                    let cfg = load_config(&path)?;
                    (cfg.env_name, cfg.env_params)
                }
                _ => {
                    return Err(UsageError::new(
                        "verify takes exactly one of an environment name or --config",
                    )
                    .into())
                }
            };
            let mut env = Env::from_name(&name, &params, 0)
                .map_err(|e| anyhow::anyhow!(UsageError::new(e.to_string())))?;
            let opts = VerifyOptions { anchors, samples, pairs, seed };
            let report = verify_env(&mut env, checkpoint.as_deref(), &opts)?;
            for line in report_lines(&report) {
                println!("{line}");
            }
            Ok(if report.passed { 0 } else { 1 })
        }
        Command::Plot { dir } => {
            for path in smoothctl::plot::cmd_plot(&dir)? {
                println!("wrote {}", path.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<UsageError>().is_some()
                || e.downcast_ref::<ConfigError>().is_some();
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
