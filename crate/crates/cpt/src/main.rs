//! Command-line harness: schedule evaluation, training runs, metric reports,
//! and schedule comparisons, all driven by one config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cpt::config::ExperimentConfig;
use cpt::metrics::BwtConvention;
use cpt::runner;
use cpt::schedule::AnnealConvention;
use cpt::Result;

#[derive(Parser)]
#[command(name = "cpt", version, about = "Continual pre-training schedule harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (sectioned key = value); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's seed list (comma separated).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    seed: Option<Vec<u64>>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Annealing exponent convention: normalized | paper-literal.
    #[arg(long)]
    anneal_convention: Option<String>,
    /// Overall-BWT reference convention: paper-literal | diagonal.
    #[arg(long)]
    bwt_convention: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the configured schedule and write schedule.csv.
    Schedule(CommonArgs),
    /// Train every seed and write one artifact directory per seed.
    Run(CommonArgs),
    /// Recompute the metric report from a persisted matrix file.
    Metrics {
        #[command(flatten)]
        common: CommonArgs,
        /// Accuracy matrix file, in the matrix.txt format.
        #[arg(long)]
        matrix: PathBuf,
        /// Random-init baseline accuracies (comma or newline separated).
        #[arg(long)]
        baselines: Option<PathBuf>,
    },
    /// Run every configured schedule variant and summarize per-seed metrics.
    Compare(CommonArgs),
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::parse(&fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seeds) = &common.seed {
        cfg.seeds = seeds.clone();
    }
    if let Some(out) = &common.out {
        cfg.out = out.display().to_string();
    }
    if let Some(s) = &common.anneal_convention {
        cfg.anneal_convention = AnnealConvention::parse(s)?;
    }
    if let Some(s) = &common.bwt_convention {
        cfg.bwt_convention = BwtConvention::parse(s)?;
    }
    Ok(cfg)
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "-".to_string())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Schedule(common) => {
            let cfg = load_config(&common)?;
            let path = runner::cmd_schedule(&cfg, Path::new(&cfg.out))?;
            println!("wrote {}", path.display());
        }
        Command::Run(common) => {
            let cfg = load_config(&common)?;
            let out = PathBuf::from(&cfg.out);
            let reports = runner::cmd_run(&cfg, &out)?;
            for (seed, r) in &reports {
                println!(
                    "seed {seed}: avg_acc = {}, bwt = {}, fwt = {}",
                    r.avg_acc,
                    opt(r.bwt),
                    opt(r.fwt)
                );
            }
            println!("wrote {} run dir(s) under {}", reports.len(), out.display());
        }
        Command::Metrics {
            common,
            matrix,
            baselines,
        } => {
            let cfg = load_config(&common)?;
            let matrix_text = fs::read_to_string(&matrix)?;
            let b_text = match &baselines {
                Some(path) => Some(fs::read_to_string(path)?),
                None => None,
            };
            print!(
                "{}",
                runner::cmd_metrics(&matrix_text, b_text.as_deref(), cfg.bwt_convention)?
            );
        }
        Command::Compare(common) => {
            let cfg = load_config(&common)?;
            let summary = runner::cmd_compare(&cfg, Path::new(&cfg.out))?;
            print!("{summary}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
