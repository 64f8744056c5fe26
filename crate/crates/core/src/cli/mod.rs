//! The `pipn` command-line tool: dataset generation, training, sweeps and
//! reports.

mod commands;

pub use commands::{
    generate_dataset, report_run, run_sweep, run_training, train_samples, RunOutcome, SweepAxis, SweepRow,
};

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::geometry::{DomainFilter, GeometryError};
use crate::io::{read_json, IoError};
use crate::oracle::Resolution;
use crate::training::{TrainConfig, TrainingError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{0}")]
    Invalid(String),
}

/// Which geometries to generate and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Directory holding the per-geometry files and the manifest.
    pub dir: PathBuf,
    /// Filter expression, see [`DomainFilter::parse`].
    pub filter: String,
    pub points: usize,
    pub sensors: usize,
    pub resolution: Resolution,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            filter: "side=2.0;per_shape=2".into(),
            points: 2021,
            sensors: 81,
            resolution: Resolution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportOptions {
    /// Write per-point prediction tables for every geometry.
    pub predictions: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { predictions: true }
    }
}

/// Everything a run depends on. The resolved copy is written into every run
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// `train.seed` is the root seed for sampling as well as training.
    pub train: TrainConfig,
    pub out: PathBuf,
    /// Epochs between periodic checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    pub report: ReportOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            out: PathBuf::from("runs/default"),
            checkpoint_every: 250,
            report: ReportOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn filter(&self) -> Result<DomainFilter, CliError> {
        Ok(DomainFilter::parse(&self.dataset.filter)?)
    }
}

#[derive(Debug, Parser)]
#[command(name = "pipn", version, about = "Physics-informed PointNet for plane-stress thermoelasticity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by the commands that read an experiment config.
#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Geometry filter such as `shape=4,6;side=2.0;omega=1..9;per_shape=2`.
    #[arg(long)]
    pub filter: Option<String>,
    /// Worker threads; 1 is strictly sequential and bitwise reproducible.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the default experiment config as JSON.
    DefaultConfig,
    /// Sample, solve and label every selected geometry.
    GenData {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train on a generated dataset and evaluate.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// One training per value of a single setting.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// batch_size, network_size, pooling or schedule.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. `0.25,0.5` or `max,average`.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Run the trainings concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Loss curve and error maps of a finished run.
    Report {
        /// Run directory.
        #[arg(long)]
        run: PathBuf,
        /// Comma-separated geometry id prefixes, e.g. `p4_,p6_s200`.
        #[arg(long)]
        filter: Option<String>,
        /// Where to write the tables; defaults to `<run>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Loads the config and applies command-line overrides.
pub fn resolve_config(common: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg: ExperimentConfig = match &common.config {
        Some(path) => read_json(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(filter) = &common.filter {
        cfg.dataset.filter = filter.clone();
    }
    if let Some(threads) = common.threads {
        cfg.train.threads = threads;
    }
    cfg.filter()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::DefaultConfig => {
            let text = serde_json::to_string_pretty(&ExperimentConfig::default()).expect("config serializes");
            println!("{text}");
        }
        Command::GenData { common } => {
            let mut cfg = resolve_config(&common)?;
            if let Some(out) = common.out {
                cfg.dataset.dir = out;
            }
            let manifest = generate_dataset(&cfg)?;
            let ok = manifest.succeeded().count();
            println!("{ok} geometries written to {}", cfg.dataset.dir.display());
            for e in manifest.failed() {
                println!("failed {}: {}", e.id, e.error.as_deref().unwrap_or("unknown"));
            }
        }
        Command::Train { common, resume } => {
            let mut cfg = resolve_config(&common)?;
            if let Some(out) = common.out {
                cfg.out = out;
            }
            let outcome = run_training(&cfg, resume.as_deref())?;
            print!("{}", commands::format_report(&outcome.report));
            println!("final loss {:e}", outcome.final_loss.unwrap_or(f64::NAN));
        }
        Command::Sweep { common, axis, values, parallel } => {
            let mut cfg = resolve_config(&common)?;
            if let Some(out) = common.out {
                cfg.out = out;
            }
            let rows = run_sweep(&cfg, axis, &values, parallel)?;
            for r in rows {
                match &r.error {
                    None => println!(
                        "{} = {}: u {:.4e}, v {:.4e}, loss {:.4e}",
                        axis.name(),
                        r.value,
                        r.u_mean,
                        r.v_mean,
                        r.final_loss
                    ),
                    Some(e) => println!("{} = {}: failed: {e}", axis.name(), r.value),
                }
            }
        }
        Command::Report { run, filter, out } => {
            let prefixes: Vec<String> = filter
                .map(|f| f.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
                .unwrap_or_default();
            let out = out.unwrap_or_else(|| run.join("report"));
            let text = report_run(&run, &prefixes, &out)?;
            print!("{text}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_fill_missing_fields() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"train": {"epochs": 3}, "dataset": {"points": 400}}"#).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.dataset.points, 400);
        assert_eq!(cfg.dataset.sensors, 81);
    }

    #[test]
    fn config_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "pipn", "sweep", "--axis", "pooling", "--values", "max,average", "--seed", "4", "--threads", "1",
        ])
        .unwrap();
        match cli.command {
            Command::Sweep { axis, values, common, .. } => {
                assert_eq!(axis, SweepAxis::Pooling);
                assert_eq!(values, ["max", "average"]);
                assert_eq!(common.seed, Some(4));
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["pipn", "train", "--resume", "a.ckpt", "--out", "r"]).is_ok());
        assert!(Cli::try_parse_from(["pipn", "sweep", "--axis", "colour", "--values", "1"]).is_err());
    }
}
