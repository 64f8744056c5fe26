use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CliError, ExperimentConfig};
use crate::autodiff::PoolKind;
use crate::geometry::{enumerate_domains, place_sensors, sample_point_cloud, DomainFilter, DomainSpec, SamplingOptions, SensorSet};
use crate::io::{
    load_dataset, read_history, read_predictions, write_csv, write_error_map, write_history, write_json,
    write_manifest, write_predictions, Checkpoint, DatasetFile, IoError, Manifest, ManifestEntry, PredictionRow,
    DATASET_SCHEMA_VERSION,
};
use crate::model::ArchDescriptor;
use crate::oracle::label_cloud;
use crate::seeds;
use crate::training::{
    evaluate_samples, geometry_error, summarize, EvaluationReport, HistoryRow, Sample, TrainConfig, Trainer,
    WeightSchedule,
};

fn generate_one(cfg: &ExperimentConfig, spec: &DomainSpec, seed: u64) -> Result<DatasetFile, String> {
    let d = &cfg.dataset;
    let (outer, cavity) = SamplingOptions::default_boundary_counts(d.points);
    let cloud = sample_point_cloud(spec, d.points, outer, cavity, seed).map_err(|e| e.to_string())?;
    let cloud = label_cloud(spec, &cloud, d.resolution, &cfg.train.material).map_err(|e| e.to_string())?;
    let indices = place_sensors(&cloud, d.sensors).map_err(|e| e.to_string())?;
    let sensors = SensorSet::from_reference(&cloud, indices).map_err(|e| e.to_string())?;
    Ok(DatasetFile {
        schema_version: DATASET_SCHEMA_VERSION,
        id: spec.id(),
        seed,
        material: cfg.train.material,
        resolution: d.resolution,
        cloud,
        sensors,
    })
}

/// Samples, solves and writes every selected geometry, then the manifest.
/// A failed geometry is logged and recorded in the manifest; the others
/// proceed.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<Manifest, CliError> {
    let family = enumerate_domains(&DomainFilter::all());
    let selected = enumerate_domains(&cfg.filter()?);
    if selected.is_empty() {
        return Err(CliError::Invalid(format!("filter `{}` selects no geometries", cfg.dataset.filter)));
    }
    let dir = &cfg.dataset.dir;
    std::fs::create_dir_all(dir).map_err(|source| IoError::File { path: dir.clone(), source })?;
    let root = cfg.train.seed;
    let one = |spec: &DomainSpec| -> Result<ManifestEntry, IoError> {
        // Seeds follow the position in the whole family so that a filter
        // never changes the cloud of a geometry.
        let index = family.iter().position(|s| s == spec).unwrap_or(family.len());
        let id = spec.id();
        match generate_one(cfg, spec, seeds::geometry(root, index)) {
            Ok(file) => {
                let name = format!("{id}.json");
                write_json(&dir.join(&name), &file)?;
                info!("generated {id}");
                Ok(ManifestEntry { id, spec: *spec, file: Some(name), error: None })
            }
            Err(reason) => {
                warn!("geometry {id} failed: {reason}");
                Ok(ManifestEntry { id, spec: *spec, file: None, error: Some(reason) })
            }
        }
    };
    let entries: Vec<Result<ManifestEntry, IoError>> = if cfg.train.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.train.threads)
            .build()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        pool.install(|| selected.par_iter().map(one).collect())
    } else {
        selected.iter().map(one).collect()
    };
    let manifest = Manifest {
        schema_version: DATASET_SCHEMA_VERSION,
        root_seed: root,
        points: cfg.dataset.points,
        sensors: cfg.dataset.sensors,
        material: cfg.train.material,
        resolution: cfg.dataset.resolution,
        entries: entries.into_iter().collect::<Result<_, _>>()?,
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: EvaluationReport,
    pub history: Vec<HistoryRow>,
    pub final_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Serialize)]
struct GeometryRow<'a> {
    id: &'a str,
    rel_err_u: f64,
    rel_err_v: f64,
    u_absolute: bool,
    v_absolute: bool,
}

fn prediction_rows(model: &crate::model::PipnModel, sample: &Sample) -> Result<Vec<PredictionRow>, CliError> {
    let pred = model.forward_values(&sample.cloud.coords).map_err(crate::training::TrainingError::from)?;
    let reference = sample.cloud.reference.as_deref();
    Ok(sample
        .cloud
        .coords
        .iter()
        .zip(&pred)
        .enumerate()
        .map(|(i, (c, p))| {
            let r = reference.map_or([f64::NAN; 2], |r| r[i]);
            PredictionRow { x: c[0], y: c[1], u_pred: p[0], v_pred: p[1], u_ref: r[0], v_ref: r[1] }
        })
        .collect())
}

/// Trains on `samples` and writes the run directory `cfg.out`:
/// `config.json`, `history.csv`, `checkpoints/`, `checkpoint.bin`,
/// `report.json`, `errors.csv` and `predictions/<id>.csv`.
pub fn train_samples(cfg: &ExperimentConfig, samples: &[Sample], resume: Option<&Path>) -> Result<RunOutcome, CliError> {
    let out = &cfg.out;
    write_json(&out.join("config.json"), cfg)?;
    let history_path = out.join("history.csv");
    let (mut trainer, mut history) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.root_seed != cfg.train.seed {
                return Err(CliError::Invalid(format!(
                    "checkpoint was written with seed {}, config has {}",
                    ck.root_seed, cfg.train.seed
                )));
            }
            let history: Vec<HistoryRow> = if history_path.exists() {
                read_history(&history_path)?.into_iter().filter(|r| r.epoch < ck.epoch).collect()
            } else {
                Vec::new()
            };
            (Trainer::resume(cfg.train, samples, ck.model, ck.adam, ck.epoch)?, history)
        }
        None => (Trainer::new(cfg.train, samples)?, Vec::new()),
    };
    let start = Instant::now();
    let log_every = (cfg.train.epochs / 50).max(1);
    while !trainer.finished() {
        let row = match trainer.run_epoch() {
            Ok(row) => row,
            Err(e) => {
                write_history(&history_path, &history)?;
                return Err(e.into());
            }
        };
        history.push(row);
        if row.epoch % log_every == 0 {
            info!("epoch {} loss {:.6e} omega_sensor {}", row.epoch, row.loss, row.omega_sensor);
        }
        if cfg.checkpoint_every > 0 && trainer.epoch % cfg.checkpoint_every == 0 && !trainer.finished() {
            let ck = Checkpoint {
                model: trainer.model.clone(),
                adam: trainer.adam.clone(),
                epoch: trainer.epoch,
                root_seed: cfg.train.seed,
            };
            ck.save(&out.join(format!("checkpoints/epoch_{:06}.bin", trainer.epoch)))?;
            write_history(&history_path, &history)?;
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let ck = Checkpoint { model: trainer.model, adam: trainer.adam, epoch: trainer.epoch, root_seed: cfg.train.seed };
    ck.save(&out.join("checkpoint.bin"))?;
    write_history(&history_path, &history)?;

    let report = evaluate_samples(&ck.model, samples)?;
    write_json(&out.join("report.json"), &report)?;
    let rows: Vec<GeometryRow> = report
        .geometries
        .iter()
        .map(|g| GeometryRow { id: &g.id, rel_err_u: g.u.value, rel_err_v: g.v.value, u_absolute: g.u.absolute, v_absolute: g.v.absolute })
        .collect();
    write_csv(&out.join("errors.csv"), &rows, &["id", "rel_err_u", "rel_err_v", "u_absolute", "v_absolute"])?;
    if cfg.report.predictions {
        for s in samples {
            write_predictions(&out.join("predictions").join(format!("{}.csv", s.id)), &prediction_rows(&ck.model, s)?)?;
        }
    }
    let final_loss = history.last().map(|r| r.loss);
    Ok(RunOutcome { report, history, final_loss, seconds })
}

fn load_samples(cfg: &ExperimentConfig) -> Result<Vec<Sample>, CliError> {
    let filter = cfg.filter()?;
    let (manifest, samples) = load_dataset(&cfg.dataset.dir, |s| filter.matches(s))?;
    if samples.is_empty() {
        return Err(CliError::Invalid(format!(
            "no geometries in {} match `{}`",
            cfg.dataset.dir.display(),
            cfg.dataset.filter
        )));
    }
    if manifest.failed().count() > 0 {
        warn!("{} geometries failed at generation and are skipped", manifest.failed().count());
    }
    Ok(samples)
}

/// Loads the dataset named by the config and trains on it.
pub fn run_training(cfg: &ExperimentConfig, resume: Option<&Path>) -> Result<RunOutcome, CliError> {
    let samples = load_samples(cfg)?;
    info!("training on {} geometries of {} points", samples.len(), samples[0].cloud.len());
    train_samples(cfg, &samples, resume)
}

/// Setting varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepAxis {
    BatchSize,
    NetworkSize,
    Pooling,
    Schedule,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::BatchSize => "batch_size",
            Self::NetworkSize => "network_size",
            Self::Pooling => "pooling",
            Self::Schedule => "schedule",
        }
    }

    /// `base` with this setting replaced by `value`.
    pub fn apply(self, base: &TrainConfig, value: &str) -> Result<TrainConfig, String> {
        let mut cfg = *base;
        match self {
            Self::BatchSize => cfg.batch_size = value.parse().map_err(|_| format!("bad batch size `{value}`"))?,
            Self::NetworkSize => {
                let n_s: f64 = value.parse().map_err(|_| format!("bad n_s `{value}`"))?;
                cfg.arch = ArchDescriptor { n_s, ..cfg.arch };
                cfg.arch.validate().map_err(|e| e.to_string())?;
            }
            Self::Pooling => cfg.arch.pooling = value.parse::<PoolKind>().map_err(|e| e.to_string())?,
            Self::Schedule => cfg.schedule = value.parse::<WeightSchedule>().map_err(|e| e.to_string())?,
        }
        Ok(cfg)
    }
}

/// One line of a sweep table. Failed runs carry the error and NaN numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub u_mean: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub v_mean: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub final_loss: f64,
    pub seconds: f64,
    pub error: Option<String>,
}

/// Runs one training per value on a shared dataset and seed, writing each
/// run to `<out>/<axis>_<value>/` and the table to `<out>/sweep_<axis>.csv`.
pub fn run_sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[String], parallel: bool) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Invalid("sweep needs at least one value".into()));
    }
    let samples = load_samples(cfg)?;
    let one = |value: &String| -> SweepRow {
        let failed = |error: String| SweepRow {
            value: value.clone(),
            u_mean: f64::NAN,
            u_min: f64::NAN,
            u_max: f64::NAN,
            v_mean: f64::NAN,
            v_min: f64::NAN,
            v_max: f64::NAN,
            final_loss: f64::NAN,
            seconds: f64::NAN,
            error: Some(error),
        };
        let train = match axis.apply(&cfg.train, value) {
            Ok(t) => t,
            Err(e) => return failed(e),
        };
        let run_cfg = ExperimentConfig {
            train,
            out: cfg.out.join(format!("{}_{}", axis.name(), value.replace([':', '/'], "-"))),
            ..cfg.clone()
        };
        match train_samples(&run_cfg, &samples, None) {
            Ok(o) => SweepRow {
                value: value.clone(),
                u_mean: o.report.u.mean,
                u_min: o.report.u.min,
                u_max: o.report.u.max,
                v_mean: o.report.v.mean,
                v_min: o.report.v.min,
                v_max: o.report.v.max,
                final_loss: o.final_loss.unwrap_or(f64::NAN),
                seconds: o.seconds,
                error: None,
            },
            Err(e) => {
                warn!("{} = {value} failed: {e}", axis.name());
                failed(e.to_string())
            }
        }
    };
    let rows: Vec<SweepRow> = if parallel { values.par_iter().map(one).collect() } else { values.iter().map(one).collect() };
    write_csv(
        &cfg.out.join(format!("sweep_{}.csv", axis.name())),
        &rows,
        &["value", "u_mean", "u_min", "u_max", "v_mean", "v_min", "v_max", "final_loss", "seconds", "error"],
    )?;
    Ok(rows)
}

/// Average, minimum and maximum relative error per field.
pub fn format_report(report: &EvaluationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<6}{:>14}{:>14}{:>14}", "field", "average", "minimum", "maximum");
    for (name, f) in [("u", report.u), ("v", report.v)] {
        let _ = writeln!(s, "{name:<6}{:>14.5e}{:>14.5e}{:>14.5e}", f.mean, f.min, f.max);
    }
    let flagged: Vec<&str> = report
        .geometries
        .iter()
        .filter(|g| g.u.absolute || g.v.absolute)
        .map(|g| g.id.as_str())
        .collect();
    if !flagged.is_empty() {
        let _ = writeln!(s, "absolute errors (zero reference norm): {}", flagged.join(", "));
    }
    s
}

/// Writes `loss_curve.csv` and `error_maps/<id>.csv` for the run's
/// geometries whose id starts with one of `prefixes` (all when empty), and
/// returns a text summary.
pub fn report_run(run: &Path, prefixes: &[String], out: &Path) -> Result<String, CliError> {
    let history_path = run.join("history.csv");
    let pred_dir = run.join("predictions");
    let mut pred_files: Vec<PathBuf> = match std::fs::read_dir(&pred_dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect(),
        Err(_) => Vec::new(),
    };
    pred_files.sort();
    let mut missing = Vec::new();
    if !history_path.exists() {
        missing.push(history_path.clone());
    }
    if pred_files.is_empty() {
        missing.push(pred_dir.join("*.csv"));
    }
    if !missing.is_empty() {
        return Err(IoError::Missing(missing).into());
    }
    let history = read_history(&history_path)?;
    write_history(&out.join("loss_curve.csv"), &history)?;
    let mut errors = Vec::new();
    for path in &pred_files {
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if !prefixes.is_empty() && !prefixes.iter().any(|p| id.starts_with(p.as_str())) {
            continue;
        }
        let rows = read_predictions(path)?;
        write_error_map(&out.join("error_maps").join(format!("{id}.csv")), &rows)?;
        let pred: Vec<[f64; 2]> = rows.iter().map(|r| [r.u_pred, r.v_pred]).collect();
        let reference: Vec<[f64; 2]> = rows.iter().map(|r| [r.u_ref, r.v_ref]).collect();
        errors.push(geometry_error(&id, &pred, &reference));
    }
    if errors.is_empty() {
        return Err(CliError::Invalid(format!("no geometry in {} matches {prefixes:?}", pred_dir.display())));
    }
    let report = summarize(errors)?;
    let mut text = format!("run {}\n", run.display());
    if let Some(last) = history.last() {
        let _ = writeln!(text, "epochs {}, final loss {:.6e}", history.len(), last.loss);
    }
    let _ = writeln!(text, "geometries {}", report.geometries.len());
    text.push_str(&format_report(&report));
    crate::io::write_atomic(&out.join("summary.txt"), text.as_bytes())?;
    Ok(text)
}
