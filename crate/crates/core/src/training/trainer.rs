use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{batch_loss, loss_and_seed, residual_momentum, residual_sensor, LossInputs, ResidualBreakdown};
use super::metrics::{evaluate, EvaluationReport};
use super::schedule::{WeightSchedule, OMEGA_MOMENTUM};
use super::TrainingError;
use crate::autodiff::{ParamStore, Tape};
use crate::geometry::{PointCloud, SensorSet};
use crate::model::{build_pipn, ArchDescriptor, PipnModel};
use crate::oracle::Material;
use crate::seeds;

/// One training geometry: its labelled cloud and sensor observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub cloud: PointCloud,
    pub sensors: SensorSet,
}

impl Sample {
    pub fn new(id: impl Into<String>, cloud: PointCloud, sensors: SensorSet) -> Self {
        Self { id: id.into(), cloud, sensors }
    }

    fn inputs<'a>(&'a self, material: &'a Material) -> Result<LossInputs<'a>, TrainingError> {
        let temp_grad = self
            .cloud
            .temp_grad
            .as_deref()
            .ok_or_else(|| TrainingError::MissingField { id: self.id.clone(), field: "temp_grad" })?;
        Ok(LossInputs { temp_grad, forcing: self.cloud.forcing.as_deref(), sensors: &self.sensors, material })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(flatten)]
    pub adam: AdamConfig,
    pub arch: ArchDescriptor,
    pub schedule: WeightSchedule,
    pub seed: u64,
    pub material: Material,
    /// 1 runs everything on the calling thread, which makes runs bitwise
    /// reproducible; more spreads batch members over a thread pool.
    pub threads: usize,
    /// When off, the seconds column of the history is 0 so that histories of
    /// repeated runs compare equal.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            epochs: 2500,
            adam: AdamConfig::default(),
            arch: ArchDescriptor { n_s: 0.5, ..ArchDescriptor::default() },
            schedule: WeightSchedule::default(),
            seed: 0,
            material: Material::default(),
            threads: 1,
            record_timing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, m: usize) -> Result<(), TrainingError> {
        if self.batch_size == 0 || self.batch_size > m {
            return Err(TrainingError::InvalidConfig(format!("batch size {} not in 1..={m}", self.batch_size)));
        }
        if self.threads == 0 {
            return Err(TrainingError::InvalidConfig("threads must be at least 1".into()));
        }
        self.material.validate().map_err(|e| TrainingError::InvalidConfig(e.to_string()))?;
        self.adam.validate()?;
        self.schedule.validate()?;
        self.arch.validate()?;
        Ok(())
    }
}

/// One history line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    /// Mean over all geometries of their loss, each taken in the forward
    /// pass of the step that visited it.
    pub loss: f64,
    pub omega_sensor: f64,
    pub seconds: f64,
}

pub struct TrainOutcome {
    pub model: PipnModel,
    pub adam: AdamState,
    pub history: Vec<HistoryRow>,
}

fn check_dataset(data: &[Sample]) -> Result<(), TrainingError> {
    let first = data.first().ok_or(TrainingError::EmptyDataset)?;
    let n = first.cloud.len();
    for s in data {
        if s.cloud.len() != n {
            return Err(TrainingError::MixedPointCounts { id: s.id.clone(), expected: n, found: s.cloud.len() });
        }
        if s.cloud.temp_grad.as_ref().is_none_or(|t| t.len() != n) {
            return Err(TrainingError::MissingField { id: s.id.clone(), field: "temp_grad" });
        }
        if s.sensors.is_empty() {
            return Err(TrainingError::NoSensors);
        }
        if let Some(&index) = s.sensors.indices.iter().find(|&&i| i >= n) {
            return Err(TrainingError::SensorIndex { index, points: n });
        }
    }
    Ok(())
}

/// Geometry order of `epoch`.
pub fn shuffled_order(root_seed: u64, epoch: usize, m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut seeds::epoch(root_seed, epoch));
    order
}

/// Loss of one geometry scaled by `scale`, with its gradient written into `grads`.
fn geometry_gradient(
    model: &PipnModel,
    sample: &Sample,
    material: &Material,
    omega_sensor: f64,
    scale: f64,
    grads: &mut ParamStore,
) -> Result<ResidualBreakdown, TrainingError> {
    grads.fill(0.0);
    let inputs = sample.inputs(material)?;
    let mut tape = Tape::new();
    let out = model.record(&mut tape, &sample.cloud.coords)?;
    let (b, seed) = loss_and_seed(tape.value(out)?, &inputs, OMEGA_MOMENTUM, omega_sensor, scale)?;
    tape.backward(out, &seed, &model.params, grads)?;
    Ok(b)
}

/// Batch loss and its gradient with respect to every parameter.
pub fn loss_and_gradient(
    model: &PipnModel,
    batch: &[&Sample],
    material: &Material,
    omega_sensor: f64,
) -> Result<(f64, ParamStore), TrainingError> {
    if batch.is_empty() {
        return Err(TrainingError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total = model.params.zeros_like();
    let mut g = model.params.zeros_like();
    let mut parts = Vec::with_capacity(batch.len());
    for s in batch {
        parts.push(geometry_gradient(model, s, material, omega_sensor, scale, &mut g)?);
        total.add_scaled(&g, 1.0);
    }
    Ok((batch_loss(&parts, OMEGA_MOMENTUM, omega_sensor)?, total))
}

/// Residual breakdown of one geometry under `model`.
pub fn breakdown(model: &PipnModel, sample: &Sample, material: &Material) -> Result<ResidualBreakdown, TrainingError> {
    let inputs = sample.inputs(material)?;
    let jets = model.forward(&sample.cloud.coords)?;
    let (j_mom_x, j_mom_y) = residual_momentum(&jets, inputs.temp_grad, material, inputs.forcing)?;
    let values: Vec<[f64; 2]> = (0..jets.points()).map(|p| [jets.at(0, p, 0), jets.at(0, p, 1)]).collect();
    let j_sensor = residual_sensor(&values, &sample.sensors)?;
    Ok(ResidualBreakdown { j_mom_x, j_mom_y, j_sensor, n: values.len(), m: sample.sensors.len() })
}

/// Mean loss over all geometries at fixed parameters.
pub fn dataset_loss(model: &PipnModel, data: &[Sample], material: &Material, omega_sensor: f64) -> Result<f64, TrainingError> {
    let parts = data.iter().map(|s| breakdown(model, s, material)).collect::<Result<Vec<_>, _>>()?;
    batch_loss(&parts, OMEGA_MOMENTUM, omega_sensor).map_err(|_| TrainingError::EmptyDataset)
}

/// Mean of the batch losses when `data` is visited in `order` in batches of
/// `batch_size`, at fixed parameters. Equals [`dataset_loss`] whenever the
/// batch size divides the dataset size.
pub fn epoch_loss_batchwise(
    model: &PipnModel,
    data: &[Sample],
    material: &Material,
    omega_sensor: f64,
    batch_size: usize,
    order: &[usize],
) -> Result<f64, TrainingError> {
    if batch_size == 0 {
        return Err(TrainingError::InvalidConfig("batch size must be positive".into()));
    }
    let parts = data.iter().map(|s| breakdown(model, s, material)).collect::<Result<Vec<_>, _>>()?;
    let losses = order
        .chunks(batch_size)
        .map(|c| batch_loss(&c.iter().map(|&i| parts[i]).collect::<Vec<_>>(), OMEGA_MOMENTUM, omega_sensor))
        .collect::<Result<Vec<_>, _>>()?;
    if losses.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Relative errors against each sample's reference displacement.
pub fn evaluate_samples(model: &PipnModel, data: &[Sample]) -> Result<EvaluationReport, TrainingError> {
    evaluate(model, data.iter().map(|s| (s.id.as_str(), s.cloud.coords.as_slice(), s.cloud.reference.as_deref())))
}

/// Epoch loop with resumable state.
pub struct Trainer<'a> {
    config: TrainConfig,
    data: &'a [Sample],
    pub model: PipnModel,
    pub adam: AdamState,
    /// Number of completed epochs.
    pub epoch: usize,
    slots: Vec<ParamStore>,
    total: ParamStore,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Trainer<'a> {
    /// Fresh model initialized from the configured root seed.
    pub fn new(config: TrainConfig, data: &'a [Sample]) -> Result<Self, TrainingError> {
        let model = build_pipn(config.arch, seeds::init(config.seed))?;
        let adam = AdamState::new(&model.params);
        Self::resume(config, data, model, adam, 0)
    }

    /// Continues from saved state after `epoch` completed epochs.
    pub fn resume(
        config: TrainConfig,
        data: &'a [Sample],
        model: PipnModel,
        adam: AdamState,
        epoch: usize,
    ) -> Result<Self, TrainingError> {
        check_dataset(data)?;
        config.validate(data.len())?;
        if model.arch != config.arch {
            return Err(TrainingError::InvalidConfig("checkpoint architecture differs from the configuration".into()));
        }
        if !model.params.same_shape(&adam.m) || !model.params.same_shape(&adam.v) {
            return Err(TrainingError::Shape("optimizer state does not match parameters".into()));
        }
        let pool = if config.threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .map_err(|e| TrainingError::InvalidConfig(e.to_string()))?;
            Some(pool)
        } else {
            None
        };
        let slots = vec![model.params.zeros_like(); config.batch_size];
        let total = model.params.zeros_like();
        Ok(Self { config, data, model, adam, epoch, slots, total, pool })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    fn step(&mut self, batch: &[usize], omega_sensor: f64, batch_index: usize) -> Result<f64, TrainingError> {
        let scale = 1.0 / batch.len() as f64;
        let (model, data, material) = (&self.model, self.data, &self.config.material);
        let slots = &mut self.slots[..batch.len()];
        let run = |(&i, g): (&usize, &mut ParamStore)| geometry_gradient(model, &data[i], material, omega_sensor, scale, g);
        let parts: Vec<Result<ResidualBreakdown, TrainingError>> = match &self.pool {
            Some(pool) => pool.install(|| batch.par_iter().zip(slots.par_iter_mut()).map(run).collect()),
            None => batch.iter().zip(slots.iter_mut()).map(run).collect(),
        };
        let parts = parts.into_iter().collect::<Result<Vec<_>, _>>()?;
        let sum: f64 = parts.iter().map(|b| b.weighted(OMEGA_MOMENTUM, omega_sensor)).sum();
        if !sum.is_finite() {
            return Err(TrainingError::NonFiniteLoss { epoch: self.epoch, batch: batch_index });
        }
        self.total.fill(0.0);
        for g in &self.slots[..batch.len()] {
            self.total.add_scaled(g, 1.0);
        }
        adam_step(&mut self.model.params, &self.total, &mut self.adam, &self.config.adam)?;
        Ok(sum)
    }

    /// Runs one pass over all geometries.
    pub fn run_epoch(&mut self) -> Result<HistoryRow, TrainingError> {
        let start = Instant::now();
        let omega_sensor = self.config.schedule.weight_sensor(self.epoch);
        let order = shuffled_order(self.config.seed, self.epoch, self.data.len());
        let mut total = 0.0;
        for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
            total += self.step(batch, omega_sensor, b)?;
        }
        let row = HistoryRow {
            epoch: self.epoch,
            loss: total / self.data.len() as f64,
            omega_sensor,
            seconds: if self.config.record_timing { start.elapsed().as_secs_f64() } else { 0.0 },
        };
        self.epoch += 1;
        Ok(row)
    }

    /// Runs the remaining epochs, calling `on_epoch` after each one. An error
    /// from the callback stops the run.
    pub fn run<F>(&mut self, mut on_epoch: F) -> Result<Vec<HistoryRow>, TrainingError>
    where
        F: FnMut(&Self, &HistoryRow) -> Result<(), TrainingError>,
    {
        let mut history = Vec::with_capacity(self.config.epochs.saturating_sub(self.epoch));
        while !self.finished() {
            let row = self.run_epoch()?;
            on_epoch(self, &row)?;
            history.push(row);
        }
        Ok(history)
    }
}

/// Trains a fresh model for `config.epochs` epochs.
pub fn train(data: &[Sample], config: TrainConfig) -> Result<TrainOutcome, TrainingError> {
    let mut trainer = Trainer::new(config, data)?;
    let history = trainer.run(|_, _| Ok(()))?;
    Ok(TrainOutcome { model: trainer.model, adam: trainer.adam, history })
}
