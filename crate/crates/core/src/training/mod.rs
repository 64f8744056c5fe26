//! Physics residuals, loss weights, Adam and the mini-batch loop over
//! geometries.
//!
//! The loss of one geometry is
//! `w_m (J_x + J_y) + w_s J_s`, where `J_x`, `J_y` are mean squared momentum
//! residuals over all cloud points and `J_s` is the mean squared displacement
//! mismatch at the sensors. A step minimizes the mean of that loss over a
//! mini-batch of geometries.

mod adam;
mod loss;
mod metrics;
mod schedule;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{
    batch_loss, loss_and_seed, momentum_residuals, residual_momentum, residual_sensor, LossInputs,
    MomentumCoefficients, ResidualBreakdown,
};
pub use metrics::{evaluate, geometry_error, relative_l2, summarize, EvaluationReport, FieldError, GeometryError, Summary};
pub use schedule::{WeightSchedule, OMEGA_MOMENTUM};
pub use trainer::{
    breakdown, dataset_loss, epoch_loss_batchwise, evaluate_samples, loss_and_gradient, shuffled_order, train,
    HistoryRow, Sample, TrainConfig, TrainOutcome, Trainer,
};

use crate::autodiff::AutodiffError;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrainingError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sensor set is empty")]
    NoSensors,
    #[error("sensor index {index} out of range for {points} points")]
    SensorIndex { index: usize, points: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("geometry {id} has {found} points, expected {expected}")]
    MixedPointCounts { id: String, expected: usize, found: usize },
    #[error("geometry {id} has no {field} field")]
    MissingField { id: String, field: &'static str },
    #[error("invalid weight schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient in {block}")]
    NonFiniteGradient { block: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
