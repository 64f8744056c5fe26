//! Second-order forward jets through shared per-point layers, and reverse
//! mode over the recorded jet computation.
//!
//! Losses in this crate depend on second spatial derivatives of the network
//! output. Each point carries a [`Jet2`] per channel; shared layers act on all
//! points as one matrix product. The [`Tape`] then differentiates a scalar
//! function of the output jets with respect to the weights.

mod batch;
pub mod fd;
mod jet;
pub mod ops;
mod params;
mod tape;

pub use batch::JetBatch;
pub use jet::{tanh, tanh_jet, Jet2, Slot, SLOTS};
pub use ops::{PoolKind, PoolRecord};
pub use params::{Layer, ParamStore};
pub use tape::{NodeId, Tape};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AutodiffError {
    #[error("backward called on an empty tape")]
    NothingRecorded,
    #[error("tape was already consumed by a backward pass")]
    TapeConsumed,
    #[error("node {0} is not on this tape")]
    UnknownNode(usize),
    #[error("layer {0} does not exist")]
    UnknownLayer(usize),
    #[error("node {0} does not hold per-point jets")]
    NotJets(usize),
    #[error("node {0} is not a pooling node")]
    NotPooled(usize),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("gradient store does not match parameter shapes")]
    GradientShape,
    #[error("cannot pool over zero points")]
    EmptyBatch,
}
