//! Physics-informed PointNet for the inverse plane-stress thermoelasticity
//! problem on families of plates with polygonal cavities.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`] enumerates the domain family, samples point clouds and places sensors.
//! * [`oracle`] produces ground-truth fields with a linear-triangle finite element solver.
//! * [`autodiff`] propagates second-order input jets through shared MLPs and
//!   back-propagates losses built from them.
//! * [`model`] assembles the PointNet architecture.
//! * [`training`] holds residuals, loss weights, Adam and the mini-batch loop.
//! * [`io`] and [`cli`] handle dataset files, checkpoints and the command-line tool.

pub mod autodiff;
pub mod cli;
pub mod geometry;
pub mod io;
pub mod model;
pub mod oracle;
pub mod seeds;
pub mod training;
