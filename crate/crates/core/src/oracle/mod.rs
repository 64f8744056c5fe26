//! Ground-truth fields from a linear-triangle finite element solver.

mod fem;
mod interp;
mod manufactured;
mod mesh;
pub mod sparse;

pub use fem::{
    assemble_elasticity, assemble_laplace, constitutive_matrix, element_gradient, l2_error,
    solve_elasticity, solve_laplace, solve_plane_stress, solve_temperature, ElasticityLoad,
    NodalField, SOLVER_TOLERANCE,
};
pub use interp::{interpolate_to_cloud, TriangleLocator, SNAP_TOLERANCE};
pub use manufactured::{strong_form, Hessian, ManufacturedCase};
pub use mesh::{build_mesh, Mesh};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{DomainSpec, PointCloud};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("invalid mesh resolution: {0}")]
    InvalidResolution(String),
    #[error("degenerate triangle {cell} (area {area:e})")]
    DegenerateCell { cell: usize, area: f64 },
    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite (iteration {iteration})")]
    NotPositiveDefinite { iteration: usize },
    #[error("point {index} at {point:?} lies outside the mesh")]
    PointOutsideMesh { index: usize, point: [f64; 2] },
    #[error("unknown manufactured case `{0}`")]
    UnknownCase(String),
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
}

/// Isotropic material. Young's modulus is normalized away.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub nu: f64,
    pub alpha: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self { nu: 0.3, alpha: 1.0 }
    }
}

impl Material {
    pub fn validate(&self) -> Result<(), OracleError> {
        if !(self.nu > 0.0 && self.nu < 0.5) {
            return Err(OracleError::InvalidMaterial(format!("nu = {} not in (0, 0.5)", self.nu)));
        }
        if !(self.alpha > 0.0) {
            return Err(OracleError::InvalidMaterial(format!("alpha = {} not positive", self.alpha)));
        }
        Ok(())
    }
}

/// Mesh resolution of the ground-truth solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub n_ring: usize,
    pub n_layers: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { n_ring: 128, n_layers: 32 }
    }
}

/// Meshes the domain, solves for temperature and displacement, and fills the
/// cloud's fields.
pub fn label_cloud(
    spec: &DomainSpec,
    cloud: &PointCloud,
    resolution: Resolution,
    mat: &Material,
) -> Result<PointCloud, OracleError> {
    let mesh = build_mesh(spec, resolution.n_ring, resolution.n_layers)?;
    let t = solve_temperature(&mesh)?;
    let uv = solve_plane_stress(&mesh, &t, mat)?;
    interpolate_to_cloud(&mesh, &t, &uv, cloud)
}

/// Attaches the exact fields and momentum forcing of a manufactured case.
pub fn manufactured_cloud(case: ManufacturedCase, cloud: &PointCloud, mat: &Material) -> PointCloud {
    let mut out = cloud.clone();
    out.temperature = Some(cloud.coords.iter().map(|&p| case.temperature(p)).collect());
    out.temp_grad = Some(cloud.coords.iter().map(|&p| case.temperature_gradient(p)).collect());
    out.reference = Some(cloud.coords.iter().map(|&p| case.displacement(p)).collect());
    out.forcing = Some(cloud.coords.iter().map(|&p| case.forcing(p, mat)).collect());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_point_cloud, PointKind, SamplingOptions};

    #[test]
    fn labelled_cloud_has_boundary_values() {
        let spec = DomainSpec::family(6, 21.0, 2.0).unwrap();
        let (o, c) = SamplingOptions::default_boundary_counts(400);
        let cloud = sample_point_cloud(&spec, 400, o, c, 0).unwrap();
        let labelled = label_cloud(&spec, &cloud, Resolution { n_ring: 96, n_layers: 24 }, &Material::default())
            .unwrap();
        let t = labelled.temperature.as_ref().unwrap();
        let uv = labelled.reference.as_ref().unwrap();
        for (i, kind) in labelled.kinds.iter().enumerate() {
            match kind {
                PointKind::CavityBoundary => assert!(t[i].abs() < 1e-6),
                PointKind::OuterBoundary => assert!((t[i] - 1.0).abs() < 1e-6),
                PointKind::Interior => assert!(t[i] > 0.0 && t[i] < 1.0),
            }
            if *kind != PointKind::Interior {
                assert!(uv[i][0].abs() < 1e-9 && uv[i][1].abs() < 1e-9);
            }
        }
        assert!(uv.iter().any(|d| d[0].abs() > 1e-3));
    }

    #[test]
    fn material_validation() {
        assert!(Material { nu: 0.5, alpha: 1.0 }.validate().is_err());
        assert!(Material { nu: 0.3, alpha: 0.0 }.validate().is_err());
        assert!(Material::default().validate().is_ok());
    }
}
