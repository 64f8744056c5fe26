//! Plate-with-cavity domain family, point-cloud sampling and sensor placement.
//!
//! Every domain is a square plate centered at the origin with a regular
//! polygonal cavity sharing the same center. The family is parameterized by
//! the cavity's side count, its circumradius, its orientation and the plate
//! side length.

mod cloud;
mod sensors;

pub use cloud::{
    farthest_point_sampling, sample_point_cloud, sample_point_cloud_with, PointCloud, PointKind,
    SamplingOptions,
};
pub use sensors::{place_sensors, SensorSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Plate side lengths used by the family (meters).
pub const SIDE_LENGTHS: [f64; 3] = [1.6, 1.8, 2.0];

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("unsupported cavity side count {0} (expected 4..=9)")]
    UnsupportedShape(u32),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid sampling request: {0}")]
    InvalidSampling(String),
    #[error("interior grid too coarse: need {required} interior candidates, only {available} available")]
    GridTooCoarse { required: usize, available: usize },
    #[error("requested {requested} sensors but only {available} candidate points exist")]
    TooManySensors { requested: usize, available: usize },
    #[error("invalid filter expression `{0}`")]
    InvalidFilter(String),
}

/// One member of the plate-with-cavity family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    /// Number of sides of the regular polygonal cavity.
    pub n_poly: u32,
    /// Circumradius of the cavity (m).
    pub radius: f64,
    /// Orientation of the cavity's first vertex (degrees).
    pub omega_deg: f64,
    /// Side length of the outer square (m).
    pub side: f64,
}

impl DomainSpec {
    /// Builds a validated spec. The cavity must sit strictly inside the plate.
    pub fn new(n_poly: u32, radius: f64, omega_deg: f64, side: f64) -> Result<Self, GeometryError> {
        if !(3..=64).contains(&n_poly) {
            return Err(GeometryError::UnsupportedShape(n_poly));
        }
        if !(radius > 0.0 && side > 0.0 && omega_deg.is_finite()) {
            return Err(GeometryError::InvalidDomain(format!(
                "radius {radius} and side {side} must be positive"
            )));
        }
        if radius >= side / 2.0 {
            return Err(GeometryError::InvalidDomain(format!(
                "cavity radius {radius} does not fit inside plate of side {side}"
            )));
        }
        Ok(Self { n_poly, radius, omega_deg, side })
    }

    /// The family member for a cavity shape, using the shape's circumradius.
    pub fn family(n_poly: u32, omega_deg: f64, side: f64) -> Result<Self, GeometryError> {
        let shape = CavityShape::from_sides(n_poly)?;
        Self::new(n_poly, shape.radius(), omega_deg, side)
    }

    pub fn half_side(&self) -> f64 {
        self.side / 2.0
    }

    /// Short identifier, stable across runs, used for file names.
    pub fn id(&self) -> String {
        format!(
            "p{}_s{:03}_o{:03}",
            self.n_poly,
            (self.side * 100.0).round() as i64,
            self.omega_deg.round() as i64
        )
    }

    /// Cavity vertices, counter-clockwise, starting at angle `omega_deg`.
    pub fn cavity_polygon(&self) -> Vec<[f64; 2]> {
        cavity_polygon(self)
    }

    /// Outer square corners, counter-clockwise starting at (+h, -h).
    pub fn outer_corners(&self) -> [[f64; 2]; 4] {
        let h = self.half_side();
        [[h, -h], [h, h], [-h, h], [-h, -h]]
    }

    /// Area of the plate minus the cavity.
    pub fn area(&self) -> f64 {
        let n = self.n_poly as f64;
        let cavity = 0.5 * n * self.radius * self.radius * (2.0 * std::f64::consts::PI / n).sin();
        self.side * self.side - cavity
    }

    pub fn outer_perimeter(&self) -> f64 {
        4.0 * self.side
    }

    pub fn cavity_perimeter(&self) -> f64 {
        let n = self.n_poly as f64;
        n * 2.0 * self.radius * (std::f64::consts::PI / n).sin()
    }

    /// Distance from `p` to the cavity polygon's boundary.
    pub fn distance_to_cavity(&self, p: [f64; 2]) -> f64 {
        let verts = self.cavity_polygon();
        polygon_boundary_distance(&verts, p)
    }

    /// Distance from `p` to the outer square's boundary.
    pub fn distance_to_outer(&self, p: [f64; 2]) -> f64 {
        let h = self.half_side();
        let dx = h - p[0].abs();
        let dy = h - p[1].abs();
        if dx >= 0.0 && dy >= 0.0 {
            dx.min(dy)
        } else {
            let ox = (-dx).max(0.0);
            let oy = (-dy).max(0.0);
            (ox * ox + oy * oy).sqrt()
        }
    }

    /// Classifies `p` against the domain (plate minus cavity) using exact
    /// half-plane tests.
    pub fn point_in_domain(&self, p: [f64; 2], tol: f64) -> Membership {
        point_in_domain(self, p, tol)
    }
}

/// The six cavity shapes of the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CavityShape {
    Square,
    Pentagon,
    Hexagon,
    Heptagon,
    Octagon,
    Nonagon,
}

impl CavityShape {
    pub const ALL: [CavityShape; 6] = [
        CavityShape::Square,
        CavityShape::Pentagon,
        CavityShape::Hexagon,
        CavityShape::Heptagon,
        CavityShape::Octagon,
        CavityShape::Nonagon,
    ];

    pub fn from_sides(n: u32) -> Result<Self, GeometryError> {
        Ok(match n {
            4 => Self::Square,
            5 => Self::Pentagon,
            6 => Self::Hexagon,
            7 => Self::Heptagon,
            8 => Self::Octagon,
            9 => Self::Nonagon,
            other => return Err(GeometryError::UnsupportedShape(other)),
        })
    }

    pub fn sides(self) -> u32 {
        match self {
            Self::Square => 4,
            Self::Pentagon => 5,
            Self::Hexagon => 6,
            Self::Heptagon => 7,
            Self::Octagon => 8,
            Self::Nonagon => 9,
        }
    }

    /// Circumradius of the cavity (m).
    pub fn radius(self) -> f64 {
        match self {
            Self::Square => 0.35,
            _ => 0.30,
        }
    }

    /// Largest orientation in degrees; orientations run over the odd integers
    /// from 1 up to this value.
    pub fn max_omega(self) -> u32 {
        match self {
            Self::Square => 89,
            Self::Pentagon => 71,
            Self::Hexagon => 59,
            Self::Heptagon => 51,
            Self::Octagon => 45,
            Self::Nonagon => 39,
        }
    }

    pub fn orientations(self) -> impl Iterator<Item = u32> {
        (1..=self.max_omega()).step_by(2)
    }
}

/// Selection predicate over the family. `None` fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shapes: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sides: Option<Vec<f64>>,
    /// Inclusive orientation range in degrees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<(f64, f64)>,
    /// Explicit orientation list in degrees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omegas: Option<Vec<f64>>,
    /// Keep at most this many specs per cavity shape (after the other filters).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_shape: Option<usize>,
}

impl DomainFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn matches(&self, spec: &DomainSpec) -> bool {
        if let Some(shapes) = &self.shapes {
            if !shapes.contains(&spec.n_poly) {
                return false;
            }
        }
        if let Some(sides) = &self.sides {
            if !sides.iter().any(|s| (s - spec.side).abs() < 1e-9) {
                return false;
            }
        }
        if let Some((lo, hi)) = self.omega {
            if spec.omega_deg < lo - 1e-9 || spec.omega_deg > hi + 1e-9 {
                return false;
            }
        }
        if let Some(omegas) = &self.omegas {
            if !omegas.iter().any(|o| (o - spec.omega_deg).abs() < 1e-9) {
                return false;
            }
        }
        true
    }

    /// Parses a filter expression such as `shape=4,6;side=2.0;omega=1..9;per_shape=2`.
    ///
    /// Clauses are separated by `;`. An empty expression or `all` selects the
    /// whole family.
    pub fn parse(expr: &str) -> Result<Self, GeometryError> {
        let mut filter = Self::default();
        let bad = || GeometryError::InvalidFilter(expr.to_string());
        let expr = expr.trim();
        if expr.is_empty() || expr == "all" {
            return Ok(filter);
        }
        for clause in expr.split(';').map(str::trim).filter(|c| !c.is_empty()) {
            let (key, value) = clause.split_once('=').ok_or_else(bad)?;
            let value = value.trim();
            match key.trim() {
                "shape" | "shapes" => {
                    let shapes = value
                        .split(',')
                        .map(|v| v.trim().parse::<u32>().map_err(|_| bad()))
                        .collect::<Result<Vec<_>, _>>()?;
                    filter.shapes = Some(shapes);
                }
                "side" | "sides" => {
                    let sides = value
                        .split(',')
                        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
                        .collect::<Result<Vec<_>, _>>()?;
                    filter.sides = Some(sides);
                }
                "omega" => {
                    if let Some((lo, hi)) = value.split_once("..") {
                        let lo = lo.trim().parse::<f64>().map_err(|_| bad())?;
                        let hi = hi.trim().parse::<f64>().map_err(|_| bad())?;
                        filter.omega = Some((lo, hi));
                    } else {
                        let omegas = value
                            .split(',')
                            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
                            .collect::<Result<Vec<_>, _>>()?;
                        filter.omegas = Some(omegas);
                    }
                }
                "per_shape" => {
                    filter.per_shape = Some(value.parse::<usize>().map_err(|_| bad())?);
                }
                _ => return Err(bad()),
            }
        }
        Ok(filter)
    }
}

/// Enumerates every (shape, side, orientation) triple of the family in
/// ascending order and keeps those accepted by `filter`.
pub fn enumerate_domains(filter: &DomainFilter) -> Vec<DomainSpec> {
    let mut out = Vec::new();
    for shape in CavityShape::ALL {
        let mut kept = 0usize;
        for side in SIDE_LENGTHS {
            for omega in shape.orientations() {
                let spec = DomainSpec {
                    n_poly: shape.sides(),
                    radius: shape.radius(),
                    omega_deg: omega as f64,
                    side,
                };
                if !filter.matches(&spec) {
                    continue;
                }
                if filter.per_shape.is_some_and(|cap| kept >= cap) {
                    continue;
                }
                kept += 1;
                out.push(spec);
            }
        }
    }
    out
}

/// Enumerates the family and keeps the specs accepted by an arbitrary predicate.
pub fn enumerate_domains_by<F: Fn(&DomainSpec) -> bool>(pred: F) -> Vec<DomainSpec> {
    enumerate_domains(&DomainFilter::all())
        .into_iter()
        .filter(|s| pred(s))
        .collect()
}

/// Cavity vertices at angles `omega + k * 360 / n_poly`, counter-clockwise.
pub fn cavity_polygon(spec: &DomainSpec) -> Vec<[f64; 2]> {
    let n = spec.n_poly as usize;
    (0..n)
        .map(|k| {
            let theta = (spec.omega_deg + 360.0 * k as f64 / n as f64).to_radians();
            [spec.radius * theta.cos(), spec.radius * theta.sin()]
        })
        .collect()
}

/// Where a point sits relative to a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Interior,
    OnBoundary(BoundaryKind),
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Outer,
    Cavity,
}

pub fn point_in_domain(spec: &DomainSpec, p: [f64; 2], tol: f64) -> Membership {
    let h = spec.half_side();
    // Signed distance to the square: positive inside.
    let outer = (h - p[0].abs()).min(h - p[1].abs());
    if outer < -tol {
        return Membership::Outside;
    }
    if outer <= tol && spec.distance_to_outer(p) <= tol {
        return Membership::OnBoundary(BoundaryKind::Outer);
    }
    let verts = spec.cavity_polygon();
    // Signed distance to the convex cavity via its edge half-planes:
    // positive outside the cavity.
    let n = verts.len();
    let mut cavity = f64::NEG_INFINITY;
    for k in 0..n {
        let a = verts[k];
        let b = verts[(k + 1) % n];
        let ex = b[0] - a[0];
        let ey = b[1] - a[1];
        let len = (ex * ex + ey * ey).sqrt();
        // Outward normal of a CCW polygon edge is (ey, -ex).
        let d = ((p[0] - a[0]) * ey - (p[1] - a[1]) * ex) / len;
        cavity = cavity.max(d);
    }
    if cavity < -tol {
        return Membership::Outside;
    }
    if polygon_boundary_distance(&verts, p) <= tol {
        return Membership::OnBoundary(BoundaryKind::Cavity);
    }
    if cavity <= tol {
        return Membership::Outside;
    }
    Membership::Interior
}

pub(crate) fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let ex = b[0] - a[0];
    let ey = b[1] - a[1];
    let len2 = ex * ex + ey * ey;
    let t = (((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / len2).clamp(0.0, 1.0);
    let qx = a[0] + t * ex - p[0];
    let qy = a[1] + t * ey - p[1];
    (qx * qx + qy * qy).sqrt()
}

pub(crate) fn polygon_boundary_distance(verts: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let n = verts.len();
    (0..n)
        .map(|k| segment_distance(verts[k], verts[(k + 1) % n], p))
        .fold(f64::INFINITY, f64::min)
}

/// Point at normalized arc length `s` in [0, 1) along a closed polyline.
pub(crate) fn closed_polyline_point(verts: &[[f64; 2]], s: f64) -> [f64; 2] {
    let n = verts.len();
    let lengths: Vec<f64> = (0..n)
        .map(|k| {
            let a = verts[k];
            let b = verts[(k + 1) % n];
            ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
        })
        .collect();
    let total: f64 = lengths.iter().sum();
    let mut target = s.rem_euclid(1.0) * total;
    for k in 0..n {
        if target <= lengths[k] || k == n - 1 {
            let t = (target / lengths[k]).clamp(0.0, 1.0);
            let a = verts[k];
            let b = verts[(k + 1) % n];
            return [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        }
        target -= lengths[k];
    }
    unreachable!("polyline has at least one edge")
}
