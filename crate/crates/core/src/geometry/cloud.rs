use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{closed_polyline_point, BoundaryKind, DomainSpec, GeometryError, Membership};

/// Per-point tag of a point cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Interior,
    OuterBoundary,
    CavityBoundary,
}

impl PointKind {
    pub fn boundary(self) -> Option<BoundaryKind> {
        match self {
            PointKind::Interior => None,
            PointKind::OuterBoundary => Some(BoundaryKind::Outer),
            PointKind::CavityBoundary => Some(BoundaryKind::Cavity),
        }
    }
}

/// A sampled domain. The field vectors are filled in by the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub spec: DomainSpec,
    pub coords: Vec<[f64; 2]>,
    pub kinds: Vec<PointKind>,
    /// Temperature at each point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<Vec<f64>>,
    /// (dT/dx, dT/dy) at each point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temp_grad: Option<Vec<[f64; 2]>>,
    /// Reference displacement (u, v) at each point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<[f64; 2]>>,
    /// Momentum forcing (s_x, s_y), only present for manufactured cases.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<Vec<[f64; 2]>>,
}

impl PointCloud {
    /// A bare cloud with no fields attached.
    pub fn new(spec: DomainSpec, coords: Vec<[f64; 2]>, kinds: Vec<PointKind>) -> Self {
        assert_eq!(coords.len(), kinds.len(), "coords and kinds must have equal length");
        Self {
            spec,
            coords,
            kinds,
            temperature: None,
            temp_grad: None,
            reference: None,
            forcing: None,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn count(&self, kind: PointKind) -> usize {
        self.kinds.iter().filter(|k| **k == kind).count()
    }

    /// Applies a permutation: point `i` of the result is point `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pick = |v: &Vec<[f64; 2]>| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            spec: self.spec,
            coords: pick(&self.coords),
            kinds: perm.iter().map(|&i| self.kinds[i]).collect(),
            temperature: self
                .temperature
                .as_ref()
                .map(|t| perm.iter().map(|&i| t[i]).collect()),
            temp_grad: self.temp_grad.as_ref().map(pick),
            reference: self.reference.as_ref().map(pick),
            forcing: self.forcing.as_ref().map(pick),
        }
    }

    /// Checks the structural invariants of a sampled cloud.
    pub fn validate(&self, tol: f64) -> Result<(), String> {
        let h = self.spec.half_side();
        for (i, (p, kind)) in self.coords.iter().zip(&self.kinds).enumerate() {
            if p[0].abs() > h + tol || p[1].abs() > h + tol {
                return Err(format!("point {i} {p:?} outside the plate"));
            }
            match kind {
                PointKind::OuterBoundary => {
                    let d = self.spec.distance_to_outer(*p);
                    if d > tol {
                        return Err(format!("outer point {i} is {d:e} off the boundary"));
                    }
                }
                PointKind::CavityBoundary => {
                    let d = self.spec.distance_to_cavity(*p);
                    if d > tol {
                        return Err(format!("cavity point {i} is {d:e} off the boundary"));
                    }
                }
                PointKind::Interior => {
                    if self.spec.point_in_domain(*p, tol) != Membership::Interior {
                        return Err(format!("interior point {i} {p:?} is not interior"));
                    }
                }
            }
        }
        let mut sorted = self.coords.clone();
        sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err("duplicate coordinates".into());
        }
        Ok(())
    }
}

/// Knobs of the sampler beyond the point counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingOptions {
    /// Ratio of interior grid candidates to interior points requested.
    pub grid_oversample: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self { grid_oversample: 2.0 }
    }
}

impl SamplingOptions {
    /// Default boundary budget for a cloud of `n` points, split 70/30
    /// between the outer square and the cavity.
    pub fn default_boundary_counts(n: usize) -> (usize, usize) {
        let budget = (4.0 * (n as f64).sqrt()).round() as usize;
        let outer = (0.7 * budget as f64).round() as usize;
        (outer, budget - outer)
    }
}

/// Samples `n` points with the default grid oversampling.
pub fn sample_point_cloud(
    spec: &DomainSpec,
    n: usize,
    n_outer: usize,
    n_cavity: usize,
    seed: u64,
) -> Result<PointCloud, GeometryError> {
    sample_point_cloud_with(spec, n, n_outer, n_cavity, seed, &SamplingOptions::default())
}

/// Samples a cloud of exactly `n` points.
///
/// Boundary points are spaced uniformly in arc length (outer square from the
/// corner (h, -h), cavity from its first vertex). Interior points are picked
/// from a uniform grid, kept half a grid spacing away from both boundaries,
/// by farthest-point sampling against the boundary points.
pub fn sample_point_cloud_with(
    spec: &DomainSpec,
    n: usize,
    n_outer: usize,
    n_cavity: usize,
    seed: u64,
    options: &SamplingOptions,
) -> Result<PointCloud, GeometryError> {
    if n < 50 {
        return Err(GeometryError::InvalidSampling(format!("N = {n} is below the minimum of 50")));
    }
    if n <= n_outer + n_cavity {
        return Err(GeometryError::InvalidSampling(format!(
            "N = {n} leaves no interior points after {n_outer} + {n_cavity} boundary points"
        )));
    }
    if n_outer < 4 || n_cavity < spec.n_poly as usize {
        return Err(GeometryError::InvalidSampling(format!(
            "boundary counts ({n_outer}, {n_cavity}) too small to resolve the corners"
        )));
    }
    if !(options.grid_oversample > 0.0) {
        return Err(GeometryError::InvalidSampling("grid_oversample must be positive".into()));
    }

    let mut coords = Vec::with_capacity(n);
    let mut kinds = Vec::with_capacity(n);

    let outer = spec.outer_corners();
    for k in 0..n_outer {
        coords.push(closed_polyline_point(&outer, k as f64 / n_outer as f64));
        kinds.push(PointKind::OuterBoundary);
    }
    let cavity = spec.cavity_polygon();
    for k in 0..n_cavity {
        coords.push(closed_polyline_point(&cavity, k as f64 / n_cavity as f64));
        kinds.push(PointKind::CavityBoundary);
    }

    let n_interior = n - n_outer - n_cavity;
    let candidates = interior_grid(spec, n_interior, options.grid_oversample);
    if candidates.len() < n_interior {
        return Err(GeometryError::GridTooCoarse {
            required: n_interior,
            available: candidates.len(),
        });
    }
    let picked = farthest_point_sampling(&candidates, &coords, n_interior, seed);
    for i in picked {
        coords.push(candidates[i]);
        kinds.push(PointKind::Interior);
    }
    Ok(PointCloud::new(*spec, coords, kinds))
}

/// Uniform grid candidates kept at least half a spacing from every boundary.
fn interior_grid(spec: &DomainSpec, n_interior: usize, oversample: f64) -> Vec<[f64; 2]> {
    let spacing = (spec.area() / (oversample * n_interior as f64)).sqrt();
    let per_axis = (spec.side / spacing).floor() as usize;
    let margin = 0.5 * spacing * (1.0 - 1e-9);
    let origin = -0.5 * (per_axis as f64 - 1.0) * spacing;
    let mut out = Vec::new();
    for j in 0..per_axis {
        let y = origin + j as f64 * spacing;
        for i in 0..per_axis {
            let x = origin + i as f64 * spacing;
            let p = [x, y];
            if spec.distance_to_outer(p) < margin || spec.distance_to_cavity(p) < margin {
                continue;
            }
            if spec.point_in_domain(p, 1e-12) != Membership::Interior {
                continue;
            }
            out.push(p);
        }
    }
    out
}

/// Greedy farthest-point selection of `count` candidates.
///
/// Distances start from the `fixed` points; the first pick is drawn from the
/// seed. Candidates are processed in a canonical (y, x) order, and ties go to
/// the lowest canonical position, so the selected set does not depend on how
/// the candidates are ordered. Returns indices into `candidates`, in pick order.
pub fn farthest_point_sampling(
    candidates: &[[f64; 2]],
    fixed: &[[f64; 2]],
    count: usize,
    seed: u64,
) -> Vec<usize> {
    let count = count.min(candidates.len());
    if count == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (candidates[a], candidates[b]);
        pa[1].total_cmp(&pb[1]).then(pa[0].total_cmp(&pb[0])).then(a.cmp(&b))
    });
    let pts: Vec<[f64; 2]> = order.iter().map(|&i| candidates[i]).collect();
    let dist2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);

    let mut best: Vec<f64> = pts
        .iter()
        .map(|&p| fixed.iter().map(|&f| dist2(p, f)).fold(f64::INFINITY, f64::min))
        .collect();
    let mut taken = vec![false; pts.len()];
    let mut picks = Vec::with_capacity(count);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next = rng.random_range(0..pts.len());
    loop {
        taken[next] = true;
        picks.push(order[next]);
        if picks.len() == count {
            break;
        }
        let chosen = pts[next];
        let mut arg = usize::MAX;
        let mut far = f64::NEG_INFINITY;
        for (i, p) in pts.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = dist2(*p, chosen);
            if d < best[i] {
                best[i] = d;
            }
            if best[i] > far {
                far = best[i];
                arg = i;
            }
        }
        next = arg;
    }
    picks
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;

    fn hexagon() -> DomainSpec {
        DomainSpec::family(6, 17.0, 2.0).unwrap()
    }

    #[test]
    fn default_size_cloud_satisfies_invariants() {
        for spec in [hexagon(), DomainSpec::family(4, 33.0, 1.6).unwrap()] {
            let (o, c) = SamplingOptions::default_boundary_counts(2021);
            let cloud = sample_point_cloud(&spec, 2021, o, c, 7).unwrap();
            assert_eq!(cloud.len(), 2021);
            assert_eq!(cloud.count(PointKind::OuterBoundary), o);
            assert_eq!(cloud.count(PointKind::CavityBoundary), c);
            cloud.validate(1e-12).unwrap();
            assert!(cloud.temperature.is_none());
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_point_cloud(&hexagon(), 300, 50, 20, 3).unwrap();
        let b = sample_point_cloud(&hexagon(), 300, 50, 20, 3).unwrap();
        assert_eq!(a, b);
        let c = sample_point_cloud(&hexagon(), 300, 50, 20, 4).unwrap();
        assert_ne!(a.coords, c.coords);
    }

    #[test]
    fn permutation_keeps_point_set() {
        let a = sample_point_cloud(&hexagon(), 200, 40, 16, 1).unwrap();
        let mut perm: Vec<usize> = (0..a.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
        let b = a.permuted(&perm);
        let key = |c: &PointCloud| {
            let mut v: Vec<_> = c.coords.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect();
            v.sort();
            v
        };
        assert_eq!(key(&a), key(&b));
        b.validate(1e-12).unwrap();
    }

    #[test]
    fn coarse_grid_reports_counts() {
        let opts = SamplingOptions { grid_oversample: 0.2 };
        let err = sample_point_cloud_with(&hexagon(), 400, 56, 24, 0, &opts).unwrap_err();
        match err {
            GeometryError::GridTooCoarse { required, available } => {
                assert_eq!(required, 320);
                assert!(available < required);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(sample_point_cloud(&hexagon(), 40, 10, 10, 0).is_err());
        assert!(sample_point_cloud(&hexagon(), 100, 60, 40, 0).is_err());
    }

    #[test]
    fn small_plate_stays_in_range() {
        let spec = DomainSpec::family(7, 5.0, 1.6).unwrap();
        let cloud = sample_point_cloud(&spec, 400, 56, 24, 2).unwrap();
        assert!(cloud.coords.iter().all(|p| p[0].abs() <= 0.8 && p[1].abs() <= 0.8));
    }

    #[test]
    fn fps_invariant_to_candidate_order() {
        let spec = hexagon();
        let cands = interior_grid(&spec, 150, 2.0);
        let fixed = vec![[1.0, 1.0], [-1.0, 0.0]];
        let picks = farthest_point_sampling(&cands, &fixed, 60, 11);
        let chosen: Vec<_> = picks.iter().map(|&i| cands[i]).collect();

        let mut perm: Vec<usize> = (0..cands.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
        let shuffled: Vec<_> = perm.iter().map(|&i| cands[i]).collect();
        let picks2 = farthest_point_sampling(&shuffled, &fixed, 60, 11);
        let chosen2: Vec<_> = picks2.iter().map(|&i| shuffled[i]).collect();
        assert_eq!(chosen, chosen2);
    }
}
