use std::io::Write;

use crate::geometry::{BoundaryKind, DomainSpec};

use super::OracleError;

/// Conforming linear-triangle mesh of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    /// Boundary tag per node, `None` for interior nodes.
    pub boundary: Vec<Option<BoundaryKind>>,
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Twice the signed area of triangle `t`.
    pub fn signed_area2(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
    }

    pub fn area(&self, t: usize) -> f64 {
        0.5 * self.signed_area2(t)
    }

    /// Longest edge of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        [dist(a, b), dist(b, c), dist(c, a)].into_iter().fold(0.0, f64::max)
    }

    /// Largest element diameter.
    pub fn max_diameter(&self) -> f64 {
        (0..self.triangle_count()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    /// Checks orientation, minimum area and boundary tagging.
    pub fn validate(&self) -> Result<(), OracleError> {
        for t in 0..self.triangle_count() {
            if self.area(t) <= 1e-14 {
                return Err(OracleError::DegenerateCell { cell: t, area: self.area(t) });
            }
        }
        if self.boundary.len() != self.nodes.len() {
            return Err(OracleError::SizeMismatch {
                expected: self.nodes.len(),
                found: self.boundary.len(),
            });
        }
        Ok(())
    }

    /// Writes the mesh as plain text:
    ///
    /// ```text
    /// nodes <count>
    /// <x> <y> <tag: 0 interior | 1 outer | 2 cavity>
    /// triangles <count>
    /// <a> <b> <c>
    /// ```
    pub fn write_triangle_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "nodes {}", self.nodes.len())?;
        for (p, tag) in self.nodes.iter().zip(&self.boundary) {
            let code = match tag {
                None => 0,
                Some(BoundaryKind::Outer) => 1,
                Some(BoundaryKind::Cavity) => 2,
            };
            writeln!(out, "{:e} {:e} {}", p[0], p[1], code)?;
        }
        writeln!(out, "triangles {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Builds a transfinite annular mesh between the cavity and the outer square.
///
/// Both boundaries are sampled with `n_ring` points, uniform in arc length
/// along each polygon edge, starting on the ray at the cavity orientation
/// angle; every polygon corner is a node, so the meshed region coincides
/// with the exact domain. `n_layers - 1` interior rings are
/// linear blends of the two boundary rings, and every quad is split along its
/// shorter diagonal.
pub fn build_mesh(spec: &DomainSpec, n_ring: usize, n_layers: usize) -> Result<Mesh, OracleError> {
    let n_poly = spec.n_poly as usize;
    if n_ring < 3 * n_poly || n_ring < 12 {
        return Err(OracleError::InvalidResolution(format!(
            "n_ring = {n_ring} must be at least 3 * {n_poly} and at least 12"
        )));
    }
    if n_layers < 4 {
        return Err(OracleError::InvalidResolution(format!("n_layers = {n_layers} must be at least 4")));
    }

    let theta0 = spec.omega_deg.to_radians();
    let cavity = spec.cavity_polygon();
    let inner = sample_ring(&cavity, n_ring)?;

    let h = spec.half_side();
    let reach = h / theta0.cos().abs().max(theta0.sin().abs());
    let start = [reach * theta0.cos(), reach * theta0.sin()];
    let mut corners: Vec<[f64; 2]> = spec.outer_corners().to_vec();
    let angle_from_start = |p: &[f64; 2]| (p[1].atan2(p[0]) - theta0).rem_euclid(std::f64::consts::TAU);
    corners.sort_by(|a, b| angle_from_start(a).total_cmp(&angle_from_start(b)));
    let mut outer_poly = vec![start];
    for c in corners {
        if dist(c, start) > 1e-12 {
            outer_poly.push(c);
        }
    }
    let outer = sample_ring(&outer_poly, n_ring)?;

    let mut nodes = Vec::with_capacity((n_layers + 1) * n_ring);
    let mut boundary = Vec::with_capacity(nodes.capacity());
    for layer in 0..=n_layers {
        let t = layer as f64 / n_layers as f64;
        for k in 0..n_ring {
            let p = if layer == 0 {
                inner[k]
            } else if layer == n_layers {
                outer[k]
            } else {
                [
                    (1.0 - t) * inner[k][0] + t * outer[k][0],
                    (1.0 - t) * inner[k][1] + t * outer[k][1],
                ]
            };
            nodes.push(p);
            boundary.push(match layer {
                0 => Some(BoundaryKind::Cavity),
                l if l == n_layers => Some(BoundaryKind::Outer),
                _ => None,
            });
        }
    }

    let id = |layer: usize, k: usize| layer * n_ring + (k % n_ring);
    let mut triangles = Vec::with_capacity(2 * n_ring * n_layers);
    for layer in 0..n_layers {
        for k in 0..n_ring {
            let a = id(layer, k);
            let b = id(layer + 1, k);
            let c = id(layer + 1, k + 1);
            let d = id(layer, k + 1);
            if dist(nodes[a], nodes[c]) <= dist(nodes[b], nodes[d]) {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }

    let mesh = Mesh { nodes, triangles, boundary };
    mesh.validate()?;
    Ok(mesh)
}

/// Samples a closed polyline with `n` points starting at its first vertex.
///
/// Each edge receives a share of the samples proportional to its length
/// (largest-remainder rounding, at least one per edge), spaced uniformly
/// along the edge, so every polygon vertex is a sample.
fn sample_ring(poly: &[[f64; 2]], n: usize) -> Result<Vec<[f64; 2]>, OracleError> {
    let m = poly.len();
    if n < m {
        return Err(OracleError::InvalidResolution(format!(
            "ring of {n} samples cannot resolve {m} polygon vertices"
        )));
    }
    let lengths: Vec<f64> = (0..m).map(|k| dist(poly[k], poly[(k + 1) % m])).collect();
    let total: f64 = lengths.iter().sum();
    let spare = n - m;
    let ideal: Vec<f64> = lengths.iter().map(|l| l / total * n as f64 - 1.0).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|x| 1 + x.max(0.0).floor() as usize).collect();
    let mut assigned: usize = counts.iter().sum::<usize>() - m;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - (counts[a] - 1) as f64;
        let rb = ideal[b] - (counts[b] - 1) as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    // Very short edges are rounded up to one sample; take the excess back
    // from the longest edges.
    while assigned > spare {
        let k = (0..m).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap_or(0);
        counts[k] -= 1;
        assigned -= 1;
    }
    for &k in order.iter().cycle() {
        if assigned >= spare {
            break;
        }
        counts[k] += 1;
        assigned += 1;
    }
    let mut ring = Vec::with_capacity(n);
    for k in 0..m {
        let a = poly[k];
        let b = poly[(k + 1) % m];
        for j in 0..counts[k] {
            let t = j as f64 / counts[k] as f64;
            ring.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    debug_assert_eq!(ring.len(), n);
    Ok(ring)
}
