use serde::{Deserialize, Serialize};

use super::{GeometryError, PointCloud, PointKind};

/// Sparse displacement observations on a cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSet {
    pub indices: Vec<usize>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl SensorSet {
    /// Reads the sensor values off the cloud's reference displacement.
    pub fn from_reference(cloud: &PointCloud, indices: Vec<usize>) -> Result<Self, GeometryError> {
        let reference = cloud.reference.as_ref().ok_or_else(|| {
            GeometryError::InvalidSampling("cloud has no reference displacement".into())
        })?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= cloud.len()) {
            return Err(GeometryError::InvalidSampling(format!("sensor index {bad} out of range")));
        }
        let u = indices.iter().map(|&i| reference[i][0]).collect();
        let v = indices.iter().map(|&i| reference[i][1]).collect();
        Ok(Self { indices, u, v })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Places `m` sensors approximately evenly over the plate.
///
/// A `k x k` lattice with `k = ceil(sqrt(m))` is laid over the plate with
/// spacing `side / (k + 1)`. Nodes inside the cavity or within one spacing of
/// it are dropped; if fewer than `m` nodes survive, `k` grows by one and the
/// lattice is rebuilt. Surplus nodes are thinned by farthest-point selection
/// starting from the first node in row-major order. Each selected node is
/// then mapped to the nearest unused non-cavity cloud point.
pub fn place_sensors(cloud: &PointCloud, m: usize) -> Result<Vec<usize>, GeometryError> {
    let candidates: Vec<usize> = (0..cloud.len())
        .filter(|&i| cloud.kinds[i] != PointKind::CavityBoundary)
        .collect();
    if m == 0 || m > candidates.len() {
        return Err(GeometryError::TooManySensors { requested: m, available: candidates.len() });
    }
    let spec = &cloud.spec;
    let h = spec.half_side();

    let mut k = (m as f64).sqrt().ceil() as usize;
    let nodes = loop {
        let spacing = spec.side / (k as f64 + 1.0);
        let mut nodes = Vec::with_capacity(k * k);
        for j in 0..k {
            for i in 0..k {
                let p = [-h + (i + 1) as f64 * spacing, -h + (j + 1) as f64 * spacing];
                if spec.distance_to_cavity(p) < spacing || inside_cavity(spec, p) {
                    continue;
                }
                nodes.push(p);
            }
        }
        if nodes.len() >= m {
            break nodes;
        }
        if k > 4 * candidates.len() {
            return Err(GeometryError::TooManySensors { requested: m, available: nodes.len() });
        }
        k += 1;
    };

    let selected = thin_lattice(&nodes, m);
    let mut used = vec![false; cloud.len()];
    let mut out = Vec::with_capacity(m);
    for node in selected {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for &i in &candidates {
            if used[i] {
                continue;
            }
            let p = cloud.coords[i];
            let d = (p[0] - node[0]).powi(2) + (p[1] - node[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        used[best] = true;
        out.push(best);
    }
    Ok(out)
}

fn inside_cavity(spec: &super::DomainSpec, p: [f64; 2]) -> bool {
    let verts = spec.cavity_polygon();
    let n = verts.len();
    (0..n).all(|k| {
        let a = verts[k];
        let b = verts[(k + 1) % n];
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
    })
}

/// Deterministic farthest-point thinning that starts at node 0.
fn thin_lattice(nodes: &[[f64; 2]], m: usize) -> Vec<[f64; 2]> {
    if nodes.len() == m {
        return nodes.to_vec();
    }
    let mut best = vec![f64::INFINITY; nodes.len()];
    let mut taken = vec![false; nodes.len()];
    let mut out = Vec::with_capacity(m);
    let mut next = 0usize;
    loop {
        taken[next] = true;
        out.push(nodes[next]);
        if out.len() == m {
            return out;
        }
        let c = nodes[next];
        let mut arg = usize::MAX;
        let mut far = f64::NEG_INFINITY;
        for (i, p) in nodes.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
            best[i] = best[i].min(d);
            if best[i] > far {
                far = best[i];
                arg = i;
            }
        }
        next = arg;
    }
}
