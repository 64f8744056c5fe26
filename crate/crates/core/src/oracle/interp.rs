use crate::geometry::PointCloud;

use super::fem::{element_gradient, NodalField};
use super::mesh::Mesh;
use super::OracleError;

/// Points within this distance of the meshed region are accepted.
pub const SNAP_TOLERANCE: f64 = 1e-9;

/// Uniform-grid bucket index over triangle bounding boxes.
pub struct TriangleLocator<'m> {
    mesh: &'m Mesh,
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'m> TriangleLocator<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &mesh.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let per_axis = ((mesh.triangle_count() as f64).sqrt().ceil() as usize).max(1);
        let cell = span / per_axis as f64;
        let dims = [per_axis + 1, per_axis + 1];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        let locator_cell = |v: f64, d: usize| -> usize {
            (((v - lo[d]) / cell).floor().max(0.0) as usize).min(dims[d] - 1)
        };
        for t in 0..mesh.triangle_count() {
            let pts = mesh.triangles[t].map(|i| mesh.nodes[i]);
            let mut tlo = [f64::INFINITY; 2];
            let mut thi = [f64::NEG_INFINITY; 2];
            for p in pts {
                for d in 0..2 {
                    tlo[d] = tlo[d].min(p[d] - SNAP_TOLERANCE);
                    thi[d] = thi[d].max(p[d] + SNAP_TOLERANCE);
                }
            }
            for j in locator_cell(tlo[1], 1)..=locator_cell(thi[1], 1) {
                for i in locator_cell(tlo[0], 0)..=locator_cell(thi[0], 0) {
                    buckets[j * dims[0] + i].push(t);
                }
            }
        }
        Self { mesh, origin: lo, cell, dims, buckets }
    }

    /// Lowest-index triangle containing `p` (within the snap tolerance),
    /// with the barycentric coordinates of `p` in it.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let i = (p[0] - self.origin[0]) / self.cell;
        let j = (p[1] - self.origin[1]) / self.cell;
        if i < -1.0 || j < -1.0 {
            return None;
        }
        let i = (i.floor().max(0.0) as usize).min(self.dims[0] - 1);
        let j = (j.floor().max(0.0) as usize).min(self.dims[1] - 1);
        // Bucket lists are built in ascending triangle order.
        for &t in &self.buckets[j * self.dims[0] + i] {
            if let Some(bary) = contains(self.mesh, t, p) {
                return Some((t, bary));
            }
        }
        None
    }
}

fn contains(mesh: &Mesh, t: usize, p: [f64; 2]) -> Option<[f64; 3]> {
    let [a, b, c] = mesh.triangles[t].map(|i| mesh.nodes[i]);
    for (k, vertex) in [a, b, c].iter().enumerate() {
        if *vertex == p {
            let mut bary = [0.0; 3];
            bary[k] = 1.0;
            return Some(bary);
        }
    }
    let area2 = mesh.signed_area2(t);
    let l0 = ((b[0] - p[0]) * (c[1] - p[1]) - (c[0] - p[0]) * (b[1] - p[1])) / area2;
    let l1 = ((c[0] - p[0]) * (a[1] - p[1]) - (a[0] - p[0]) * (c[1] - p[1])) / area2;
    let l2 = 1.0 - l0 - l1;
    let bary = [l0, l1, l2];
    if bary.iter().all(|&l| l >= 0.0) {
        return Some(bary);
    }
    let d = [
        crate::geometry::segment_distance(a, b, p),
        crate::geometry::segment_distance(b, c, p),
        crate::geometry::segment_distance(c, a, p),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    (d <= SNAP_TOLERANCE).then_some(bary)
}

/// Copies the cloud and fills temperature, temperature gradient and the
/// reference displacement by interpolation on the mesh.
pub fn interpolate_to_cloud(
    mesh: &Mesh,
    temperature: &NodalField,
    displacement: &NodalField,
    cloud: &PointCloud,
) -> Result<PointCloud, OracleError> {
    let n = mesh.node_count();
    if temperature.len() != n {
        return Err(OracleError::SizeMismatch { expected: n, found: temperature.len() });
    }
    if displacement.len() != n || displacement.width != 2 {
        return Err(OracleError::SizeMismatch { expected: n, found: displacement.len() });
    }
    let locator = TriangleLocator::new(mesh);
    let mut temp = Vec::with_capacity(cloud.len());
    let mut grad = Vec::with_capacity(cloud.len());
    let mut reference = Vec::with_capacity(cloud.len());
    for (idx, &p) in cloud.coords.iter().enumerate() {
        let (t, bary) = locator
            .locate(p)
            .ok_or(OracleError::PointOutsideMesh { index: idx, point: p })?;
        let tri = mesh.triangles[t];
        temp.push((0..3).map(|i| bary[i] * temperature.value(tri[i])).sum());
        grad.push(element_gradient(mesh, temperature, t));
        let mut uv = [0.0; 2];
        for i in 0..3 {
            let node = displacement.pair(tri[i]);
            uv[0] += bary[i] * node[0];
            uv[1] += bary[i] * node[1];
        }
        reference.push(uv);
    }
    let mut out = cloud.clone();
    out.temperature = Some(temp);
    out.temp_grad = Some(grad);
    out.reference = Some(reference);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_point_cloud, DomainSpec, PointKind};
    use crate::oracle::build_mesh;

    #[test]
    fn nodal_points_get_nodal_values() {
        let spec = DomainSpec::family(5, 9.0, 2.0).unwrap();
        let mesh = build_mesh(&spec, 30, 6).unwrap();
        let t = NodalField::scalar((0..mesh.node_count()).map(|i| (i as f64).sin()).collect());
        let uv = NodalField::vector(&vec![[0.0, 0.0]; mesh.node_count()]);
        let picks: Vec<usize> = (0..mesh.node_count()).step_by(7).collect();
        let coords: Vec<_> = picks.iter().map(|&i| mesh.nodes[i]).collect();
        let kinds = vec![PointKind::Interior; coords.len()];
        let cloud = crate::geometry::PointCloud::new(spec, coords, kinds);
        let out = interpolate_to_cloud(&mesh, &t, &uv, &cloud).unwrap();
        for (k, &node) in picks.iter().enumerate() {
            assert_eq!(out.temperature.as_ref().unwrap()[k], t.value(node));
        }
    }

    #[test]
    fn linear_fields_are_exact() {
        let spec = DomainSpec::family(8, 31.0, 1.8).unwrap();
        let mesh = build_mesh(&spec, 48, 8).unwrap();
        let f = |p: [f64; 2]| 0.25 - 1.5 * p[0] + 0.75 * p[1];
        let t = NodalField::scalar(mesh.nodes.iter().map(|&p| f(p)).collect());
        let uv = NodalField::vector(&mesh.nodes.iter().map(|&p| [f(p), -f(p)]).collect::<Vec<_>>());
        let cloud = sample_point_cloud(&spec, 300, 50, 20, 1).unwrap();
        let out = interpolate_to_cloud(&mesh, &t, &uv, &cloud).unwrap();
        for (k, p) in cloud.coords.iter().enumerate() {
            let g = out.temp_grad.as_ref().unwrap()[k];
            assert!((g[0] + 1.5).abs() < 1e-12 && (g[1] - 0.75).abs() < 1e-12);
            assert!((out.temperature.as_ref().unwrap()[k] - f(*p)).abs() < 1e-13);
            assert!((out.reference.as_ref().unwrap()[k][1] + f(*p)).abs() < 1e-13);
        }
    }

    #[test]
    fn outside_point_reports_index() {
        let spec = DomainSpec::family(6, 1.0, 2.0).unwrap();
        let mesh = build_mesh(&spec, 24, 4).unwrap();
        let t = NodalField::scalar(vec![0.0; mesh.node_count()]);
        let uv = NodalField::vector(&vec![[0.0, 0.0]; mesh.node_count()]);
        let cloud = crate::geometry::PointCloud::new(
            spec,
            vec![[0.5, 0.5], [0.0, 0.0]],
            vec![PointKind::Interior; 2],
        );
        match interpolate_to_cloud(&mesh, &t, &uv, &cloud) {
            Err(OracleError::PointOutsideMesh { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
