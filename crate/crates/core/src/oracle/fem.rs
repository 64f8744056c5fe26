//! Linear-triangle Galerkin solvers for steady heat conduction and
//! plane-stress thermoelasticity.
//!
//! The elasticity operator is assembled in the normalized form where the
//! shear modulus `E / (2 (1 + nu))` equals one half, i.e. `E / (1 + nu) = 1`:
//!
//! ```text
//! -d/dx( a u_x + b v_y ) - d/dy( (u_y + v_x) / 2 ) + beta T_x = s_x
//! -d/dy( b u_x + a v_y ) - d/dx( (u_y + v_x) / 2 ) + beta T_y = s_y
//! a = 1 / (1 - nu), b = nu / (1 - nu), beta = alpha / (1 - nu)
//! ```

use crate::geometry::BoundaryKind;

use super::mesh::Mesh;
use super::sparse::{conjugate_gradient, CsrMatrix, SolveStats, TripletBuilder};
use super::{Material, OracleError};

/// Relative residual targeted by every linear solve.
pub const SOLVER_TOLERANCE: f64 = 1e-10;

/// Nodal values: one (temperature) or two (displacement) per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub width: usize,
    pub data: Vec<f64>,
}

impl NodalField {
    pub fn scalar(values: Vec<f64>) -> Self {
        Self { width: 1, data: values }
    }

    pub fn vector(values: &[[f64; 2]]) -> Self {
        Self { width: 2, data: values.iter().flatten().copied().collect() }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn value(&self, node: usize) -> f64 {
        self.data[node * self.width]
    }

    pub fn pair(&self, node: usize) -> [f64; 2] {
        [self.data[node * self.width], self.data[node * self.width + 1]]
    }
}

/// Degree-5, seven-point triangle quadrature (barycentric point, weight
/// normalized to unit area).
pub(crate) const QUADRATURE: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_770;
    const B1: f64 = 0.470_142_064_105_115;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W1: f64 = 0.132_394_152_788_506;
    const W2: f64 = 0.125_939_180_544_827;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// Shape-function gradients of triangle `t`: `grads[i] = (dphi_i/dx, dphi_i/dy)`.
pub(crate) fn shape_gradients(mesh: &Mesh, t: usize) -> [[f64; 2]; 3] {
    let [p0, p1, p2] = mesh.triangles[t].map(|i| mesh.nodes[i]);
    let area2 = mesh.signed_area2(t);
    [
        [(p1[1] - p2[1]) / area2, (p2[0] - p1[0]) / area2],
        [(p2[1] - p0[1]) / area2, (p0[0] - p2[0]) / area2],
        [(p0[1] - p1[1]) / area2, (p1[0] - p0[0]) / area2],
    ]
}

pub(crate) fn quadrature_point(mesh: &Mesh, t: usize, bary: [f64; 3]) -> [f64; 2] {
    let [p0, p1, p2] = mesh.triangles[t].map(|i| mesh.nodes[i]);
    [
        bary[0] * p0[0] + bary[1] * p1[0] + bary[2] * p2[0],
        bary[0] * p0[1] + bary[1] * p1[1] + bary[2] * p2[1],
    ]
}

/// Constant gradient of a nodal scalar field on triangle `t`.
pub fn element_gradient(mesh: &Mesh, field: &NodalField, t: usize) -> [f64; 2] {
    let g = shape_gradients(mesh, t);
    let tri = mesh.triangles[t];
    let mut out = [0.0; 2];
    for i in 0..3 {
        let v = field.value(tri[i]);
        out[0] += g[i][0] * v;
        out[1] += g[i][1] * v;
    }
    out
}

/// Assembles the full (unconstrained) Laplace stiffness matrix.
pub fn assemble_laplace(mesh: &Mesh) -> CsrMatrix {
    let mut trip = TripletBuilder::new(mesh.node_count());
    for t in 0..mesh.triangle_count() {
        let g = shape_gradients(mesh, t);
        let area = mesh.area(t);
        let tri = mesh.triangles[t];
        for i in 0..3 {
            for j in 0..3 {
                trip.add(tri[i], tri[j], area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]));
            }
        }
    }
    trip.build()
}

/// Solves the Laplace equation with Dirichlet data on every boundary node.
pub fn solve_laplace<F>(mesh: &Mesh, dirichlet: F) -> Result<(NodalField, SolveStats), OracleError>
where
    F: Fn([f64; 2], BoundaryKind) -> f64,
{
    let full = assemble_laplace(mesh);
    let n = mesh.node_count();
    let fixed: Vec<Option<f64>> = (0..n)
        .map(|i| mesh.boundary[i].map(|kind| dirichlet(mesh.nodes[i], kind)))
        .collect();
    let (values, stats) = solve_constrained(&full, &vec![0.0; n], &fixed)?;
    Ok((NodalField::scalar(values), stats))
}

/// Temperature with T = 1 on the outer square and T = 0 on the cavity.
pub fn solve_temperature(mesh: &Mesh) -> Result<NodalField, OracleError> {
    let (t, _) = solve_laplace(mesh, |_, kind| match kind {
        BoundaryKind::Outer => 1.0,
        BoundaryKind::Cavity => 0.0,
    })?;
    Ok(t)
}

/// Plane-stress constitutive matrix in the normalized units (Voigt order
/// xx, yy, engineering xy).
pub fn constitutive_matrix(mat: &Material) -> [[f64; 3]; 3] {
    let a = 1.0 / (1.0 - mat.nu);
    let b = mat.nu / (1.0 - mat.nu);
    [[a, b, 0.0], [b, a, 0.0], [0.0, 0.0, 0.5]]
}

/// Assembles the full elasticity stiffness matrix; dof `2 i` is u at node i
/// and `2 i + 1` is v.
pub fn assemble_elasticity(mesh: &Mesh, mat: &Material) -> CsrMatrix {
    let d = constitutive_matrix(mat);
    let mut trip = TripletBuilder::new(2 * mesh.node_count());
    for t in 0..mesh.triangle_count() {
        let g = shape_gradients(mesh, t);
        let area = mesh.area(t);
        let tri = mesh.triangles[t];
        // Strain-displacement rows for each of the six element dofs.
        let mut bcols = [[0.0; 3]; 6];
        for i in 0..3 {
            bcols[2 * i] = [g[i][0], 0.0, g[i][1]];
            bcols[2 * i + 1] = [0.0, g[i][1], g[i][0]];
        }
        for p in 0..6 {
            let db: [f64; 3] = std::array::from_fn(|r| (0..3).map(|c| d[r][c] * bcols[p][c]).sum());
            for q in 0..6 {
                let k = area * (0..3).map(|r| bcols[q][r] * db[r]).sum::<f64>();
                trip.add(2 * tri[q / 2] + q % 2, 2 * tri[p / 2] + p % 2, k);
            }
        }
    }
    trip.build()
}

/// Loading of an elasticity solve.
pub struct ElasticityLoad<'a> {
    /// Nodal temperature whose gradient drives the thermal term.
    pub temperature: Option<&'a NodalField>,
    /// Distributed body force evaluated by quadrature.
    pub body: Option<&'a dyn Fn([f64; 2]) -> [f64; 2]>,
    /// Displacement prescribed on boundary nodes.
    pub dirichlet: &'a dyn Fn([f64; 2]) -> [f64; 2],
}

/// Solves the normalized plane-stress system for a general load.
pub fn solve_elasticity(
    mesh: &Mesh,
    mat: &Material,
    load: &ElasticityLoad<'_>,
) -> Result<(NodalField, SolveStats), OracleError> {
    mat.validate()?;
    let n = mesh.node_count();
    if let Some(t) = load.temperature {
        if t.len() != n || t.width != 1 {
            return Err(OracleError::SizeMismatch { expected: n, found: t.len() });
        }
    }
    let beta = mat.alpha / (1.0 - mat.nu);
    let mut rhs = vec![0.0; 2 * n];
    for t in 0..mesh.triangle_count() {
        let area = mesh.area(t);
        let tri = mesh.triangles[t];
        if let Some(temp) = load.temperature {
            let grad = element_gradient(mesh, temp, t);
            for &node in &tri {
                rhs[2 * node] -= beta * grad[0] * area / 3.0;
                rhs[2 * node + 1] -= beta * grad[1] * area / 3.0;
            }
        }
        if let Some(body) = load.body {
            for (bary, w) in QUADRATURE {
                let f = body(quadrature_point(mesh, t, bary));
                for i in 0..3 {
                    rhs[2 * tri[i]] += w * area * f[0] * bary[i];
                    rhs[2 * tri[i] + 1] += w * area * f[1] * bary[i];
                }
            }
        }
    }
    let mut fixed = vec![None; 2 * n];
    for i in 0..n {
        if mesh.boundary[i].is_some() {
            let g = (load.dirichlet)(mesh.nodes[i]);
            fixed[2 * i] = Some(g[0]);
            fixed[2 * i + 1] = Some(g[1]);
        }
    }
    let full = assemble_elasticity(mesh, mat);
    let (values, stats) = solve_constrained(&full, &rhs, &fixed)?;
    Ok((NodalField { width: 2, data: values }, stats))
}

/// Displacement driven by the temperature field with u = v = 0 on every boundary.
pub fn solve_plane_stress(
    mesh: &Mesh,
    temperature: &NodalField,
    mat: &Material,
) -> Result<NodalField, OracleError> {
    let zero = |_: [f64; 2]| [0.0, 0.0];
    let load = ElasticityLoad { temperature: Some(temperature), body: None, dirichlet: &zero };
    Ok(solve_elasticity(mesh, mat, &load)?.0)
}

/// Eliminates prescribed dofs and solves the remaining SPD system.
fn solve_constrained(
    full: &CsrMatrix,
    rhs: &[f64],
    fixed: &[Option<f64>],
) -> Result<(Vec<f64>, SolveStats), OracleError> {
    let n = full.n;
    let mut free_index = vec![usize::MAX; n];
    let mut free = Vec::new();
    for i in 0..n {
        if fixed[i].is_none() {
            free_index[i] = free.len();
            free.push(i);
        }
    }
    let mut trip = TripletBuilder::new(free.len());
    let mut b = vec![0.0; free.len()];
    for (fi, &i) in free.iter().enumerate() {
        b[fi] = rhs[i];
        for k in full.row_ptr[i]..full.row_ptr[i + 1] {
            let j = full.cols[k];
            match fixed[j] {
                Some(g) => b[fi] -= full.vals[k] * g,
                None => trip.add(fi, free_index[j], full.vals[k]),
            }
        }
    }
    let reduced = trip.build();
    let max_iter = 20 * free.len().max(10);
    let (x, stats) = conjugate_gradient(&reduced, &b, SOLVER_TOLERANCE, max_iter)?;
    let mut out: Vec<f64> = fixed.iter().map(|g| g.unwrap_or(0.0)).collect();
    for (fi, &i) in free.iter().enumerate() {
        out[i] = x[fi];
    }
    Ok((out, stats))
}

/// L2 norm over the mesh of `field_h - exact`, by quadrature, for each
/// component of the field.
pub fn l2_error<F>(mesh: &Mesh, field: &NodalField, exact: F) -> Vec<f64>
where
    F: Fn([f64; 2]) -> Vec<f64>,
{
    let w = field.width;
    let mut acc = vec![0.0; w];
    for t in 0..mesh.triangle_count() {
        let area = mesh.area(t);
        let tri = mesh.triangles[t];
        for (bary, qw) in QUADRATURE {
            let p = quadrature_point(mesh, t, bary);
            let ex = exact(p);
            for c in 0..w {
                let uh: f64 = (0..3).map(|i| bary[i] * field.data[tri[i] * w + c]).sum();
                acc[c] += qw * area * (uh - ex[c]).powi(2);
            }
        }
    }
    acc.into_iter().map(f64::sqrt).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use crate::oracle::build_mesh;

    fn mesh() -> Mesh {
        build_mesh(&DomainSpec::family(6, 17.0, 2.0).unwrap(), 48, 12).unwrap()
    }

    #[test]
    fn quadrature_integrates_quintics() {
        // Reference triangle (0,0),(1,0),(0,1): int x^2 y^3 = 2! 3! / 7! = 1/420.
        let mut acc = 0.0;
        for (b, w) in QUADRATURE {
            let (x, y) = (b[1], b[2]);
            acc += 0.5 * w * x * x * y * y * y;
        }
        assert!((acc - 1.0 / 420.0).abs() < 1e-15);
        let total: f64 = QUADRATURE.iter().map(|q| q.1).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_boundary_data_gives_constant_field() {
        let m = mesh();
        let (t, _) = solve_laplace(&m, |_, _| 0.625).unwrap();
        for v in &t.data {
            assert!((v - 0.625).abs() < 1e-9);
        }
    }

    #[test]
    fn temperature_respects_bounds() {
        let m = mesh();
        let t = solve_temperature(&m).unwrap();
        for (i, v) in t.data.iter().enumerate() {
            assert!(*v >= -1e-9 && *v <= 1.0 + 1e-9, "node {i}: {v}");
            match m.boundary[i] {
                Some(BoundaryKind::Outer) => assert_eq!(*v, 1.0),
                Some(BoundaryKind::Cavity) => assert_eq!(*v, 0.0),
                None => {}
            }
        }
    }

    #[test]
    fn stiffness_matrices_are_symmetric() {
        let m = mesh();
        assert!(assemble_laplace(&m).asymmetry() < 1e-12);
        let mat = Material::default();
        assert!(assemble_elasticity(&m, &mat).asymmetry() < 1e-12);
    }

    #[test]
    fn zero_temperature_gives_zero_displacement() {
        let m = mesh();
        let t = NodalField::scalar(vec![0.0; m.node_count()]);
        let uv = solve_plane_stress(&m, &t, &Material::default()).unwrap();
        assert!(uv.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mismatched_temperature_rejected() {
        let m = mesh();
        let t = NodalField::scalar(vec![0.0; 3]);
        assert!(matches!(
            solve_plane_stress(&m, &t, &Material::default()),
            Err(OracleError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn linear_field_reproduced_exactly() {
        // Linear Dirichlet data is reproduced exactly by P1 elements.
        let m = mesh();
        let (t, _) = solve_laplace(&m, |p, _| 0.5 + 2.0 * p[0] - p[1]).unwrap();
        for (p, v) in m.nodes.iter().zip(&t.data) {
            assert!((v - (0.5 + 2.0 * p[0] - p[1])).abs() < 1e-8);
        }
        let err = l2_error(&m, &t, |p| vec![0.5 + 2.0 * p[0] - p[1]]);
        assert!(err[0] < 1e-8);
    }
}
