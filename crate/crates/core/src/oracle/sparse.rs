//! Compressed sparse row matrices and a Jacobi-preconditioned conjugate
//! gradient solver. All reductions run in index order so results are
//! reproducible bit for bit.

use super::OracleError;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

/// Accumulates (row, col, value) triplets; duplicates are summed.
#[derive(Debug, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    pub fn add(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push((row, col, val));
    }

    pub fn build(mut self) -> CsrMatrix {
        // Stable sort keeps the insertion order of duplicates, so their sum
        // does not depend on the sort implementation.
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *vals.last_mut().expect("entry exists") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.n {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { n: self.n, row_ptr, cols, vals }
    }
}

impl CsrMatrix {
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[r] = acc;
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        match row.binary_search(&c) {
            Ok(k) => self.vals[self.row_ptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    /// Largest |A_ij - A_ji| relative to the largest |A_ij|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k];
                scale = scale.max(self.vals[k].abs());
                worst = worst.max((self.vals[k] - self.get(c, r)).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of a converged solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` for symmetric positive-definite `A`, starting from zero,
/// until `||b - A x|| <= tol * ||b||`.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats), OracleError> {
    let n = a.n;
    if b.len() != n {
        return Err(OracleError::SizeMismatch { expected: n, found: b.len() });
    }
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((x, SolveStats { iterations: 0, relative_residual: 0.0 }));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 0..max_iter {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(OracleError::NotPositiveDefinite { iteration: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= tol {
            // Confirm with the true residual to guard against drift.
            let mut ax = vec![0.0; n];
            a.mul_vec(&x, &mut ax);
            let true_rel = ax
                .iter()
                .zip(b)
                .map(|(ax, b)| (b - ax) * (b - ax))
                .sum::<f64>()
                .sqrt()
                / b_norm;
            if true_rel <= tol * 10.0 {
                return Ok((x, SolveStats { iterations: it + 1, relative_residual: true_rel }));
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(OracleError::NotConverged { iterations: max_iter, residual: rel })
}
