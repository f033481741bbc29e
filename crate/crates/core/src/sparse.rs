//! Compressed-row sparse matrices and the iterative solvers used by the
//! forward stepping, layer-stripping solves and coefficient recovery.

use crate::error::{Result, WaveError};

/// Square sparse matrix in compressed row storage. Column indices are
/// sorted and unique within each row.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Assemble from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            assert!(r < n && c < n, "triplet index out of bounds");
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix { n, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, &triplets)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if *c == i {
                    d[i] = *v;
                }
            }
        }
        d
    }

    /// Sparse matrix-vector product.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(WaveError::DimMismatch(format!(
                "spmv: matrix dim {} vs vector len {}",
                self.n,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] = acc;
        }
        Ok(y)
    }

    /// In-place product avoiding allocation; `y` must have matching length.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] = acc;
        }
    }

    /// Replace row `i` by the identity row. Used for Dirichlet conditions.
    pub fn set_identity_row(&mut self, i: usize) {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        let mut has_diag = false;
        for k in lo..hi {
            if self.col_idx[k] == i {
                self.values[k] = 1.0;
                has_diag = true;
            } else {
                self.values[k] = 0.0;
            }
        }
        assert!(has_diag, "row {i} has no stored diagonal entry");
    }

    /// Zero the off-diagonal entries of column `j` in every non-Dirichlet
    /// row, moving the known contribution to the right-hand side. Keeps the
    /// matrix symmetric after Dirichlet row replacement.
    pub fn eliminate_column(&mut self, j: usize, value: f64, rhs: &mut [f64], dirichlet: &[bool]) {
        for i in 0..self.n {
            if dirichlet[i] {
                continue;
            }
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            for k in lo..hi {
                if self.col_idx[k] == j {
                    rhs[i] -= self.values[k] * value;
                    self.values[k] = 0.0;
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solver report alongside the solution.
#[derive(Clone, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    /// Relative residual after each iteration, starting value included.
    pub history: Vec<f64>,
}

/// Jacobi-preconditioned conjugate gradients for SPD systems.
/// Returns x with ||Ax - b|| / ||b|| <= tol.
pub fn solve_cg(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    if b.len() != a.dim() {
        return Err(WaveError::DimMismatch(format!(
            "solve_cg: matrix dim {} vs rhs len {}",
            a.dim(),
            b.len()
        )));
    }
    let n = a.dim();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats { iterations: 0, residual: 0.0, history: vec![0.0] }));
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = vec![1.0];
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.spmv_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(WaveError::SolverDiverged { residual: norm(&r) / bnorm, iterations: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / bnorm;
        history.push(rel);
        if rel <= tol {
            return Ok((x, SolveStats { iterations: it, residual: rel, history }));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(WaveError::SolverDiverged { residual: norm(&r) / bnorm, iterations: max_iter })
}

/// Jacobi-preconditioned BiCGStab for general (nonsymmetric) systems.
pub fn solve_bicgstab(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    if b.len() != a.dim() {
        return Err(WaveError::DimMismatch(format!(
            "solve_bicgstab: matrix dim {} vs rhs len {}",
            a.dim(),
            b.len()
        )));
    }
    let n = a.dim();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats { iterations: 0, residual: 0.0, history: vec![0.0] }));
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = match x0 {
        Some(v) => v.to_vec(),
        None => vec![0.0; n],
    };
    let ax = a.spmv(&x)?;
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut w = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut history = vec![norm(&r) / bnorm];
    if history[0] <= tol {
        let residual = history[0];
        return Ok((x, SolveStats { iterations: 0, residual, history }));
    }
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut r_hat = r_hat;
    for it in 1..=max_iter {
        let mut rho_new = dot(&r_hat, &r);
        // Lanczos breakdown (r orthogonal to the shadow residual): restart
        // with a fresh shadow direction instead of giving up
        if rho_new.abs() < 1e-14 * norm(&r) * norm(&r_hat) + 1e-300 {
            r_hat.copy_from_slice(&r);
            p.iter_mut().for_each(|x| *x = 0.0);
            v.iter_mut().for_each(|x| *x = 0.0);
            alpha = 1.0;
            w = 1.0;
            rho = 1.0;
            rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 {
                return Err(WaveError::SolverDiverged { residual: norm(&r) / bnorm, iterations: it });
            }
        }
        let beta = (rho_new / rho) * (alpha / w);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - w * v[i]);
        }
        for i in 0..n {
            phat[i] = p[i] * inv_diag[i];
        }
        a.spmv_into(&phat, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = norm(&s) / bnorm;
        if snorm <= tol {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            // confirm with the true residual before declaring convergence
            let ax = a.spmv(&x)?;
            let true_rel = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt() / bnorm;
            history.push(true_rel);
            if true_rel <= tol {
                return Ok((x, SolveStats { iterations: it, residual: true_rel, history }));
            }
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            continue;
        }
        for i in 0..n {
            shat[i] = s[i] * inv_diag[i];
        }
        a.spmv_into(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(WaveError::SolverDiverged { residual: snorm, iterations: it });
        }
        w = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + w * shat[i];
            r[i] = s[i] - w * t[i];
        }
        let rel = norm(&r) / bnorm;
        history.push(rel);
        if rel <= tol {
            let ax = a.spmv(&x)?;
            let true_rel = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt() / bnorm;
            if true_rel <= tol {
                return Ok((x, SolveStats { iterations: it, residual: true_rel, history }));
            }
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
        }
        if w.abs() < 1e-300 {
            // stabilization breakdown: force a restart on the next pass
            r_hat.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    Err(WaveError::SolverDiverged { residual: norm(&r) / bnorm, iterations: max_iter })
}
