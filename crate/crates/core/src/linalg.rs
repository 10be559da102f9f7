//! Thin helpers over `faer` for the dense routines used across the crate.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, MatRef, Side};

use crate::error::{RateError, Result};

/// Eigendecomposition of a symmetric matrix, eigenvalues in nondecreasing order.
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

pub fn sym_eigen(a: MatRef<'_, f64>) -> Result<SymEigen> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| RateError::NoConvergence {
            what: "symmetric eigendecomposition",
        })?;
    let values: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    Ok(SymEigen {
        values,
        vectors: evd.U().to_owned(),
    })
}

/// Thin SVD, singular values in nonincreasing order.
pub struct ThinSvd {
    pub u: Mat<f64>,
    pub s: Vec<f64>,
    pub v: Mat<f64>,
}

pub fn thin_svd(a: MatRef<'_, f64>) -> Result<ThinSvd> {
    let svd = a
        .thin_svd()
        .map_err(|_| RateError::NoConvergence { what: "SVD" })?;
    Ok(ThinSvd {
        u: svd.U().to_owned(),
        s: svd.S().column_vector().iter().copied().collect(),
        v: svd.V().to_owned(),
    })
}

pub fn symmetrize(a: &mut Mat<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Pseudoinverse of a symmetric matrix through its eigendecomposition.
///
/// Eigenvalues with magnitude at or below `rel_tol * max|eigenvalue|` are
/// treated as zero. Returns the pseudoinverse and the retained rank.
pub fn sym_pinv(a: MatRef<'_, f64>, rel_tol: f64) -> Result<(Mat<f64>, usize)> {
    let n = a.nrows();
    let evd = sym_eigen(a)?;
    let max_abs = evd.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cutoff = rel_tol * max_abs;
    let mut out = Mat::<f64>::zeros(n, n);
    let mut rank = 0;
    for (k, &ev) in evd.values.iter().enumerate() {
        if ev.abs() <= cutoff || max_abs == 0.0 {
            continue;
        }
        rank += 1;
        let inv = 1.0 / ev;
        let u = evd.vectors.col(k);
        for j in 0..n {
            let uj = u[j] * inv;
            if uj == 0.0 {
                continue;
            }
            for i in 0..n {
                out[(i, j)] += u[i] * uj;
            }
        }
    }
    symmetrize(&mut out);
    Ok((out, rank))
}

/// Cholesky factor of a symmetric positive definite matrix.
pub struct Cholesky {
    llt: Llt<f64>,
}

impl Cholesky {
    pub fn new(a: MatRef<'_, f64>) -> Option<Self> {
        let llt = a.llt(Side::Lower).ok()?;
        let l = llt.L();
        for i in 0..l.nrows() {
            let d = l[(i, i)];
            if !(d.is_finite() && d > 0.0) {
                return None;
            }
        }
        Some(Cholesky { llt })
    }

    pub fn log_det(&self) -> f64 {
        let l = self.llt.L();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn l(&self) -> MatRef<'_, f64> {
        self.llt.L()
    }

    pub fn solve_mat(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        self.llt.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = col_mat(rhs);
        self.llt.solve_in_place(&mut b);
        b.col(0).iter().copied().collect()
    }
}

/// Principal submatrix with row and column `skip` removed.
pub fn drop_index(a: MatRef<'_, f64>, skip: usize) -> Mat<f64> {
    let n = a.nrows();
    Mat::from_fn(n - 1, n - 1, |i, j| {
        let si = if i < skip { i } else { i + 1 };
        let sj = if j < skip { j } else { j + 1 };
        a[(si, sj)]
    })
}

/// Column `j` of `a` with entry `j` removed.
pub fn column_without(a: MatRef<'_, f64>, j: usize) -> Vec<f64> {
    (0..a.nrows()).filter(|&i| i != j).map(|i| a[(i, j)]).collect()
}

pub fn drop_entry(v: &[f64], skip: usize) -> Vec<f64> {
    v.iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, &x)| x)
        .collect()
}

pub fn col_mat(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn mat_vec(a: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.ncols(), v.len());
    let mut out = vec![0.0; a.nrows()];
    for (j, &vj) in v.iter().enumerate() {
        if vj == 0.0 {
            continue;
        }
        let c = a.col(j);
        for (o, &x) in out.iter_mut().zip(c.iter()) {
            *o += x * vj;
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn frobenius(a: MatRef<'_, f64>) -> f64 {
    a.norm_l2()
}

pub fn is_finite(a: MatRef<'_, f64>) -> bool {
    (0..a.ncols()).all(|j| a.col(j).iter().all(|x| x.is_finite()))
}
