//! Small dense linear-algebra helpers shared by the model fits and the
//! empirical-likelihood solver.

use nalgebra::{DMatrix, DVector};

/// Columns that are (numerically) linear combinations of earlier columns.
///
/// Modified Gram-Schmidt in column order: column `j` is flagged when the
/// norm of its residual against the retained columns is at most
/// `rel_tol` times its own norm. All-zero columns are always flagged.
pub fn dependent_columns(a: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..a.ncols() {
        let col = a.column(j).into_owned();
        let norm = col.norm();
        let mut res = col;
        for q in &basis {
            let proj = q.dot(&res);
            res.axpy(-proj, q, 1.0);
        }
        // second pass for numerical orthogonality
        for q in &basis {
            let proj = q.dot(&res);
            res.axpy(-proj, q, 1.0);
        }
        let rnorm = res.norm();
        if norm == 0.0 || rnorm <= rel_tol * norm {
            dropped.push(j);
        } else {
            basis.push(res / rnorm);
        }
    }
    dropped
}

/// Rank-deficiency tolerance for regression designs.
pub const DESIGN_RANK_TOL: f64 = 1e-10;

/// Outcome of a least-squares solve that failed on a singular design.
#[derive(Debug, Clone, PartialEq)]
pub struct RankDeficient {
    pub columns: Vec<usize>,
}

/// Minimizes `sum_i w_i (y_i - x_i . beta)^2` for nonnegative weights.
pub fn weighted_least_squares(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<DVector<f64>, RankDeficient> {
    debug_assert_eq!(x.nrows(), y.len());
    debug_assert_eq!(x.nrows(), w.len());
    let mut a = x.clone();
    let mut b = DVector::zeros(y.len());
    for i in 0..x.nrows() {
        let s = w[i].sqrt();
        a.row_mut(i).scale_mut(s);
        b[i] = s * y[i];
    }
    let dependent = dependent_columns(&a, DESIGN_RANK_TOL);
    if !dependent.is_empty() || a.nrows() < a.ncols() {
        return Err(RankDeficient { columns: dependent });
    }
    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    qr.r().solve_upper_triangular(&qtb).ok_or(RankDeficient { columns: vec![] })
}

/// Solves `h * x = rhs` for symmetric positive (semi)definite `h`.
///
/// On Cholesky failure a diagonal boost starting at `1e-10 * trace / d`
/// is added and grown tenfold until factorization succeeds.
pub fn spd_solve(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let d = h.nrows().max(1) as f64;
    let base = (h.trace().abs() / d).max(f64::MIN_POSITIVE);
    let mut boost = 1e-10 * base;
    for _ in 0..20 {
        let mut hb = h.clone();
        for k in 0..h.nrows() {
            hb[(k, k)] += boost;
        }
        if let Some(ch) = hb.cholesky() {
            return Some(ch.solve(rhs));
        }
        boost *= 10.0;
    }
    None
}
