//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the library's numerical code.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Weighted normal equations `(X' W X) b = X' W y`.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let k = x[0].len();
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for ((row, &yi), &wi) in x.iter().zip(y).zip(w) {
        for r in 0..k {
            b[r] += wi * row[r] * yi;
            for c in 0..k {
                a[r][c] += wi * row[r] * row[c];
            }
        }
    }
    gauss_solve(a, b)
}

/// Bisection for the root of a decreasing function on `(lo, hi)`.
pub fn bisect_decreasing(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `dF/drho` of the one-column EL objective, `-(1/m) sum v / (1 + rho v)`.
fn el_derivative_1d(v: &[f64], rho: f64) -> f64 {
    -v.iter().map(|&x| x / (1.0 + rho * x)).sum::<f64>() / v.len() as f64
}

/// EL multiplier for one moment column by bisection on `-dF/drho`, which
/// is decreasing over the feasible interval.
pub fn el_oracle_1d(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(max > 0.0 && min < 0.0, "zero must be interior to the moment hull");
    let lo = -1.0 / max;
    let hi = -1.0 / min;
    bisect_decreasing(lo, hi, |r| -el_derivative_1d(v, r))
}

/// Feasible interval of `rho2` given `rho1` for two moment columns.
fn inner_interval(a: &[f64], b: &[f64], rho1: f64) -> Option<(f64, f64)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (&ai, &bi) in a.iter().zip(b) {
        let c = 1.0 + rho1 * ai;
        if bi > 0.0 {
            lo = lo.max(-c / bi);
        } else if bi < 0.0 {
            hi = hi.min(-c / bi);
        } else if c <= 0.0 {
            return None;
        }
    }
    (lo < hi).then_some((lo, hi))
}

/// Minimizer over `rho2` of the two-column objective at fixed `rho1`.
fn inner_argmin(a: &[f64], b: &[f64], rho1: f64) -> Option<f64> {
    let (lo, hi) = inner_interval(a, b, rho1)?;
    let m = a.len() as f64;
    let d2 = |r2: f64| -> f64 { a.iter().zip(b).map(|(&ai, &bi)| bi / (1.0 + rho1 * ai + r2 * bi)).sum::<f64>() / m };
    Some(bisect_decreasing(lo, hi, d2))
}

/// EL multiplier for two moment columns by nested bisection: the inner
/// solve profiles out `rho2`, and by the envelope theorem the profile's
/// derivative is the partial derivative in `rho1` at the inner optimum.
pub fn el_oracle_2d(a: &[f64], b: &[f64]) -> (f64, f64) {
    let m = a.len() as f64;
    // feasible rho1 values form an interval around 0: find its ends
    let edge = |dir: f64| -> f64 {
        let mut inside = 0.0;
        let mut step = 1.0;
        while inner_interval(a, b, dir * step).is_some() {
            inside = step;
            step *= 2.0;
            assert!(step < 1e12, "unbounded feasible region");
        }
        let mut outside = step;
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if inner_interval(a, b, dir * mid).is_some() {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        dir * inside
    };
    let lo = edge(-1.0);
    let hi = edge(1.0);
    let profile_slope = |r1: f64| -> f64 {
        let r2 = inner_argmin(a, b, r1).expect("inside the feasible interval");
        // -dF/drho1
        a.iter().zip(b).map(|(&ai, &bi)| ai / (1.0 + r1 * ai + r2 * bi)).sum::<f64>() / m
    };
    let r1 = bisect_decreasing(lo, hi, profile_slope);
    (r1, inner_argmin(a, b, r1).unwrap())
}

/// Random moment column whose sign pattern keeps zero inside the hull.
pub fn moment_column(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let shift = rng.random_range(-0.3..0.3);
    let scale = rng.random_range(0.2..3.0);
    loop {
        let v: Vec<f64> = (0..m).map(|_| scale * (rng.random_range(-1.0..1.0) + shift)).collect();
        if v.iter().any(|&x| x > 0.0) && v.iter().any(|&x| x < 0.0) {
            return v;
        }
    }
}

pub fn matrix_from_columns(columns: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(columns[0].len(), columns.len(), |i, c| columns[c][i])
}

/// Check loss `u (tau - 1{u < 0})`.
pub fn check_loss(u: f64, tau: f64) -> f64 {
    u * (tau - if u < 0.0 { 1.0 } else { 0.0 })
}

/// `tau - 1{u < 0}`.
pub fn psi(u: f64, tau: f64) -> f64 {
    tau - if u < 0.0 { 1.0 } else { 0.0 }
}

pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}
