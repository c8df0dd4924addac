//! Empirical-likelihood calibration weights.
//!
//! Given centered moment rows `v_i` on the complete cases, the dual
//! multiplier `rho` minimizes the convex objective
//!
//! ```text
//! F(rho) = -(1/m) * sum_i log(1 + rho . v_i)
//! ```
//!
//! over the feasible region `1 + rho . v_i > 0`, and the weights are
//! `w_i = 1 / (m (1 + rho . v_i))`. At the optimum `sum_i w_i v_i = 0`,
//! so weighted complete-case moments match their full-sample centers.
//! The same solver is used for the training weights and for the
//! calibration weights; only the moment matrix differs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Largest accepted deviation of the unnormalized weight sum from 1.
const WEIGHT_SUM_TOL: f64 = 1e-6;

/// Centered moment evaluations: one row per complete case.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix {
    v: DMatrix<f64>,
}

impl MomentMatrix {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("moment matrix has non-finite entries".into()));
        }
        Ok(Self { v })
    }

    /// Builds an `m x columns.len()` matrix from column vectors.
    pub fn from_columns(m: usize, columns: &[Vec<f64>]) -> Result<Self> {
        for (c, col) in columns.iter().enumerate() {
            if col.len() != m {
                return Err(Error::Argument(format!("moment column {c} has {} rows, expected {m}", col.len())));
            }
        }
        let v = DMatrix::from_fn(m, columns.len(), |i, c| columns[c][i]);
        Self::new(v)
    }

    pub fn nrows(&self) -> usize {
        self.v.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.v.column(c).iter().copied().collect()
    }

    /// `max_c |sum_i w_i v_ic|`.
    pub fn max_imbalance(&self, weights: &[f64]) -> f64 {
        (0..self.ncols())
            .map(|c| self.v.column(c).iter().zip(weights).map(|(x, w)| x * w).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElOptions {
    /// Gradient-norm convergence threshold.
    pub tol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_halvings: usize,
    /// Relative tolerance for dropping collinear moment columns.
    pub collinear_tol: f64,
}

impl Default for ElOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, armijo: 1e-4, max_halvings: 60, collinear_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElSolution {
    /// Multiplier over all input columns; dropped columns carry 0.
    pub rho: Vec<f64>,
    pub weights: Vec<f64>,
    /// Final value of `F`.
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Input columns removed as linear combinations of earlier ones.
    pub dropped_columns: Vec<usize>,
    /// `F` after each accepted iterate, starting point first.
    pub objective_trace: Vec<f64>,
}

/// Objective `F(rho)`, or `None` outside the feasible region.
pub fn objective(v: &DMatrix<f64>, rho: &DVector<f64>) -> Option<f64> {
    let m = v.nrows() as f64;
    let mut acc = 0.0;
    for i in 0..v.nrows() {
        let s = 1.0 + v.row(i).dot(&rho.transpose());
        if !(s > 0.0) {
            return None;
        }
        acc += s.ln();
    }
    Some(-acc / m)
}

fn gradient_hessian(v: &DMatrix<f64>, rho: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (m, d) = v.shape();
    let mut g = DVector::zeros(d);
    let mut h = DMatrix::zeros(d, d);
    for i in 0..m {
        let row = v.row(i).transpose();
        let s = 1.0 + row.dot(rho);
        g.axpy(-1.0 / s, &row, 1.0);
        h.ger(1.0 / (s * s), &row, &row, 1.0);
    }
    (g / m as f64, h / m as f64)
}

fn gradient(v: &DMatrix<f64>, rho: &DVector<f64>) -> DVector<f64> {
    gradient_hessian(v, rho).0
}

/// Solves for the EL multiplier starting from `rho = 0`.
pub fn solve_el(v: &MomentMatrix, opts: &ElOptions) -> Result<ElSolution> {
    solve_el_from(v, opts, None)
}

/// Solves for the EL multiplier from an optional feasible starting point
/// given over all input columns.
pub fn solve_el_from(v: &MomentMatrix, opts: &ElOptions, start: Option<&[f64]>) -> Result<ElSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::Argument("solver tolerance must be positive".into()));
    }
    let (m, d) = v.v.shape();
    if m == 0 {
        return Err(Error::Argument("moment matrix has no rows".into()));
    }
    let dropped = linalg::dependent_columns(&v.v, opts.collinear_tol);
    let kept: Vec<usize> = (0..d).filter(|c| !dropped.contains(c)).collect();
    let vr = v.v.select_columns(kept.iter());
    let dr = kept.len();

    let mut rho = match start {
        Some(s) if s.len() == d => DVector::from_iterator(dr, kept.iter().map(|&c| s[c])),
        Some(s) => {
            return Err(Error::Argument(format!("start has length {}, expected {d}", s.len())));
        }
        None => DVector::zeros(dr),
    };
    let mut f = objective(&vr, &rho).ok_or_else(|| Error::Argument("starting multiplier is infeasible".into()))?;
    let mut trace = vec![f];
    let mut iterations = 0;

    loop {
        let (g, h) = gradient_hessian(&vr, &rho);
        let gnorm = g.norm();
        // The unnormalized weights sum to 1 + rho . g; requiring that to be
        // near 1 rejects divergent multipliers whose gradient merely decays.
        if gnorm <= opts.tol && rho.dot(&g).abs() <= WEIGHT_SUM_TOL {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::Convergence { iterations, grad_norm: gnorm });
        }
        let step = linalg::spd_solve(&h, &(-&g)).ok_or_else(|| Error::Solver("Newton system could not be factored".into()))?;
        let slope = g.dot(&step);
        // Below rounding level of F the Armijo test is noise; a full step
        // from this close to the optimum stays feasible and converges.
        if -slope <= 1e-15 * f.abs().max(1.0) {
            let cand = &rho + &step;
            if let Some(fc) = objective(&vr, &cand) {
                rho = cand;
                f = fc;
                trace.push(f);
                iterations += 1;
                continue;
            }
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand = &rho + &step * t;
            if let Some(fc) = objective(&vr, &cand) {
                if fc <= f + opts.armijo * t * slope {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            return Err(Error::Solver(format!(
                "no feasible descent step after {} halvings (gradient norm {gnorm:.3e})",
                opts.max_halvings
            )));
        };
        rho = cand;
        f = fc;
        trace.push(f);
        iterations += 1;
    }

    // Quadratic convergence makes a few extra full steps nearly free; they
    // push the weight sum to 1 at rounding level.
    for _ in 0..3 {
        let (g, h) = gradient_hessian(&vr, &rho);
        let gnorm = g.norm();
        if gnorm <= 1e-15 {
            break;
        }
        let Some(step) = linalg::spd_solve(&h, &(-&g)) else { break };
        let cand = &rho + step;
        match objective(&vr, &cand) {
            // F is flat to rounding here, so judge the step by the gradient
            Some(fc) if gradient(&vr, &cand).norm() < gnorm => {
                rho = cand;
                f = fc;
            }
            _ => break,
        }
    }

    let mut weights: Vec<f64> = (0..m).map(|i| 1.0 / (m as f64 * (1.0 + vr.row(i).dot(&rho.transpose())))).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let mut full_rho = vec![0.0; d];
    for (k, &c) in kept.iter().enumerate() {
        full_rho[c] = rho[k];
    }
    let grad_norm = gradient(&vr, &rho).norm();
    Ok(ElSolution { rho: full_rho, weights, objective: f, iterations, grad_norm, dropped_columns: dropped, objective_trace: trace })
}
