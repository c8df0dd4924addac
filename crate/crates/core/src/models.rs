//! Working models: logistic propensity models, Gaussian linear outcome
//! models, Monte Carlo imputation from the outcome models, and the
//! per-imputation-model least-squares estimates.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, RankDeficient};

/// Gradient-norm threshold for the logistic fit.
pub const IRLS_GRAD_TOL: f64 = 1e-8;
pub const IRLS_MAX_ITER: usize = 100;
/// Coefficient norm beyond which an improving likelihood signals separation.
pub const SEPARATION_NORM: f64 = 1e3;
/// A converged log-likelihood this close to 0 means every row is fitted
/// perfectly.
const SEPARATION_LOGLIK: f64 = 1e-6;

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn design(ds: &Dataset, idx: &[usize], columns: &[usize]) -> DMatrix<f64> {
    let k = columns.len() + 1;
    let mut x = DMatrix::zeros(idx.len(), k);
    for (row, &i) in idx.iter().enumerate() {
        x[(row, 0)] = 1.0;
        for (j, &c) in columns.iter().enumerate() {
            x[(row, j + 1)] = ds.x()[(i, c)];
        }
    }
    x
}

fn full_design(ds: &Dataset, idx: &[usize]) -> DMatrix<f64> {
    let all: Vec<usize> = (0..ds.p()).collect();
    design(ds, idx, &all)
}

fn rank_error(ds: &Dataset, columns: &[usize], err: RankDeficient) -> Error {
    let names: Vec<String> = err
        .columns
        .iter()
        .map(|&j| if j == 0 { "(intercept)".to_string() } else { ds.names()[columns[j - 1]].clone() })
        .collect();
    if names.is_empty() {
        Error::Fit("rank-deficient design".into())
    } else {
        Error::Fit(format!("rank-deficient design; collinear columns: {}", names.join(", ")))
    }
}

/// Logistic model `logit P(R = 1 | x) = [1, x_S] . coef`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub spec: ModelSpec,
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl PropensityModel {
    pub fn predict(&self, ds: &Dataset, i: usize) -> f64 {
        sigmoid(dot(&ds.design_row(i, &self.spec.columns), &self.coef))
    }

    pub fn predict_all(&self, ds: &Dataset, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.predict(ds, i)).collect()
    }
}

fn bernoulli_loglik(x: &DMatrix<f64>, r: &[f64], coef: &DVector<f64>) -> f64 {
    let eta = x * coef;
    eta.iter().zip(r).map(|(&e, &ri)| ri * e - softplus(e)).sum()
}

/// Maximum-likelihood logistic regression of the observation indicator
/// by Newton/IRLS with step halving.
pub fn fit_propensity(ds: &Dataset, idx: &[usize], spec: &ModelSpec) -> Result<PropensityModel> {
    spec.validate(ds)?;
    if idx.is_empty() {
        return Err(Error::Argument("no rows to fit the propensity model on".into()));
    }
    let r: Vec<f64> = idx.iter().map(|&i| if ds.r()[i] { 1.0 } else { 0.0 }).collect();
    let ones = r.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == r.len() {
        return Err(Error::Fit("observation indicator has a single class; propensity is not estimable".into()));
    }
    let x = design(ds, idx, &spec.columns);
    let k = x.ncols();
    let mut coef = DVector::zeros(k);
    let mut ll = bernoulli_loglik(&x, &r, &coef);
    for iter in 0..IRLS_MAX_ITER {
        let eta = &x * &coef;
        let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid = DVector::from_iterator(r.len(), r.iter().zip(&p).map(|(ri, pi)| ri - pi));
        let grad = x.transpose() * &resid;
        let gnorm = grad.norm();
        if gnorm <= IRLS_GRAD_TOL {
            if ll > -SEPARATION_LOGLIK {
                return Err(Error::Fit("perfect separation: log-likelihood reached zero".into()));
            }
            return Ok(PropensityModel { spec: spec.clone(), coef: coef.iter().copied().collect(), iterations: iter, log_likelihood: ll });
        }
        let mut info = DMatrix::zeros(k, k);
        for (row, &pi) in p.iter().enumerate() {
            let w = pi * (1.0 - pi);
            let xr = x.row(row);
            info.ger(w, &xr.transpose(), &xr.transpose(), 1.0);
        }
        let step = info
            .cholesky()
            .map(|ch| ch.solve(&grad))
            .ok_or_else(|| Error::Fit("singular information matrix in logistic fit".into()))?;
        // Once the predicted gain is below the rounding level of the
        // log-likelihood, comparisons are noise: take the full Newton step.
        let predicted_gain = grad.dot(&step);
        if predicted_gain <= 1e-12 * ll.abs().max(1.0) {
            coef += &step;
            ll = bernoulli_loglik(&x, &r, &coef);
            continue;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &coef + &step * t;
            let cand_ll = bernoulli_loglik(&x, &r, &cand);
            if cand_ll.is_finite() && cand_ll >= ll {
                accepted = Some((cand, cand_ll));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_ll)) = accepted else {
            // no ascent possible: the gradient is at rounding level
            if gnorm <= 1e3 * IRLS_GRAD_TOL {
                return Ok(PropensityModel { spec: spec.clone(), coef: coef.iter().copied().collect(), iterations: iter, log_likelihood: ll });
            }
            return Err(Error::Convergence { iterations: iter, grad_norm: gnorm });
        };
        if cand.norm() > SEPARATION_NORM && cand_ll > ll {
            return Err(Error::Fit(format!(
                "perfect separation: coefficient norm {:.3e} still diverging",
                cand.norm()
            )));
        }
        coef = cand;
        ll = cand_ll;
    }
    let eta = &x * &coef;
    let resid = DVector::from_iterator(r.len(), r.iter().zip(eta.iter()).map(|(ri, &e)| ri - sigmoid(e)));
    let gnorm = (x.transpose() * resid).norm();
    Err(Error::Convergence { iterations: IRLS_MAX_ITER, grad_norm: gnorm })
}

/// Gaussian linear outcome model `Y | x ~ N([1, x_S] . coef, sigma^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub spec: ModelSpec,
    pub coef: Vec<f64>,
    pub sigma: f64,
}

impl OutcomeModel {
    pub fn predict(&self, ds: &Dataset, i: usize) -> f64 {
        dot(&ds.design_row(i, &self.spec.columns), &self.coef)
    }
}

/// Gaussian MLE on the complete cases of `idx`: OLS coefficients and
/// `sigma = sqrt(RSS / m)`.
pub fn fit_outcome(ds: &Dataset, idx: &[usize], spec: &ModelSpec) -> Result<OutcomeModel> {
    spec.validate(ds)?;
    let cc = ds.complete_cases(idx);
    if cc.len() < spec.n_coef() + 1 {
        return Err(Error::Argument(format!(
            "outcome model with {} covariates needs at least {} complete cases, found {}",
            spec.columns.len(),
            spec.columns.len() + 2,
            cc.len()
        )));
    }
    let x = design(ds, &cc, &spec.columns);
    let y: Vec<f64> = cc.iter().map(|&i| ds.y()[i].expect("complete case")).collect();
    let w = vec![1.0; cc.len()];
    let coef = linalg::weighted_least_squares(&x, &y, &w).map_err(|e| rank_error(ds, &spec.columns, e))?;
    let fitted = &x * &coef;
    let rss: f64 = y.iter().zip(fitted.iter()).map(|(yi, fi)| (yi - fi).powi(2)).sum();
    Ok(OutcomeModel { spec: spec.clone(), coef: coef.iter().copied().collect(), sigma: (rss / cc.len() as f64).sqrt() })
}

/// `T` Monte Carlo draws from an outcome model for each target row.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationDraws {
    /// Row-major `T x targets.len()`.
    values: Vec<f64>,
    n_draws: usize,
    targets: Vec<usize>,
    pub model_index: usize,
    pub seed: u64,
}

impl ImputationDraws {
    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.values[t * self.targets.len() + j]
    }

    /// The `T` draws for target position `j`.
    pub fn draws_for(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        let n = self.targets.len();
        (0..self.n_draws).map(move |t| self.values[t * n + j])
    }

    pub fn mean_for(&self, j: usize) -> f64 {
        self.draws_for(j).sum::<f64>() / self.n_draws as f64
    }

    /// Position of dataset row `i` among the targets.
    pub fn position_map(&self) -> HashMap<usize, usize> {
        self.targets.iter().enumerate().map(|(j, &i)| (i, j)).collect()
    }
}

/// Draws `values[t][j] = x_j . coef + sigma * z` with independent standard
/// normal `z`, in `t`-major order from a ChaCha8 stream seeded by `seed`.
pub fn draw_imputations(
    model: &OutcomeModel,
    model_index: usize,
    ds: &Dataset,
    target_idx: &[usize],
    n_draws: usize,
    seed: u64,
) -> Result<ImputationDraws> {
    if n_draws == 0 {
        return Err(Error::Argument("number of imputation draws must be at least 1".into()));
    }
    let means: Vec<f64> = target_idx.iter().map(|&i| model.predict(ds, i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n_draws * means.len());
    for _ in 0..n_draws {
        for &mu in &means {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push(mu + model.sigma * z);
        }
    }
    Ok(ImputationDraws { values, n_draws, targets: target_idx.to_vec(), model_index, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    LeastSquares,
}

/// Linear predictor fitted on observed outcomes plus imputed draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerModelEstimate {
    pub coef: Vec<f64>,
}

impl PerModelEstimate {
    pub fn predict(&self, ds: &Dataset, i: usize) -> f64 {
        dot(&ds.full_design_row(i), &self.coef)
    }
}

/// Minimizes observed squared errors plus, for each missing row, the
/// draw-averaged squared error against the imputations.
///
/// Each missing row stands for `T` stacked rows of weight `1/T`; for the
/// squared loss that stack has the same minimizer as one unit-weight row
/// at the draw mean, which is what gets solved.
pub fn per_model_estimate(ds: &Dataset, idx: &[usize], draws: &ImputationDraws, loss: Loss) -> Result<PerModelEstimate> {
    match loss {
        Loss::LeastSquares => {}
    }
    let pos = draws.position_map();
    let x = full_design(ds, idx);
    let mut y = Vec::with_capacity(idx.len());
    for &i in idx {
        match ds.y()[i] {
            Some(v) => y.push(v),
            None => {
                let j = *pos
                    .get(&i)
                    .ok_or_else(|| Error::Argument(format!("no imputation draws for missing row {i}")))?;
                y.push(draws.mean_for(j));
            }
        }
    }
    let w = vec![1.0; idx.len()];
    let all: Vec<usize> = (0..ds.p()).collect();
    let coef = linalg::weighted_least_squares(&x, &y, &w).map_err(|e| rank_error(ds, &all, e))?;
    Ok(PerModelEstimate { coef: coef.iter().copied().collect() })
}
