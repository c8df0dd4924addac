//! Training stage: balance the complete cases on every working model's
//! moments with EL weights, then refit the linear predictor by weighted
//! least squares on the complete cases.

use nalgebra::DMatrix;

use crate::data::{Dataset, ModelSpec};
use crate::el::{self, ElOptions, ElSolution, MomentMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{self, ImputationDraws, Loss, OutcomeModel, PerModelEstimate, PropensityModel};
use crate::seeds;

/// A fitted outcome model with its training-set draws and the
/// least-squares estimate computed from them.
#[derive(Debug, Clone)]
pub struct OutcomeComponent {
    pub model: OutcomeModel,
    pub draws: ImputationDraws,
    pub estimate: PerModelEstimate,
}

/// Training moment matrix with the centering constants used to build it.
#[derive(Debug, Clone)]
pub struct TrainMoments {
    pub matrix: MomentMatrix,
    /// Dataset rows of the complete cases, in matrix row order.
    pub complete: Vec<usize>,
    /// Full-sample means of each propensity model's fitted probabilities.
    pub theta: Vec<f64>,
    /// Full-sample means of each outcome model's imputation residual.
    pub eta: Vec<f64>,
}

/// Builds the centered moment rows for the complete cases of `train_idx`:
/// `pi_j(x_i) - theta_j` for each propensity model, then
/// `g_k(x_i) - eta_k` for each outcome model, where `g_k(x_i)` is the
/// draw average of `Y_i^t - mu_k(x_i)`. Centers average over all rows.
pub fn build_train_moments(
    ds: &Dataset,
    train_idx: &[usize],
    propensities: &[PropensityModel],
    outcomes: &[OutcomeComponent],
) -> Result<TrainMoments> {
    let complete = ds.complete_cases(train_idx);
    let n = train_idx.len() as f64;
    let pos_in_train: std::collections::HashMap<usize, usize> =
        train_idx.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let cc_pos: Vec<usize> = complete.iter().map(|i| pos_in_train[i]).collect();

    let mut columns = Vec::with_capacity(propensities.len() + outcomes.len());
    let mut theta = Vec::with_capacity(propensities.len());
    for model in propensities {
        let p = model.predict_all(ds, train_idx);
        let center = p.iter().sum::<f64>() / n;
        theta.push(center);
        columns.push(cc_pos.iter().map(|&k| p[k] - center).collect::<Vec<_>>());
    }
    let mut eta = Vec::with_capacity(outcomes.len());
    for comp in outcomes {
        let pos = comp.draws.position_map();
        let mut g = Vec::with_capacity(train_idx.len());
        for &i in train_idx {
            let j = *pos.get(&i).ok_or_else(|| {
                Error::Argument(format!("outcome model {} has no draws for training row {i}", comp.draws.model_index))
            })?;
            g.push(comp.draws.mean_for(j) - comp.estimate.predict(ds, i));
        }
        let center = g.iter().sum::<f64>() / n;
        eta.push(center);
        columns.push(cc_pos.iter().map(|&k| g[k] - center).collect());
    }
    let matrix = MomentMatrix::from_columns(complete.len(), &columns)?;
    Ok(TrainMoments { matrix, complete, theta, eta })
}

/// Multiple-robust linear predictor `mu(x) = beta . [1, x]`.
#[derive(Debug, Clone)]
pub struct MrFit {
    pub beta: Vec<f64>,
    pub train_weights: ElSolution,
}

impl MrFit {
    pub fn predict(&self, ds: &Dataset, i: usize) -> f64 {
        self.predict_covariates(ds.x().row(i).iter().copied())
    }

    /// Prediction from covariates in dataset column order (no intercept).
    pub fn predict_covariates(&self, x: impl IntoIterator<Item = f64>) -> f64 {
        let mut acc = self.beta[0];
        for (b, xi) in self.beta[1..].iter().zip(x) {
            acc += b * xi;
        }
        acc
    }
}

/// Weighted least squares of `y` on `[1, x]` over the complete cases of
/// `train_idx` with the EL weights.
pub fn mr_fit(ds: &Dataset, train_idx: &[usize], el: ElSolution) -> Result<MrFit> {
    let complete = ds.complete_cases(train_idx);
    if complete.len() != el.weights.len() {
        return Err(Error::Argument(format!(
            "{} EL weights for {} complete cases",
            el.weights.len(),
            complete.len()
        )));
    }
    let k = ds.p() + 1;
    let x = DMatrix::from_fn(complete.len(), k, |r, c| if c == 0 { 1.0 } else { ds.x()[(complete[r], c - 1)] });
    let y: Vec<f64> = complete.iter().map(|&i| ds.y()[i].expect("complete case")).collect();
    let beta = linalg::weighted_least_squares(&x, &y, &el.weights).map_err(|e| {
        let cols: Vec<&str> = e.columns.iter().map(|&j| if j == 0 { "(intercept)" } else { ds.names()[j - 1].as_str() }).collect();
        Error::Fit(format!("rank-deficient weighted design; collinear columns: {}", cols.join(", ")))
    })?;
    Ok(MrFit { beta: beta.iter().copied().collect(), train_weights: el })
}

/// Every artifact of the training stage.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub propensities: Vec<PropensityModel>,
    pub outcomes: Vec<OutcomeComponent>,
    pub moments: TrainMoments,
    pub fit: MrFit,
}

impl TrainedModels {
    pub fn outcome_models(&self) -> Vec<OutcomeModel> {
        self.outcomes.iter().map(|c| c.model.clone()).collect()
    }
}

/// Fits all working models on `train_idx`, solves the training EL weights
/// and returns the multiple-robust predictor.
pub fn train(
    ds: &Dataset,
    train_idx: &[usize],
    propensity_specs: &[ModelSpec],
    outcome_specs: &[ModelSpec],
    n_draws: usize,
    seed: u64,
    el_opts: &ElOptions,
) -> Result<TrainedModels> {
    let propensities = propensity_specs
        .iter()
        .map(|s| models::fit_propensity(ds, train_idx, s))
        .collect::<Result<Vec<_>>>()?;
    let mut outcomes = Vec::with_capacity(outcome_specs.len());
    for (k, spec) in outcome_specs.iter().enumerate() {
        let model = models::fit_outcome(ds, train_idx, spec)?;
        let draws = models::draw_imputations(&model, k, ds, train_idx, n_draws, seeds::derive(seed, &["train-draws", &k.to_string()]))?;
        let estimate = models::per_model_estimate(ds, train_idx, &draws, Loss::LeastSquares)?;
        outcomes.push(OutcomeComponent { model, draws, estimate });
    }
    let moments = build_train_moments(ds, train_idx, &propensities, &outcomes)?;
    let sol = el::solve_el(&moments.matrix, el_opts)?;
    let fit = mr_fit(ds, train_idx, sol)?;
    Ok(TrainedModels { propensities, outcomes, moments, fit })
}
