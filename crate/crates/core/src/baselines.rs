//! Reference interval constructors sharing the symmetric absolute-residual
//! form: complete-case split conformal and impute-then-split-conformal.

use serde::{Deserialize, Serialize};

use crate::calibration::{self, ConformityScores, ScoreImputation};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::OutcomeModel;
use crate::mr::MrFit;
use crate::quantile::{self, check_tau};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    SplitConformalCc,
    ImputeSc,
}

fn level(tau: f64, n: usize, finite_sample_correction: bool) -> f64 {
    if finite_sample_correction {
        quantile::finite_sample_level(tau, n as f64)
    } else {
        tau
    }
}

/// Half-width from the unweighted quantile of the observed scores.
pub fn split_conformal_cc_from_scores(observed: &[f64], tau: f64, finite_sample_correction: bool) -> Result<f64> {
    check_tau(tau)?;
    if observed.is_empty() {
        return Err(Error::Calibration("no complete cases in the calibration set".into()));
    }
    quantile::generalized_inverse_quantile(observed, level(tau, observed.len(), finite_sample_correction))
}

/// Complete-case split conformal half-width for `fit` on `calib_idx`.
pub fn split_conformal_cc(fit: &MrFit, ds: &Dataset, calib_idx: &[usize], tau: f64, finite_sample_correction: bool) -> Result<f64> {
    let observed: Vec<f64> =
        calib_idx.iter().filter_map(|&i| ds.y()[i].map(|y| (y - fit.predict(ds, i)).abs())).collect();
    split_conformal_cc_from_scores(&observed, tau, finite_sample_correction)
}

/// Half-width from the pooled observed/imputed scores of outcome model
/// `k`, all rows weighted equally.
pub fn impute_sc_from_scores(
    scores: &ConformityScores,
    k: usize,
    tau: f64,
    mode: ScoreImputation,
    finite_sample_correction: bool,
) -> Result<f64> {
    check_tau(tau)?;
    if k >= scores.n_models() {
        return Err(Error::Argument(format!("no outcome model {k} for impute-then-conformal")));
    }
    let (v, w) = scores.pooled(k, mode);
    if v.is_empty() {
        return Err(Error::Argument("empty calibration set".into()));
    }
    quantile::weighted_quantile(&v, &w, level(tau, scores.n_cal(), finite_sample_correction))
}

/// Impute-then-split-conformal half-width using one outcome model.
#[allow(clippy::too_many_arguments)]
pub fn impute_sc(
    ds: &Dataset,
    calib_idx: &[usize],
    outcome_model: &OutcomeModel,
    fit: &MrFit,
    tau: f64,
    n_draws: usize,
    seed: u64,
    mode: ScoreImputation,
) -> Result<f64> {
    let scores = calibration::conformity_scores(fit, ds, calib_idx, std::slice::from_ref(outcome_model), n_draws, seed)?;
    impute_sc_from_scores(&scores, 0, tau, mode, false)
}
