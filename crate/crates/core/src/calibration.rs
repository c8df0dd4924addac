//! Double calibration of absolute-residual conformity scores.
//!
//! 1. Observed scores `|y_i - mu(x_i)|` on complete calibration cases, and
//!    imputed scores from each outcome model's draws on every calibration
//!    row.
//! 2. A model-wise `tau`-quantile `q_k` of the pooled observed/imputed
//!    scores, and its `psi`-moment `xi_k`.
//! 3. EL weights on the complete cases balancing the propensity moments
//!    and the `psi`-moments.
//! 4. `q_mr`: the weighted `tau`-quantile of the observed scores.
//!
//! Missing scores enter the pooled quantile either draw by draw (each of
//! the `T` imputed residuals with weight `1/T`, the default) or as the
//! single draw-averaged residual. Draw-by-draw pooling keeps the pooled
//! score law equal to the observed one when the outcome model is correct;
//! the averaged residual concentrates near the conditional mean absolute
//! deviation and pulls `q_k` below the target quantile.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::el::{self, ElOptions, ElSolution, MomentMatrix};
use crate::error::{Error, Result};
use crate::models::{self, OutcomeModel, PropensityModel};
use crate::mr::MrFit;
use crate::quantile::{self, check_tau, psi};
use crate::seeds;

/// Which score a complete case contributes to its `psi`-moment entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiVariant {
    /// Model-implied entry from the imputed scores of row `i`.
    #[default]
    Imputed,
    /// `psi(eps_i - q_k)` from the observed score.
    Observed,
}

/// How a missing row's `T` imputed residuals enter pooled quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreImputation {
    /// Every draw's residual with weight `1/T`.
    #[default]
    PerDraw,
    /// One residual per row: the draw average of `|Y^t - mu(x)|`.
    Averaged,
}

/// Centering constant of the imputed-variant `psi` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiCentering {
    /// Mean of the model-implied entry over every calibration row.
    #[default]
    FullSample,
    /// The pooled `psi`-moment `xi_k`.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub tau: f64,
    pub n_draws: usize,
    pub psi_variant: PsiVariant,
    pub score_imputation: ScoreImputation,
    pub centering: PsiCentering,
    /// Raise the level to `ceil((n_eff + 1) tau) / n_eff`.
    pub finite_sample_correction: bool,
    pub el: ElOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            tau: 0.9,
            n_draws: 100,
            psi_variant: PsiVariant::default(),
            score_imputation: ScoreImputation::default(),
            centering: PsiCentering::default(),
            finite_sample_correction: false,
            el: ElOptions::default(),
        }
    }
}

/// Observed and imputed conformity scores on a calibration set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformityScores {
    calib: Vec<usize>,
    observed_mask: Vec<bool>,
    /// Scores of the complete calibration cases, in calibration order.
    pub observed: Vec<f64>,
    /// `imputed[k][i]`: draw-averaged score of calibration position `i`.
    pub imputed: Vec<Vec<f64>>,
    /// `draw_scores[k][t * n_cal + i]`: per-draw absolute residuals.
    draw_scores: Vec<Vec<f64>>,
    n_draws: usize,
}

impl ConformityScores {
    /// Assembles scores from raw parts; `draw_scores[k]` is `t`-major.
    pub fn from_parts(
        calib: Vec<usize>,
        observed_mask: Vec<bool>,
        observed: Vec<f64>,
        draw_scores: Vec<Vec<f64>>,
        n_draws: usize,
    ) -> Result<Self> {
        let n_cal = calib.len();
        if observed_mask.len() != n_cal {
            return Err(Error::Argument("observation mask length differs from calibration size".into()));
        }
        if observed.len() != observed_mask.iter().filter(|&&b| b).count() {
            return Err(Error::Argument("observed score count differs from complete-case count".into()));
        }
        if n_draws == 0 || draw_scores.iter().any(|d| d.len() != n_draws * n_cal) {
            return Err(Error::Argument("draw score matrices must be T x n_cal with T >= 1".into()));
        }
        let all = observed.iter().chain(draw_scores.iter().flatten());
        if all.clone().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Argument("conformity scores must be finite and nonnegative".into()));
        }
        let imputed = draw_scores
            .iter()
            .map(|d| (0..n_cal).map(|i| (0..n_draws).map(|t| d[t * n_cal + i]).sum::<f64>() / n_draws as f64).collect())
            .collect();
        Ok(Self { calib, observed_mask, observed, imputed, draw_scores, n_draws })
    }

    pub fn n_cal(&self) -> usize {
        self.calib.len()
    }

    pub fn n_models(&self) -> usize {
        self.draw_scores.len()
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn calib(&self) -> &[usize] {
        &self.calib
    }

    pub fn observed_mask(&self) -> &[bool] {
        &self.observed_mask
    }

    pub fn draw_score(&self, k: usize, t: usize, i: usize) -> f64 {
        self.draw_scores[k][t * self.n_cal() + i]
    }

    fn draws_at(&self, k: usize, i: usize) -> impl Iterator<Item = f64> + '_ {
        let n = self.n_cal();
        (0..self.n_draws).map(move |t| self.draw_scores[k][t * n + i])
    }

    /// Pooled scores and weights for model `k`: observed scores where
    /// `r = 1`, imputed ones elsewhere.
    pub fn pooled(&self, k: usize, mode: ScoreImputation) -> (Vec<f64>, Vec<f64>) {
        let mut values = Vec::new();
        let mut weights = Vec::new();
        let mut obs = self.observed.iter();
        for i in 0..self.n_cal() {
            if self.observed_mask[i] {
                values.push(*obs.next().expect("observed count checked"));
                weights.push(1.0);
            } else {
                match mode {
                    ScoreImputation::PerDraw => {
                        let w = 1.0 / self.n_draws as f64;
                        for s in self.draws_at(k, i) {
                            values.push(s);
                            weights.push(w);
                        }
                    }
                    ScoreImputation::Averaged => {
                        values.push(self.imputed[k][i]);
                        weights.push(1.0);
                    }
                }
            }
        }
        (values, weights)
    }

    /// Model-implied `psi` entry of calibration position `i` under model `k`.
    pub fn imputed_psi(&self, k: usize, i: usize, q: f64, tau: f64, mode: ScoreImputation) -> f64 {
        match mode {
            ScoreImputation::PerDraw => self.draws_at(k, i).map(|s| psi(s - q, tau)).sum::<f64>() / self.n_draws as f64,
            ScoreImputation::Averaged => psi(self.imputed[k][i] - q, tau),
        }
    }
}

/// Scores `|y_i - mu(x_i)|` on complete calibration cases and, for every
/// calibration row and outcome model, `T` imputed residuals
/// `|Y_i^t - mu(x_i)|`.
pub fn conformity_scores(
    fit: &MrFit,
    ds: &Dataset,
    calib_idx: &[usize],
    outcome_models: &[OutcomeModel],
    n_draws: usize,
    seed: u64,
) -> Result<ConformityScores> {
    let preds: Vec<f64> = calib_idx.iter().map(|&i| fit.predict(ds, i)).collect();
    let mask: Vec<bool> = calib_idx.iter().map(|&i| ds.r()[i]).collect();
    let observed: Vec<f64> = calib_idx
        .iter()
        .zip(&preds)
        .filter_map(|(&i, &p)| ds.y()[i].map(|y| (y - p).abs()))
        .collect();
    let mut draw_scores = Vec::with_capacity(outcome_models.len());
    for (k, model) in outcome_models.iter().enumerate() {
        let draws = models::draw_imputations(model, k, ds, calib_idx, n_draws, seeds::derive(seed, &["calib-draws", &k.to_string()]))?;
        let n = calib_idx.len();
        let mut s = Vec::with_capacity(n_draws * n);
        for t in 0..n_draws {
            for (j, p) in preds.iter().enumerate() {
                s.push((draws.get(t, j) - p).abs());
            }
        }
        draw_scores.push(s);
    }
    ConformityScores::from_parts(calib_idx.to_vec(), mask, observed, draw_scores, n_draws)
}

/// Minimizer of the pooled check-loss risk for model `k`: the
/// generalized-inverse `tau`-quantile of the pooled scores.
pub fn model_wise_quantile(scores: &ConformityScores, k: usize, tau: f64, mode: ScoreImputation) -> Result<f64> {
    check_tau(tau)?;
    if k >= scores.n_models() {
        return Err(Error::Argument(format!("no outcome model {k}")));
    }
    let (v, w) = scores.pooled(k, mode);
    if v.is_empty() {
        return Err(Error::Argument("empty score pool".into()));
    }
    quantile::weighted_quantile(&v, &w, tau)
}

/// `xi_k = n_cal^-1 sum_i [r_i psi(eps_i - q_k) + (1 - r_i) psi(eps_i^k - q_k)]`.
pub fn psi_moment(scores: &ConformityScores, k: usize, q_k: f64, tau: f64, mode: ScoreImputation) -> f64 {
    let mut obs = scores.observed.iter();
    let mut acc = 0.0;
    for i in 0..scores.n_cal() {
        acc += if scores.observed_mask()[i] {
            psi(obs.next().expect("observed count checked") - q_k, tau)
        } else {
            scores.imputed_psi(k, i, q_k, tau, mode)
        };
    }
    acc / scores.n_cal() as f64
}

/// Calibration moment matrix with its centering constants.
#[derive(Debug, Clone)]
pub struct CalibMoments {
    pub matrix: MomentMatrix,
    /// Calibration-set means of each fitted propensity model.
    pub theta: Vec<f64>,
    /// Center subtracted from each `psi` column.
    pub psi_centers: Vec<f64>,
}

/// Rows for complete calibration cases:
/// `(pi_j(x_i) - theta_j)_j` followed by one centered `psi` entry per
/// outcome model.
pub fn calib_moments(
    ds: &Dataset,
    propensities: &[PropensityModel],
    scores: &ConformityScores,
    q_k: &[f64],
    xi_k: &[f64],
    tau: f64,
    opts: &CalibrationOptions,
) -> Result<CalibMoments> {
    let calib = scores.calib();
    let n_cal = calib.len() as f64;
    let cc_pos: Vec<usize> = (0..calib.len()).filter(|&i| scores.observed_mask()[i]).collect();
    if q_k.len() != scores.n_models() || xi_k.len() != scores.n_models() {
        return Err(Error::Argument("one quantile and psi-moment per outcome model required".into()));
    }

    let mut columns = Vec::with_capacity(propensities.len() + q_k.len());
    let mut theta = Vec::with_capacity(propensities.len());
    for model in propensities {
        let p = model.predict_all(ds, calib);
        let center = p.iter().sum::<f64>() / n_cal;
        theta.push(center);
        columns.push(cc_pos.iter().map(|&i| p[i] - center).collect::<Vec<_>>());
    }
    let mut centers = Vec::with_capacity(q_k.len());
    for k in 0..q_k.len() {
        let (entries, center) = match opts.psi_variant {
            PsiVariant::Imputed => {
                let h: Vec<f64> =
                    (0..calib.len()).map(|i| scores.imputed_psi(k, i, q_k[k], tau, opts.score_imputation)).collect();
                let center = match opts.centering {
                    PsiCentering::FullSample => h.iter().sum::<f64>() / n_cal,
                    PsiCentering::Pooled => xi_k[k],
                };
                (cc_pos.iter().map(|&i| h[i]).collect::<Vec<_>>(), center)
            }
            PsiVariant::Observed => (scores.observed.iter().map(|&e| psi(e - q_k[k], tau)).collect(), xi_k[k]),
        };
        centers.push(center);
        columns.push(entries.into_iter().map(|e| e - center).collect());
    }
    let matrix = MomentMatrix::from_columns(cc_pos.len(), &columns)?;
    Ok(CalibMoments { matrix, theta, psi_centers: centers })
}

/// Left-most root of `sum_i d_i psi(eps_i - q) = 0`: the weighted
/// generalized-inverse `tau`-quantile of the observed scores.
pub fn solve_q_mr(observed: &[f64], d: &[f64], tau: f64) -> Result<f64> {
    if observed.is_empty() {
        return Err(Error::Argument("no observed calibration scores".into()));
    }
    quantile::weighted_quantile(observed, d, tau)
}

/// Quantile level actually used for a weight vector.
pub fn effective_level(tau: f64, weights: &[f64], finite_sample_correction: bool) -> f64 {
    if finite_sample_correction {
        quantile::finite_sample_level(tau, quantile::effective_sample_size(weights))
    } else {
        tau
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub q_k: Vec<f64>,
    pub xi_k: Vec<f64>,
    pub theta_j: Vec<f64>,
    pub psi_centers: Vec<f64>,
    /// Weights on the complete calibration cases, in calibration order.
    pub d: Vec<f64>,
    pub lambda: Vec<f64>,
    pub q_mr: f64,
    /// Level passed to the final weighted quantile.
    pub level: f64,
    pub el: ElSolution,
    pub scores: ConformityScores,
}

/// Scores, model-wise quantiles, centered moments, calibration weights
/// and the final quantile, in that order.
pub fn calibrate(
    fit: &MrFit,
    ds: &Dataset,
    calib_idx: &[usize],
    propensities: &[PropensityModel],
    outcome_models: &[OutcomeModel],
    opts: &CalibrationOptions,
    seed: u64,
) -> Result<CalibrationResult> {
    check_tau(opts.tau)?;
    let scores = conformity_scores(fit, ds, calib_idx, outcome_models, opts.n_draws, seed)?;
    calibrate_scores(ds, propensities, scores, opts)
}

/// The calibration steps after scoring.
pub fn calibrate_scores(
    ds: &Dataset,
    propensities: &[PropensityModel],
    scores: ConformityScores,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    let tau = opts.tau;
    check_tau(tau)?;
    if scores.observed.is_empty() {
        return Err(Error::Calibration("no complete cases in the calibration set".into()));
    }
    let q_k = (0..scores.n_models())
        .map(|k| model_wise_quantile(&scores, k, tau, opts.score_imputation))
        .collect::<Result<Vec<_>>>()?;
    let xi_k: Vec<f64> =
        q_k.iter().enumerate().map(|(k, &q)| psi_moment(&scores, k, q, tau, opts.score_imputation)).collect();
    let moments = calib_moments(ds, propensities, &scores, &q_k, &xi_k, tau, opts)?;
    let sol = el::solve_el(&moments.matrix, &opts.el)?;
    let level = effective_level(tau, &sol.weights, opts.finite_sample_correction);
    let q_mr = solve_q_mr(&scores.observed, &sol.weights, level)?;
    Ok(CalibrationResult {
        q_k,
        xi_k,
        theta_j: moments.theta,
        psi_centers: moments.psi_centers,
        d: sol.weights.clone(),
        lambda: sol.rho.clone(),
        q_mr,
        level,
        el: sol,
        scores,
    })
}

/// Symmetric interval `[center - half_width, center + half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub center: f64,
    pub half_width: f64,
}

impl PredictionInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn length(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower() <= y && y <= self.upper()
    }
}

/// Interval at covariates `x` (dataset column order, no intercept).
pub fn predict_interval(fit: &MrFit, x: &[f64], q_mr: f64) -> PredictionInterval {
    PredictionInterval { center: fit.predict_covariates(x.iter().copied()), half_width: q_mr }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(mask: &[bool], observed: &[f64], draws: &[f64], t: usize) -> ConformityScores {
        let calib: Vec<usize> = (0..mask.len()).collect();
        ConformityScores::from_parts(calib, mask.to_vec(), observed.to_vec(), vec![draws.to_vec()], t).unwrap()
    }

    #[test]
    fn psi_moment_extremes() {
        let s = scores(&[true, false, true], &[1.0, 2.0], &[0.5, 3.0, 0.7], 1);
        for mode in [ScoreImputation::PerDraw, ScoreImputation::Averaged] {
            assert!((psi_moment(&s, 0, -1.0, 0.9, mode) - 0.9).abs() < 1e-15);
            assert!((psi_moment(&s, 0, 10.0, 0.9, mode) - (0.9 - 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn pooled_modes_differ_only_on_missing_rows() {
        // two draws per row; row 1 missing with draw scores 1 and 3
        let s = scores(&[true, false], &[2.0], &[9.0, 1.0, 9.0, 3.0], 2);
        let (v, w) = s.pooled(0, ScoreImputation::PerDraw);
        assert_eq!(v, vec![2.0, 1.0, 3.0]);
        assert_eq!(w, vec![1.0, 0.5, 0.5]);
        let (v, w) = s.pooled(0, ScoreImputation::Averaged);
        assert_eq!(v, vec![2.0, 2.0]);
        assert_eq!(w, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_complete_cases_is_a_calibration_error() {
        let s = scores(&[false, false], &[], &[1.0, 2.0], 1);
        let ds = Dataset::new(vec!["x".into()], "y", nalgebra::DMatrix::zeros(2, 1), vec![None, None]).unwrap();
        let err = calibrate_scores(&ds, &[], s, &CalibrationOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Calibration(_)));
    }

    #[test]
    fn interval_arithmetic() {
        let i = PredictionInterval { center: 7.0, half_width: 1.5 };
        assert_eq!((i.lower(), i.upper(), i.length()), (5.5, 8.5, 3.0));
        let p = PredictionInterval { center: 2.0, half_width: 0.0 };
        assert_eq!(p.lower(), p.upper());
        assert!(p.contains(2.0));
    }

    #[test]
    fn malformed_scores_rejected() {
        let calib = vec![0, 1];
        assert!(ConformityScores::from_parts(calib.clone(), vec![true], vec![1.0], vec![], 1).is_err());
        assert!(ConformityScores::from_parts(calib.clone(), vec![true, true], vec![1.0], vec![], 1).is_err());
        assert!(ConformityScores::from_parts(calib.clone(), vec![true, false], vec![1.0], vec![vec![1.0]], 1).is_err());
        assert!(ConformityScores::from_parts(calib, vec![true, false], vec![-1.0], vec![vec![1.0, 1.0]], 1).is_err());
    }
}
