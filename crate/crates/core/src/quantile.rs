//! Check loss, its subgradient, and (weighted) generalized-inverse quantiles.

use crate::error::{Error, Result};

/// Slack on cumulative-fraction comparisons, absorbing summation rounding.
const CUM_SLACK: f64 = 1e-12;

/// `rho_tau(u) = u (tau - 1{u < 0})`.
pub fn check_loss(u: f64, tau: f64) -> f64 {
    u * psi(u, tau)
}

/// `psi_tau(u) = tau - 1{u < 0}`.
pub fn psi(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        tau - 1.0
    } else {
        tau
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("quantile level must lie in (0, 1), got {tau}")))
    }
}

/// Smallest sample value `s` with `#{v <= s} / n >= tau`.
pub fn generalized_inverse_quantile(values: &[f64], tau: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("quantile of an empty sample".into()));
    }
    let w = vec![1.0; values.len()];
    weighted_quantile(values, &w, tau)
}

/// Smallest value whose cumulative normalized weight reaches `tau`.
///
/// This is the left end of the root set of `sum_i w_i psi_tau(v_i - q) = 0`
/// and a minimizer of the weighted check-loss risk. `tau` may equal 1,
/// which returns the largest value carrying positive weight.
pub fn weighted_quantile(values: &[f64], weights: &[f64], tau: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("quantile of an empty sample".into()));
    }
    if values.len() != weights.len() {
        return Err(Error::Argument(format!("{} values but {} weights", values.len(), weights.len())));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Argument(format!("quantile level must lie in (0, 1], got {tau}")));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Argument("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Argument("weights sum to zero".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut cum = 0.0;
    let mut last_positive = values[order[0]];
    let mut k = 0;
    while k < order.len() {
        // consume a block of tied values at once
        let v = values[order[k]];
        while k < order.len() && values[order[k]] == v {
            cum += weights[order[k]] / total;
            if weights[order[k]] > 0.0 {
                last_positive = v;
            }
            k += 1;
        }
        if cum >= tau - CUM_SLACK {
            return Ok(v);
        }
    }
    Ok(last_positive)
}

/// Empirical check-loss risk `sum_i w_i rho_tau(v_i - q)`.
pub fn check_risk(values: &[f64], weights: &[f64], q: f64, tau: f64) -> f64 {
    values.iter().zip(weights).map(|(&v, &w)| w * check_loss(v - q, tau)).sum()
}

/// `sum_i w_i psi_tau(v_i - q)`.
pub fn score_sum(values: &[f64], weights: &[f64], q: f64, tau: f64) -> f64 {
    values.iter().zip(weights).map(|(&v, &w)| w * psi(v - q, tau)).sum()
}

/// Kish effective sample size `(sum w)^2 / sum w^2`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    s * s / s2
}

/// Finite-sample conservative level `min(1, ceil((n + 1) tau) / n)`.
pub fn finite_sample_level(tau: f64, n_eff: f64) -> f64 {
    (((n_eff + 1.0) * tau - CUM_SLACK).ceil() / n_eff).min(1.0)
}
