//! Optional TOML configuration. Keys mirror the long flag names; a flag
//! given on the command line always wins over the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use mrconformal::calibration::{CalibrationOptions, PsiCentering, PsiVariant, ScoreImputation};

use crate::{Failure, PsiCenteringArg, PsiVariantArg, ScoreImputationArg, SharedArgs};

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConfigFile {
    pub tau: Option<f64>,
    #[serde(rename = "T")]
    pub n_draws: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub psi_variant: Option<PsiVariantArg>,
    pub score_imputation: Option<ScoreImputationArg>,
    pub psi_centering: Option<PsiCenteringArg>,
    pub finite_sample_correction: Option<bool>,
    pub train_fraction: Option<f64>,

    // simulate
    pub settings: Option<Vec<String>>,
    pub scenarios: Option<Vec<String>>,
    pub methods: Option<Vec<String>>,
    pub replicates: Option<usize>,
    pub n: Option<usize>,
    pub n_eval: Option<usize>,
    pub impute_sc_model: Option<usize>,
    pub c_unit_sigma: Option<bool>,
    pub threads: Option<usize>,

    // predict
    pub outcome_column: Option<String>,
    pub r_column: Option<String>,
    pub propensity: Option<Vec<String>>,
    pub outcome: Option<Vec<String>>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Settings shared by both subcommands after merging flags, file and
/// defaults.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub calibration: CalibrationOptions,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

pub const DEFAULT_SEED: u64 = 20240601;

pub fn resolve(args: &SharedArgs, file: &ConfigFile) -> Result<Resolved, Failure> {
    let defaults = CalibrationOptions::default();
    let tau = args.tau.or(file.tau).unwrap_or(defaults.tau);
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Failure::Usage(format!("--tau must lie in (0, 1), got {tau}")));
    }
    let n_draws = args.n_draws.or(file.n_draws).unwrap_or(defaults.n_draws);
    if n_draws < 1 {
        return Err(Failure::Usage("--T must be at least 1".into()));
    }
    let psi_variant = match args.psi_variant.or(file.psi_variant) {
        Some(PsiVariantArg::Imputed) | None => PsiVariant::Imputed,
        Some(PsiVariantArg::Observed) => PsiVariant::Observed,
    };
    let score_imputation = match args.score_imputation.or(file.score_imputation) {
        Some(ScoreImputationArg::PerDraw) | None => ScoreImputation::PerDraw,
        Some(ScoreImputationArg::Averaged) => ScoreImputation::Averaged,
    };
    let centering = match args.psi_centering.or(file.psi_centering) {
        Some(PsiCenteringArg::FullSample) | None => PsiCentering::FullSample,
        Some(PsiCenteringArg::Pooled) => PsiCentering::Pooled,
    };
    let finite_sample_correction = args.finite_sample_correction || file.finite_sample_correction.unwrap_or(false);
    Ok(Resolved {
        calibration: CalibrationOptions {
            tau,
            n_draws,
            psi_variant,
            score_imputation,
            centering,
            finite_sample_correction,
            ..defaults
        },
        seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out_dir: args.out_dir.clone().or_else(|| file.out_dir.clone()),
    })
}

pub fn check_fraction(fraction: f64) -> Result<f64, Failure> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(fraction)
    } else {
        Err(Failure::Usage(format!("--train-fraction must lie in (0, 1), got {fraction}")))
    }
}
