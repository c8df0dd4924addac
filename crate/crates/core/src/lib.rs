//! Multiple-robust conformal prediction intervals for linear regression
//! with outcomes missing at random.
//!
//! The pipeline fits several candidate propensity and outcome models on a
//! training split, reweights the complete cases with empirical-likelihood
//! weights that balance every model's moments, and refits the predictor on
//! the weighted complete cases ([`mr`]). On the calibration split the
//! absolute-residual scores of complete cases are reweighted a second time
//! so that they represent the whole calibration sample, and the weighted
//! quantile of those scores sets the interval half-width
//! ([`calibration`]).
//!
//! [`baselines`] holds the complete-case and impute-then-conformal
//! references, and [`sim`] the simulation study used to compare them.

pub mod baselines;
pub mod calibration;
pub mod data;
pub mod el;
pub mod error;
pub mod linalg;
pub mod models;
pub mod mr;
pub mod quantile;
pub mod seeds;
pub mod sim;

pub use calibration::{CalibrationOptions, CalibrationResult, ConformityScores, PredictionInterval, PsiCentering, PsiVariant, ScoreImputation};
pub use data::{Dataset, ModelKind, ModelSpec, SplitIndices};
pub use el::{ElOptions, ElSolution, MomentMatrix};
pub use error::{Error, Result};
pub use models::{ImputationDraws, OutcomeModel, PerModelEstimate, PropensityModel};
pub use mr::{MrFit, TrainedModels};
