//! Monte Carlo simulation harness.
//!
//! Covariates `X1 ~ N(5, 1)`, `X2 ~ Bernoulli(0.5)`, `X3, X4 ~ N(0, 1)`;
//! outcome `Y = 3.5 + 0.5 X1 + 2 X2 + X3 + X4 + sigma * e`; outcome
//! observed with probability `sigmoid(3.5 - 5 X2)`. Three noise laws
//! (scenarios A-C) and four candidate-model menus (settings S1-S4).
//!
//! Every replicate draws its streams from seeds derived from
//! `(master seed, setting, scenario, replicate)`, so results do not depend
//! on scheduling or thread count.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::baselines;
use crate::calibration::{self, CalibrationOptions};
use crate::data::{self, Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::models::sigmoid;
use crate::mr;
use crate::seeds;

/// True regression coefficients on `[1, X1, X2, X3, X4]`.
pub const BETA0: [f64; 5] = [3.5, 0.5, 2.0, 1.0, 1.0];
/// True propensity `logit pi(x) = 3.5 - 5 X2`.
pub const PROPENSITY0: [f64; 2] = [3.5, -5.0];
pub const COVARIATE_NAMES: [&str; 4] = ["X1", "X2", "X3", "X4"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B,
    C,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::A, Scenario::B, Scenario::C];
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::A => "A",
            Scenario::B => "B",
            Scenario::C => "C",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Scenario::A),
            "B" | "b" => Ok(Scenario::B),
            "C" | "c" => Ok(Scenario::C),
            other => Err(Error::Argument(format!("unknown scenario `{other}` (expected A, B or C)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    GaussianUnit,
    /// Student t with 3 degrees of freedom rescaled to unit variance.
    StudentT3UnitVariance,
    /// `N(0, (0.6 + 0.2 |X1|)^2)`.
    HeteroGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: Scenario,
    pub sigma: f64,
    pub noise: Noise,
}

impl ScenarioSpec {
    /// Scenario C uses the tabulated scale 0.6; pass `c_unit_sigma` to use 1.
    pub fn new(id: Scenario, c_unit_sigma: bool) -> Self {
        match id {
            Scenario::A => Self { id, sigma: 1.0, noise: Noise::GaussianUnit },
            Scenario::B => Self { id, sigma: 1.0, noise: Noise::StudentT3UnitVariance },
            Scenario::C => Self { id, sigma: if c_unit_sigma { 1.0 } else { 0.6 }, noise: Noise::HeteroGaussian },
        }
    }

    /// Population `tau`-quantile of `|sigma * e|`, the half-width of the
    /// oracle interval around the true regression function.
    pub fn oracle_half_width(&self, tau: f64) -> f64 {
        let upper = 0.5 * (1.0 + tau);
        match self.noise {
            Noise::GaussianUnit => self.sigma * std_normal().inverse_cdf(upper),
            Noise::StudentT3UnitVariance => {
                let t3 = statrs::distribution::StudentsT::new(0.0, 1.0, 3.0).expect("valid t law");
                self.sigma * (1.0f64 / 3.0).sqrt() * t3.inverse_cdf(upper)
            }
            Noise::HeteroGaussian => hetero_quantile(self.sigma, tau),
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid normal law")
}

/// Solves `E_X1[P(|N(0, s(X1)^2)| <= q)] = tau` with `s(x) = sigma (0.6 + 0.2|x|)`
/// and `X1 ~ N(5, 1)` by bisection over a Simpson-rule expectation.
fn hetero_quantile(sigma: f64, tau: f64) -> f64 {
    let nrm = std_normal();
    let coverage = |q: f64| {
        const STEPS: usize = 4000;
        let (lo, hi) = (-5.0, 15.0);
        let h = (hi - lo) / STEPS as f64;
        let f = |x: f64| {
            let s = sigma * (0.6 + 0.2 * x.abs());
            let dens = (-(x - 5.0).powi(2) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            dens * (2.0 * nrm.cdf(q / s) - 1.0)
        };
        let mut acc = f(lo) + f(hi);
        for k in 1..STEPS {
            acc += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let (mut a, mut b) = (0.0, 50.0 * sigma.max(1e-300));
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if coverage(mid) < tau {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Setting {
    S1,
    S2,
    S3,
    S4,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::S1, Setting::S2, Setting::S3, Setting::S4];
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::S1 => "S1",
            Setting::S2 => "S2",
            Setting::S3 => "S3",
            Setting::S4 => "S4",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S1" => Ok(Setting::S1),
            "S2" => Ok(Setting::S2),
            "S3" => Ok(Setting::S3),
            "S4" => Ok(Setting::S4),
            other => Err(Error::Argument(format!("unknown setting `{other}` (expected S1..S4)"))),
        }
    }
}

/// Which candidate models a setting makes available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettingSpec {
    pub id: Setting,
    pub use_pi1: bool,
    pub use_pi2: bool,
    pub use_a1: bool,
    pub use_a2: bool,
}

impl SettingSpec {
    pub fn new(id: Setting) -> Self {
        let (use_pi1, use_pi2, use_a1, use_a2) = match id {
            Setting::S1 => (true, true, true, true),
            Setting::S2 => (true, false, true, true),
            Setting::S3 => (true, true, false, true),
            Setting::S4 => (true, true, true, false),
        };
        Self { id, use_pi1, use_pi2, use_a1, use_a2 }
    }
}

/// Propensity and outcome specs for a setting, over columns X1..X4 = 0..3.
///
/// `pi1` uses X2 (correct), `pi2` uses X1..X4 (misspecified link content),
/// `a1` uses X1..X4 (correct), `a2` drops X4 (misspecified).
pub fn candidate_models(setting: &SettingSpec) -> (Vec<ModelSpec>, Vec<ModelSpec>) {
    let mut props = Vec::new();
    if setting.use_pi1 {
        props.push(ModelSpec::propensity(vec![1]));
    }
    if setting.use_pi2 {
        props.push(ModelSpec::propensity(vec![0, 1, 2, 3]));
    }
    let mut outs = Vec::new();
    if setting.use_a1 {
        outs.push(ModelSpec::outcome(vec![0, 1, 2, 3]));
    }
    if setting.use_a2 {
        outs.push(ModelSpec::outcome(vec![0, 1, 2]));
    }
    (props, outs)
}

/// Fully observed draw: covariates, outcomes and observation indicators.
#[derive(Debug, Clone)]
pub struct FullSample {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub r: Vec<bool>,
}

pub fn generate_full(n: usize, scenario: &ScenarioSpec, seed: u64) -> Result<FullSample> {
    if n < 1 {
        return Err(Error::Argument("sample size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t3 = StudentT::new(3.0).expect("valid t law");
    let t_scale = (1.0f64 / 3.0).sqrt();
    let mut x = DMatrix::zeros(n, 4);
    let mut y = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    for i in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let x1 = 5.0 + z1;
        let x2 = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
        let x3: f64 = StandardNormal.sample(&mut rng);
        let x4: f64 = StandardNormal.sample(&mut rng);
        let z: f64 = match scenario.noise {
            Noise::StudentT3UnitVariance => t3.sample(&mut rng),
            _ => StandardNormal.sample(&mut rng),
        };
        let e = match scenario.noise {
            Noise::GaussianUnit => z,
            Noise::StudentT3UnitVariance => t_scale * z,
            Noise::HeteroGaussian => (0.6 + 0.2 * x1.abs()) * z,
        };
        let u: f64 = rng.random();
        let mean = BETA0[0] + BETA0[1] * x1 + BETA0[2] * x2 + BETA0[3] * x3 + BETA0[4] * x4;
        x[(i, 0)] = x1;
        x[(i, 1)] = x2;
        x[(i, 2)] = x3;
        x[(i, 3)] = x4;
        y.push(mean + scenario.sigma * e);
        r.push(u < sigmoid(PROPENSITY0[0] + PROPENSITY0[1] * x2));
    }
    Ok(FullSample { x, y, r })
}

/// Simulated dataset with outcomes masked where unobserved.
pub fn generate_data(n: usize, scenario: &ScenarioSpec, seed: u64) -> Result<Dataset> {
    let full = generate_full(n, scenario, seed)?;
    let y = full.y.iter().zip(&full.r).map(|(&v, &obs)| obs.then_some(v)).collect();
    Dataset::with_indicator(COVARIATE_NAMES.iter().map(|s| s.to_string()).collect(), "Y", full.x, y, full.r)
}

fn true_mean(x: &DMatrix<f64>, i: usize) -> f64 {
    BETA0[0] + (0..4).map(|c| BETA0[c + 1] * x[(i, c)]).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CmMrl,
    ImputeSc,
    ScCc,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::CmMrl, Method::ImputeSc, Method::ScCc, Method::Oracle];

    pub fn name(&self) -> &'static str {
        match self {
            Method::CmMrl => "cm_mrl",
            Method::ImputeSc => "impute_sc",
            Method::ScCc => "sc_cc",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "cm_mrl" => Ok(Method::CmMrl),
            "impute_sc" => Ok(Method::ImputeSc),
            "sc_cc" => Ok(Method::ScCc),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::Argument(format!("unknown method `{other}`"))),
        }
    }
}

/// Per-replicate configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub n_eval: usize,
    pub train_fraction: f64,
    pub calibration: CalibrationOptions,
    /// Outcome model used by impute-then-conformal, among those available.
    pub impute_sc_model: usize,
    pub c_unit_sigma: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 1600,
            n_eval: 2000,
            train_fraction: 0.5,
            calibration: CalibrationOptions::default(),
            impute_sc_model: 0,
            c_unit_sigma: false,
        }
    }
}

/// Coverage on the evaluation sample and interval length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodPerformance {
    pub coverage: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub result: std::result::Result<MethodPerformance, String>,
}

/// Diagnostics of one replicate's fitted pipeline.
#[derive(Debug, Clone, Default)]
pub struct ReplicateDiagnostics {
    pub beta: Option<Vec<f64>>,
    pub q_mr: Option<f64>,
    pub q_k: Vec<f64>,
    pub train_el_iterations: Option<usize>,
    pub calib_el_iterations: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ReplicateOutput {
    pub outcomes: Vec<MethodOutcome>,
    pub diagnostics: ReplicateDiagnostics,
}

impl ReplicateOutput {
    pub fn get(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }
}

fn evaluate(eval: &FullSample, half_width: f64, center: impl Fn(usize) -> f64) -> MethodPerformance {
    let n = eval.y.len();
    let hits = (0..n)
        .filter(|&i| {
            let c = center(i);
            (eval.y[i] - c).abs() <= half_width
        })
        .count();
    MethodPerformance { coverage: hits as f64 / n as f64, length: 2.0 * half_width }
}

/// One replicate: generate, split, train, calibrate and score every
/// requested method on a fresh fully observed evaluation sample.
pub fn run_replicate(
    cfg: &SimConfig,
    scenario: &ScenarioSpec,
    setting: &SettingSpec,
    methods: &[Method],
    seed: u64,
) -> Result<ReplicateOutput> {
    let ds = generate_data(cfg.n, scenario, seeds::derive(seed, &["data"]))?;
    let eval = generate_full(cfg.n_eval, scenario, seeds::derive(seed, &["eval"]))?;
    let split = data::split(ds.n(), cfg.train_fraction, seeds::derive(seed, &["split"]))?;
    let (prop_specs, out_specs) = candidate_models(setting);
    let tau = cfg.calibration.tau;

    let mut diagnostics = ReplicateDiagnostics::default();
    let trained = mr::train(
        &ds,
        &split.train,
        &prop_specs,
        &out_specs,
        cfg.calibration.n_draws,
        seeds::derive(seed, &["train"]),
        &cfg.calibration.el,
    );
    let pipeline = trained.and_then(|t| {
        diagnostics.beta = Some(t.fit.beta.clone());
        diagnostics.train_el_iterations = Some(t.fit.train_weights.iterations);
        let scores = calibration::conformity_scores(
            &t.fit,
            &ds,
            &split.calib,
            &t.outcome_models(),
            cfg.calibration.n_draws,
            seeds::derive(seed, &["calib"]),
        )?;
        Ok((t, scores))
    });

    let mut outcomes = Vec::with_capacity(methods.len());
    let cm = match &pipeline {
        Ok((t, scores)) => Some(calibration::calibrate_scores(&ds, &t.propensities, scores.clone(), &cfg.calibration)),
        Err(_) => None,
    };
    if let Some(Ok(c)) = &cm {
        diagnostics.q_mr = Some(c.q_mr);
        diagnostics.q_k = c.q_k.clone();
        diagnostics.calib_el_iterations = Some(c.el.iterations);
    }
    for &method in methods {
        let result = match method {
            Method::Oracle => {
                let q = scenario.oracle_half_width(tau);
                Ok(evaluate(&eval, q, |i| true_mean(&eval.x, i)))
            }
            _ => match &pipeline {
                Err(e) => Err(format!("training: {e}")),
                Ok((t, scores)) => {
                    let half = match method {
                        Method::CmMrl => match cm.as_ref().expect("computed with pipeline") {
                            Ok(c) => Ok(c.q_mr),
                            Err(e) => Err(format!("calibration: {e}")),
                        },
                        Method::ScCc => baselines::split_conformal_cc_from_scores(
                            &scores.observed,
                            tau,
                            cfg.calibration.finite_sample_correction,
                        )
                        .map_err(|e| e.to_string()),
                        Method::ImputeSc => baselines::impute_sc_from_scores(
                            scores,
                            cfg.impute_sc_model.min(scores.n_models().saturating_sub(1)),
                            tau,
                            cfg.calibration.score_imputation,
                            cfg.calibration.finite_sample_correction,
                        )
                        .map_err(|e| e.to_string()),
                        Method::Oracle => unreachable!(),
                    };
                    half.map(|q| evaluate(&eval, q, |i| t.fit.predict_covariates(eval.x.row(i).iter().copied())))
                }
            },
        };
        outcomes.push(MethodOutcome { method, result });
    }
    Ok(ReplicateOutput { outcomes, diagnostics })
}

/// Seed of replicate `rep` in cell `(setting, scenario)`.
pub fn replicate_seed(master: u64, setting: Setting, scenario: Scenario, rep: usize) -> u64 {
    seeds::derive(master, &[&setting.to_string(), &scenario.to_string(), &rep.to_string()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub settings: Vec<Setting>,
    pub scenarios: Vec<Scenario>,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub master_seed: u64,
    pub sim: SimConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            settings: Setting::ALL.to_vec(),
            scenarios: Scenario::ALL.to_vec(),
            methods: Method::ALL.to_vec(),
            replicates: 50,
            master_seed: 20240601,
            sim: SimConfig::default(),
        }
    }
}

/// One method's result in one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub method: Method,
    pub setting: Setting,
    pub scenario: Scenario,
    pub replicate: usize,
    pub result: std::result::Result<MethodPerformance, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub method: Method,
    pub setting: Setting,
    pub scenario: Scenario,
    pub coverage_mean: f64,
    pub coverage_sd: f64,
    pub length_mean: f64,
    pub length_sd: f64,
    /// Successful replicates.
    pub replicates: usize,
    /// Replicates that hit a numerical failure.
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub summaries: Vec<ExperimentSummary>,
    pub records: Vec<ReplicateRecord>,
}

impl ExperimentResults {
    pub fn summary(&self, method: Method, setting: Setting, scenario: Scenario) -> Option<&ExperimentSummary> {
        self.summaries.iter().find(|s| s.method == method && s.setting == setting && s.scenario == scenario)
    }

    pub fn any_failed(&self) -> bool {
        self.summaries.iter().any(|s| s.failed > 0)
    }
}

/// Sample mean and standard deviation (denominator `n - 1`; 0 for `n < 2`).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Runs the full (setting x scenario x replicate) grid in parallel and
/// summarizes each (method, setting, scenario) cell.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    if cfg.replicates == 0 {
        return Err(Error::Argument("at least one replicate is required".into()));
    }
    let mut tasks = Vec::new();
    for &setting in &cfg.settings {
        for &scenario in &cfg.scenarios {
            for rep in 0..cfg.replicates {
                tasks.push((setting, scenario, rep));
            }
        }
    }
    let outputs: Vec<Vec<ReplicateRecord>> = tasks
        .par_iter()
        .map(|&(setting, scenario, rep)| {
            let seed = replicate_seed(cfg.master_seed, setting, scenario, rep);
            let spec = ScenarioSpec::new(scenario, cfg.sim.c_unit_sigma);
            let out = run_replicate(&cfg.sim, &spec, &SettingSpec::new(setting), &cfg.methods, seed);
            match out {
                Ok(out) => out
                    .outcomes
                    .into_iter()
                    .map(|o| ReplicateRecord { method: o.method, setting, scenario, replicate: rep, result: o.result })
                    .collect(),
                Err(e) => cfg
                    .methods
                    .iter()
                    .map(|&method| ReplicateRecord { method, setting, scenario, replicate: rep, result: Err(e.to_string()) })
                    .collect(),
            }
        })
        .collect();
    let mut records: Vec<ReplicateRecord> = outputs.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.setting, r.scenario, r.method, r.replicate));

    let mut summaries = Vec::new();
    for &setting in &cfg.settings {
        for &scenario in &cfg.scenarios {
            for &method in &cfg.methods {
                let cell: Vec<&ReplicateRecord> = records
                    .iter()
                    .filter(|r| r.setting == setting && r.scenario == scenario && r.method == method)
                    .collect();
                let ok: Vec<MethodPerformance> = cell.iter().filter_map(|r| r.result.as_ref().ok().copied()).collect();
                let (coverage_mean, coverage_sd) = mean_sd(&ok.iter().map(|p| p.coverage).collect::<Vec<_>>());
                let (length_mean, length_sd) = mean_sd(&ok.iter().map(|p| p.length).collect::<Vec<_>>());
                summaries.push(ExperimentSummary {
                    method,
                    setting,
                    scenario,
                    coverage_mean,
                    coverage_sd,
                    length_mean,
                    length_sd,
                    replicates: ok.len(),
                    failed: cell.len() - ok.len(),
                });
            }
        }
    }
    Ok(ExperimentResults { summaries, records })
}

/// Column order of the summary CSV.
pub const SUMMARY_HEADER: [&str; 9] =
    ["method", "setting", "scenario", "coverage_mean", "coverage_sd", "length_mean", "length_sd", "replicates", "failed"];
/// Column order of the per-replicate CSV.
pub const LENGTHS_HEADER: [&str; 7] = ["method", "setting", "scenario", "replicate", "coverage", "length", "error"];

/// Writes one row per (method, setting, scenario) cell. Cells without a
/// successful replicate carry `NaN` statistics.
pub fn write_summary_csv<W: std::io::Write>(results: &ExperimentResults, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for s in &results.summaries {
        w.write_record([
            s.method.name().to_string(),
            s.setting.to_string(),
            s.scenario.to_string(),
            data::format_real(s.coverage_mean),
            data::format_real(s.coverage_sd),
            data::format_real(s.length_mean),
            data::format_real(s.length_sd),
            s.replicates.to_string(),
            s.failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one row per replicate per cell; failed replicates leave
/// coverage and length empty and carry the error message.
pub fn write_lengths_csv<W: std::io::Write>(results: &ExperimentResults, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LENGTHS_HEADER)?;
    for r in &results.records {
        let (coverage, length, error) = match &r.result {
            Ok(p) => (data::format_real(p.coverage), data::format_real(p.length), String::new()),
            Err(e) => (String::new(), String::new(), e.clone()),
        };
        w.write_record([
            r.method.name().to_string(),
            r.setting.to_string(),
            r.scenario.to_string(),
            r.replicate.to_string(),
            coverage,
            length,
            error,
        ])?;
    }
    w.flush()?;
    Ok(())
}
