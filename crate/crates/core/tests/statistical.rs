//! Large-sample behavior of the fitted models and the simulation design.

use mrconformal::calibration;
use mrconformal::el::ElOptions;
use mrconformal::models::{self, OutcomeModel};
use mrconformal::mr;
use mrconformal::sim::{self, Scenario, ScenarioSpec, Setting, SettingSpec, BETA0};
use mrconformal::{data, seeds, ModelSpec};

fn scenario(id: Scenario) -> ScenarioSpec {
    ScenarioSpec::new(id, false)
}

#[test]
fn logistic_recovers_generating_propensity() {
    let ds = sim::generate_data(50_000, &scenario(Scenario::A), 17).unwrap();
    let idx: Vec<usize> = (0..ds.n()).collect();
    let fit = models::fit_propensity(&ds, &idx, &ModelSpec::propensity(vec![1])).unwrap();
    assert!((fit.coef[0] - 3.5).abs() <= 0.1, "{:?}", fit.coef);
    assert!((fit.coef[1] + 5.0).abs() <= 0.1, "{:?}", fit.coef);
    // 0.5 sigmoid(3.5) + 0.5 sigmoid(-1.5)
    let target = 0.5 / (1.0 + (-3.5f64).exp()) + 0.5 / (1.0 + 1.5f64.exp());
    assert!((target - 0.5766).abs() < 1e-4);
    let mean_p = fit.predict_all(&ds, &idx).iter().sum::<f64>() / ds.n() as f64;
    assert!((mean_p - target).abs() <= 0.01, "{mean_p}");
}

#[test]
fn ols_recovers_generating_coefficients() {
    let ds = sim::generate_data(50_000, &scenario(Scenario::A), 23).unwrap();
    let idx: Vec<usize> = (0..ds.n()).collect();
    let fit = models::fit_outcome(&ds, &idx, &ModelSpec::outcome(vec![0, 1, 2, 3])).unwrap();
    for (b, t) in fit.coef.iter().zip(BETA0) {
        assert!((b - t).abs() <= 0.05, "{:?}", fit.coef);
    }
    assert!((fit.sigma - 1.0).abs() < 0.02);
}

#[test]
fn imputation_draws_obey_clt() {
    let ds = sim::generate_data(1, &scenario(Scenario::A), 1).unwrap();
    let model = OutcomeModel { spec: ModelSpec::outcome(vec![0, 1, 2, 3]), coef: BETA0.to_vec(), sigma: 1.7 };
    let t = 100_000;
    let draws = models::draw_imputations(&model, 0, &ds, &[0], t, 31).unwrap();
    let center = model.predict(&ds, 0);
    let mean = draws.mean_for(0);
    assert!((mean - center).abs() <= 4.0 * model.sigma / (t as f64).sqrt(), "{mean} vs {center}");
    let var = draws.draws_for(0).map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
    // sd of the sample variance is sigma^2 sqrt(2 / (T - 1))
    assert!((var - 2.89).abs() <= 4.0 * 2.89 * (2.0 / (t - 1) as f64).sqrt(), "{var}");
}

#[test]
fn imputed_scores_approach_folded_normal_mean() {
    let ds = sim::generate_data(1, &scenario(Scenario::A), 2).unwrap();
    let s = 0.8;
    let model = OutcomeModel { spec: ModelSpec::outcome(vec![0, 1, 2, 3]), coef: BETA0.to_vec(), sigma: s };
    // predictor equal to the imputation model's mean
    let fit = mr::MrFit {
        beta: BETA0.to_vec(),
        train_weights: mrconformal::ElSolution {
            rho: vec![],
            weights: vec![],
            objective: 0.0,
            iterations: 0,
            grad_norm: 0.0,
            dropped_columns: vec![],
            objective_trace: vec![],
        },
    };
    let scores = calibration::conformity_scores(&fit, &ds, &[0], &[model], 100_000, 4).unwrap();
    let target = s * (2.0 / std::f64::consts::PI).sqrt();
    assert!((scores.imputed[0][0] - target).abs() <= 0.01 * target, "{}", scores.imputed[0][0]);
}

#[test]
fn generator_moments() {
    let full = sim::generate_full(1_000_000, &scenario(Scenario::A), 41).unwrap();
    let n = full.y.len() as f64;
    let mean_y = full.y.iter().sum::<f64>() / n;
    assert!((mean_y - 7.0).abs() <= 0.02, "{mean_y}");
    let observed = full.r.iter().filter(|&&b| b).count() as f64 / n;
    assert!((observed - 0.577).abs() <= 0.005, "{observed}");
}

#[test]
fn scenario_b_noise_has_unit_variance() {
    let full = sim::generate_full(1_000_000, &scenario(Scenario::B), 43).unwrap();
    let n = full.y.len() as f64;
    let var = (0..full.y.len())
        .map(|i| {
            let mean = BETA0[0] + (0..4).map(|c| BETA0[c + 1] * full.x[(i, c)]).sum::<f64>();
            (full.y[i] - mean).powi(2)
        })
        .sum::<f64>()
        / n;
    assert!((var - 1.0).abs() <= 0.02, "{var}");
}

#[test]
fn degenerate_noise_gives_vanishing_lengths() {
    let spec = ScenarioSpec { sigma: 0.0, ..scenario(Scenario::A) };
    let cfg = sim::SimConfig { n: 400, n_eval: 200, ..Default::default() };
    let out = sim::run_replicate(&cfg, &spec, &SettingSpec::new(Setting::S1), &sim::Method::ALL, 3).unwrap();
    for o in &out.outcomes {
        let p = o.result.as_ref().unwrap();
        assert!(p.length < 1e-6, "{:?}", o);
    }
}

/// Mean sup-norm error of the multiple-robust coefficients at n = 20000.
fn beta_error(setting: Setting, reps: usize) -> f64 {
    let (props, outs) = sim::candidate_models(&SettingSpec::new(setting));
    let total: f64 = (0..reps)
        .map(|rep| {
            let seed = seeds::derive(7, &["beta", &setting.to_string(), &rep.to_string()]);
            let ds = sim::generate_data(20_000, &scenario(Scenario::A), seed).unwrap();
            let split = data::split(ds.n(), 0.5, seed).unwrap();
            let t = mr::train(&ds, &split.train, &props, &outs, 100, seed, &ElOptions::default()).unwrap();
            t.fit.beta.iter().zip(BETA0).map(|(b, t)| (b - t).abs()).fold(0.0, f64::max)
        })
        .sum();
    total / reps as f64
}

#[test]
fn mr_coefficients_single_run_s2() {
    assert!(beta_error(Setting::S2, 1) <= 0.1);
}

#[test]
fn mr_coefficients_consistency_sweep() {
    for setting in Setting::ALL {
        let err = beta_error(setting, 20);
        assert!(err <= 0.1, "{setting}: {err}");
    }
}
