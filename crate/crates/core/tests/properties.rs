//! Property-based checks of the documented invariants.

mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use mrconformal::baselines;
use mrconformal::calibration::{self, ConformityScores, ScoreImputation};
use mrconformal::el::{self, ElOptions, ElSolution, MomentMatrix};
use mrconformal::models;
use mrconformal::mr::{self, MrFit};
use mrconformal::{data, Dataset, ModelSpec};

fn real() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1.0..1.0f64, Just(0.0), Just(-0.0), Just(1e-300), Just(123456789.123456789)]
}

prop_compose! {
    fn dataset()(n in 1usize..12, p in 1usize..4)
        (x in prop::collection::vec(real(), n * p), y in prop::collection::vec(prop::option::of(real()), n), p in Just(p))
        -> Dataset {
        let n = y.len();
        let names = (0..p).map(|j| format!("x{j}")).collect();
        Dataset::new(names, "y", DMatrix::from_row_slice(n, p, &x), y).unwrap()
    }
}

/// Moment matrix whose columns mix both signs, so zero lies inside the hull
/// with high probability; instances where it does not are skipped.
fn moment_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (5usize..60, 1usize..4).prop_flat_map(|(m, d)| {
        (prop::collection::vec(-1.0..1.0f64, m * d), prop::collection::vec(-0.4..0.4f64, d))
            .prop_map(move |(raw, shift)| DMatrix::from_fn(m, d, |i, c| raw[i * d + c] + shift[c]))
    })
}

fn scores() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..40).prop_flat_map(|m| {
        (prop::collection::vec((0u32..50).prop_map(|k| k as f64 * 0.1), m), prop::collection::vec(0.01..1.0f64, m))
            .prop_map(|(e, raw)| {
                let total: f64 = raw.iter().sum();
                (e, raw.iter().map(|w| w / total).collect())
            })
    })
}

fn check_el(v: &MomentMatrix, sol: &ElSolution) {
    assert!(v.max_imbalance(&sol.weights) <= 1e-8, "imbalance {}", v.max_imbalance(&sol.weights));
    assert!(sol.weights.iter().all(|&w| w > 0.0));
    assert!((sol.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn indicator_matches_defined_outcomes(ds in dataset()) {
        prop_assert_eq!(ds.m(), ds.r().iter().filter(|&&b| b).count());
        for i in 0..ds.n() {
            prop_assert_eq!(ds.y()[i].is_some(), ds.r()[i]);
        }
    }

    #[test]
    fn csv_round_trip_is_exact(ds in dataset(), with_r in any::<bool>()) {
        let r_col = with_r.then_some("r");
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, r_col).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), "y", r_col).unwrap();
        prop_assert_eq!(back.names(), ds.names());
        prop_assert_eq!(back.r(), ds.r());
        for (a, b) in back.x().iter().zip(ds.x().iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in back.y().iter().zip(ds.y()) {
            prop_assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        }
    }

    #[test]
    fn split_is_a_partition(n in 2usize..500, fraction in 0.05..0.95f64, seed in any::<u64>()) {
        let n_train = (fraction * n as f64).round() as usize;
        prop_assume!(n_train > 0 && n_train < n);
        let s = data::split(n, fraction, seed).unwrap();
        prop_assert_eq!(s.train.len(), n_train);
        let mut all: Vec<usize> = s.train.iter().chain(&s.calib).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(data::split(n, fraction, seed).unwrap(), s);
    }

    #[test]
    fn el_balances_and_restarts(v in moment_matrix()) {
        let v = MomentMatrix::new(v).unwrap();
        let opts = ElOptions::default();
        let sol = match el::solve_el(&v, &opts) {
            Ok(sol) => sol,
            // zero outside the moment hull: no solution exists
            Err(_) => return Ok(()),
        };
        check_el(&v, &sol);
        for pair in sol.objective_trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-14 * pair[0].abs().max(1.0));
        }
        let again = el::solve_el_from(&v, &opts, Some(&sol.rho)).unwrap();
        prop_assert!(again.iterations <= 2, "restart took {} iterations", again.iterations);
        check_el(&v, &again);
    }

    #[test]
    fn logistic_gradient_vanishes(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 200;
        let x: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<Option<f64>> = (0..n)
            .map(|i| {
                let p = common::sigmoid(0.3 + 0.8 * x[2 * i] - 0.5 * x[2 * i + 1]);
                rng.random_bool(p).then_some(1.0)
            })
            .collect();
        let ds = Dataset::new(vec!["a".into(), "b".into()], "y", DMatrix::from_row_slice(n, 2, &x), y).unwrap();
        let idx: Vec<usize> = (0..n).collect();
        let fit = models::fit_propensity(&ds, &idx, &ModelSpec::propensity(vec![0, 1])).unwrap();
        let mut g = [0.0; 3];
        for i in 0..n {
            let row = ds.design_row(i, &[0, 1]);
            let resid = if ds.r()[i] { 1.0 } else { 0.0 } - fit.predict(&ds, i);
            for c in 0..3 {
                g[c] += resid * row[c];
            }
        }
        prop_assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-8, "{g:?}");
    }

    #[test]
    fn gaussian_residuals_are_orthogonal(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 60;
        let x: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<Option<f64>> =
            (0..n).map(|i| rng.random_bool(0.7).then(|| 1.0 + x[2 * i] - 2.0 * x[2 * i + 1] + rng.random_range(-1.0..1.0))).collect();
        let ds = Dataset::new(vec!["a".into(), "b".into()], "y", DMatrix::from_row_slice(n, 2, &x), y).unwrap();
        let idx: Vec<usize> = (0..n).collect();
        prop_assume!(ds.m() >= 5);
        let fit = models::fit_outcome(&ds, &idx, &ModelSpec::outcome(vec![0, 1])).unwrap();
        for c in 0..3 {
            let dot: f64 = ds
                .complete_cases(&idx)
                .iter()
                .map(|&i| ds.design_row(i, &[0, 1])[c] * (ds.y()[i].unwrap() - fit.predict(&ds, i)))
                .sum();
            prop_assert!(dot.abs() <= 1e-8 * n as f64 * 3.0, "{dot}");
        }
    }

    #[test]
    fn weighted_residual_orthogonality(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 50;
        let x: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<Option<f64>> = (0..n).map(|_| rng.random_bool(0.8).then(|| rng.random_range(-5.0..5.0))).collect();
        let ds = Dataset::new(vec!["a".into(), "b".into()], "y", DMatrix::from_row_slice(n, 2, &x), y).unwrap();
        let idx: Vec<usize> = (0..n).collect();
        let cc = ds.complete_cases(&idx);
        prop_assume!(cc.len() >= 4);
        let raw: Vec<f64> = cc.iter().map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let sol = ElSolution { rho: vec![], weights: weights.clone(), objective: 0.0, iterations: 0, grad_norm: 0.0, dropped_columns: vec![], objective_trace: vec![] };
        let fit = mr::mr_fit(&ds, &idx, sol).unwrap();
        for c in 0..3 {
            let dot: f64 = cc
                .iter()
                .zip(&weights)
                .map(|(&i, w)| w * ds.full_design_row(i)[c] * (ds.y()[i].unwrap() - fit.predict(&ds, i)))
                .sum();
            prop_assert!(dot.abs() <= 1e-8, "{dot}");
        }
    }

    #[test]
    fn q_mr_is_monotone_in_tau((eps, d) in scores(), a in 0.01..1.0f64, b in 0.01..1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(calibration::solve_q_mr(&eps, &d, lo).unwrap() <= calibration::solve_q_mr(&eps, &d, hi).unwrap());
    }

    #[test]
    fn weighted_coverage_is_tight((eps, d) in scores(), tau in 0.01..0.99f64) {
        let q = calibration::solve_q_mr(&eps, &d, tau).unwrap();
        let at_or_below: f64 = eps.iter().zip(&d).filter(|(&e, _)| e <= q).map(|(_, w)| w).sum();
        let below: f64 = eps.iter().zip(&d).filter(|(&e, _)| e < q).map(|(_, w)| w).sum();
        prop_assert!(at_or_below >= tau - 1e-12);
        prop_assert!(below < tau);
    }

    #[test]
    fn uniform_weights_reduce_to_complete_case((eps, _d) in scores(), tau in 0.01..0.99f64) {
        let u = vec![1.0 / eps.len() as f64; eps.len()];
        prop_assert_eq!(
            calibration::solve_q_mr(&eps, &u, tau).unwrap(),
            baselines::split_conformal_cc_from_scores(&eps, tau, false).unwrap()
        );
    }

    #[test]
    fn intervals_are_symmetric_with_constant_width(
        beta in prop::collection::vec(-10.0..10.0f64, 3),
        xs in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 1..20),
        q in 0.0..50.0f64,
    ) {
        let fit = MrFit { beta, train_weights: ElSolution { rho: vec![], weights: vec![], objective: 0.0, iterations: 0, grad_norm: 0.0, dropped_columns: vec![], objective_trace: vec![] } };
        for (a, b) in xs {
            let iv = calibration::predict_interval(&fit, &[a, b], q);
            // symmetric by representation; endpoint differences round independently
            prop_assert_eq!(iv.half_width, q);
            prop_assert_eq!(iv.upper(), iv.center + q);
            prop_assert_eq!(iv.lower(), iv.center - q);
            let ulp = f64::EPSILON * iv.center.abs().max(q);
            prop_assert!(((iv.upper() - iv.center) - (iv.center - iv.lower())).abs() <= 4.0 * ulp);
            prop_assert!(iv.lower() <= iv.center && iv.center <= iv.upper());
        }
    }

    #[test]
    fn perfect_imputation_matches_full_data_split_conformal(
        full in prop::collection::vec((0u32..40).prop_map(|k| k as f64 * 0.25), 2..30),
        mask_bits in prop::collection::vec(any::<bool>(), 30),
        t in 1usize..4,
        tau in 0.05..0.95f64,
    ) {
        let n = full.len();
        let mut mask: Vec<bool> = mask_bits[..n].to_vec();
        mask[0] = true;
        let observed: Vec<f64> = (0..n).filter(|&i| mask[i]).map(|i| full[i]).collect();
        // zero-variance imputation reproduces the true score in every draw
        let draws: Vec<f64> = (0..t).flat_map(|_| full.iter().copied()).collect();
        let s = ConformityScores::from_parts((0..n).collect(), mask, observed, vec![draws], t).unwrap();
        for mode in [ScoreImputation::PerDraw, ScoreImputation::Averaged] {
            prop_assert_eq!(
                baselines::impute_sc_from_scores(&s, 0, tau, mode, false).unwrap(),
                baselines::split_conformal_cc_from_scores(&full, tau, false).unwrap()
            );
        }
    }
}
