use mcforecast::boost::{
    boost_fit, bound_trace, combination_weights, combine_scores, initial_weights, measured_trace, training_error_bound,
    BoostModel, BoostSpec, InitWeights,
};
use mcforecast::data::{build_ensemble, EnsembleDataset, LagSpec};
use mcforecast::kernel::{assemble_grams, KernelSpec};
use mcforecast::simgen::{simulate, SimSpec};
use mcforecast::solver::{solve, Problem, SolverSpec};
use mcforecast::threshold::{apply_thresholds, learn_thresholds};
use ndarray::Array2;

fn ensemble(seed: u64, days: usize) -> EnsembleDataset {
    let spec = LagSpec::new(4, 10, 60, 40).unwrap();
    let sim = SimSpec {
        sensors: 3,
        days,
        seconds_per_day: spec.min_panel_len(),
        seed,
        ..Default::default()
    };
    build_ensemble(&simulate(&sim).unwrap(), &spec).unwrap()
}

fn specs(seed: u64, rounds: usize) -> (KernelSpec, SolverSpec, BoostSpec) {
    (
        KernelSpec::default_for(3, 4, 90),
        SolverSpec {
            rank: 2,
            seed,
            ..Default::default()
        },
        BoostSpec {
            rounds,
            ..Default::default()
        },
    )
}

fn fit(seed: u64, rounds: usize) -> (EnsembleDataset, BoostModel) {
    let d = ensemble(seed, 3);
    let (k, s, b) = specs(seed, rounds);
    let m = boost_fit(&d, &k, &s, &b).unwrap();
    (d, m)
}

#[test]
fn weights_stay_positive_and_alpha_is_normalized() {
    for seed in 0..3 {
        let (_, m) = fit(seed, 5);
        for r in &m.rounds {
            assert!(r.theta.iter().all(|w| *w > 0.0 && w.is_finite()));
            assert!((0.0..=1.0).contains(&r.epsilon_raw));
        }
        assert!((m.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let beta_sum: f64 = m.betas().iter().sum();
        for (a, b) in m.alpha.iter().zip(m.betas()) {
            assert!((a - b / beta_sum).abs() < 1e-12);
        }
    }
}

#[test]
fn mismatched_columns_grow_iff_beta_is_positive() {
    for seed in 0..3 {
        let (_, m) = fit(seed, 5);
        for pair in m.rounds.windows(2) {
            let (prev, next) = (&pair[0], &pair[1]);
            for ((w0, w1), bad) in prev.theta.iter().zip(&next.theta).zip(&prev.mismatched) {
                if *bad {
                    assert!((w1 / w0 - prev.beta.exp()).abs() < 1e-9 * prev.beta.exp());
                    assert_eq!(w1 > w0, prev.beta > 0.0);
                } else {
                    assert_eq!(w1, w0);
                }
            }
        }
    }
}

#[test]
fn single_round_equals_plain_solve() {
    let (d, m) = fit(1, 1);
    assert_eq!(m.alpha, vec![1.0]);
    let (k, s, _) = specs(1, 1);
    let grams = assemble_grams(&d, &k, &vec![1.0; d.total_train()]).unwrap();
    let y = d.augmented_y_tr();
    let out = solve(&Problem::new(&grams, y.view()).unwrap(), &s).unwrap();
    assert_eq!(m.scores_tr, out.prediction.y_tr_hat);
    assert_eq!(m.scores_te, out.prediction.y_te_hat);
    let tau = learn_thresholds(out.prediction.y_tr_hat.view(), y.view()).unwrap();
    assert_eq!(m.tau, tau);
    assert_eq!(m.predictions_te, apply_thresholds(out.prediction.y_te_hat.view(), &tau).unwrap());
}

#[test]
fn combined_scores_lie_in_the_hull_of_rounds() {
    for seed in 0..3 {
        let (_, m) = fit(seed, 5);
        if m.alpha.iter().any(|a| *a < 0.0) {
            continue;
        }
        for ((i, j), v) in m.scores_te.indexed_iter() {
            let vals = m.rounds.iter().map(|r| r.scores_te[[i, j]]);
            let lo = vals.clone().fold(f64::INFINITY, f64::min);
            let hi = vals.fold(f64::NEG_INFINITY, f64::max);
            assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }
}

#[test]
fn measured_error_respects_the_bound() {
    for seed in 0..3 {
        let (d, m) = fit(seed, 5);
        let y = d.augmented_y_tr();
        let bound = training_error_bound(&m, &m.tau);
        let measured = measured_trace(&m, y.view()).unwrap();
        for (b, c) in bound.iter().zip(&measured) {
            if let Some(c) = c {
                assert!((*c as f64) <= *b, "{measured:?} vs {bound:?}");
            }
        }
        assert_eq!(measured.last().unwrap().unwrap(), m.mismatched_columns(y.view()));
    }
}

#[test]
fn bound_trace_hand_values() {
    let t = bound_trace(&[0.25, 0.25], 4, 0.5);
    let f = 2.0 * (0.75f64 * 0.25).sqrt();
    assert!((t[0] - 4.0 * f).abs() < 1e-12);
    assert!((t[1] - 4.0 * f * f).abs() < 1e-12);
    // a = 0 reduces every factor to 2(1 - ε).
    assert!((bound_trace(&[0.1], 10, 0.0)[0] - 18.0).abs() < 1e-12);
    // ε = 1/2 leaves the bound at N.
    assert!((bound_trace(&[0.5; 3], 7, 0.3)[2] - 7.0).abs() < 1e-12);
}

#[test]
fn combination_helpers() {
    assert!(combination_weights(&[-1.0, 0.5]).is_err());
    let a = Array2::from_elem((2, 2), 1.0);
    let b = Array2::from_elem((2, 2), 3.0);
    let c = combine_scores(&[0.25, 0.75], &[a.view(), b.view()]).unwrap();
    assert_eq!(c, Array2::from_elem((2, 2), 2.5));
    assert!(combine_scores(&[1.0], &[a.view(), b.view()]).is_err());
}

#[test]
fn recency_weights_decay_with_age() {
    let d = ensemble(0, 3);
    let w = initial_weights(&d, InitWeights::Recency);
    for (col, v) in w.iter().enumerate() {
        assert_eq!(*v, 1.0 / d.day_of_column(col) as f64);
    }
    // The newest block sits last.
    assert_eq!(*w.last().unwrap(), 1.0);
    assert_eq!(w[0], 1.0 / 3.0);
}

#[test]
fn fit_is_deterministic() {
    let (_, a) = fit(2, 3);
    let (_, b) = fit(2, 3);
    assert_eq!(a.scores_te, b.scores_te);
    assert_eq!(a.alpha, b.alpha);
    assert_eq!(a.tau, b.tau);
}
