use mcforecast::data::{build_ensemble, build_lagged, LagSpec, SensorPanel};
use ndarray::Array2;
use proptest::prelude::*;

fn case() -> impl Strategy<Value = (SensorPanel, LagSpec)> {
    (1usize..4, 1usize..5, 1usize..4, 1usize..6, 1usize..6, 0usize..5).prop_flat_map(|(n, l, h, dt, te, extra)| {
        let t = te + dt;
        let spec = LagSpec::new(l, h, t, te).unwrap();
        let len = spec.min_panel_len() + extra;
        (prop::collection::vec(0u8..=1, n * len), -5000i64..5000).prop_map(move |(v, start)| {
            let ids = (0..n).map(|i| format!("s{i}")).collect();
            let values = Array2::from_shape_vec((n, len), v.clone()).unwrap();
            (SensorPanel::new(ids, values, start, 1).unwrap(), spec)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn windows_index_the_panel((panel, spec) in case()) {
        let d = build_lagged(&panel, &spec).unwrap();
        let (n, l, h) = (panel.n_sensors(), spec.lag, spec.horizon);
        let at = |s: usize, t: usize| f64::from(panel.values()[[s, t]]);
        prop_assert_eq!(d.x_tr.dim(), (n * l, spec.train_len));
        prop_assert_eq!(d.x_te.dim(), (n * l, spec.test_len));
        for j in 0..spec.train_len {
            for k in 0..l {
                for s in 0..n {
                    prop_assert_eq!(d.x_tr[[k * n + s, j]], at(s, j + k));
                }
            }
            for s in 0..n {
                prop_assert_eq!(d.y_tr[[s, j]], at(s, j + l - 1 + h));
            }
            prop_assert_eq!(d.timestamps_tr[j], panel.start_time() + (j + l - 1) as i64);
        }
        let truth = d.y_te_truth.as_ref().unwrap();
        for j in 0..spec.test_len {
            let first = spec.train_len + j;
            for k in 0..l {
                for s in 0..n {
                    prop_assert_eq!(d.x_te[[k * n + s, j]], at(s, first + k));
                }
            }
            for s in 0..n {
                prop_assert_eq!(truth[[s, j]], at(s, first + l - 1 + h));
            }
        }
        prop_assert_eq!(d.last_test_state().row(0).len(), spec.test_len);
    }

    #[test]
    fn too_short_panels_fail((panel, spec) in case()) {
        let short = LagSpec::new(spec.lag, spec.horizon, spec.train_len + panel.len(), spec.test_len).unwrap();
        prop_assert!(build_lagged(&panel, &short).is_err());
    }
}

#[test]
fn ensemble_columns_run_oldest_first() {
    let spec = LagSpec::new(2, 1, 5, 2).unwrap();
    let len = spec.min_panel_len();
    let panels: Vec<SensorPanel> = (1..=3u32)
        .map(|d| {
            let values = Array2::from_shape_fn((1, len), |(_, t)| u8::from((t as u32 + d).is_multiple_of(2)));
            SensorPanel::new(vec!["a".into()], values, 25_200 + (3 - d as i64) * 86_400, d).unwrap()
        })
        .collect();
    let e = build_ensemble(&panels, &spec).unwrap();
    assert_eq!(e.total_train(), 15);
    let y = e.augmented_y_tr();
    for d in 1..=3 {
        let own = build_lagged(&panels[d - 1], &spec).unwrap();
        for t in 0..5 {
            let col = e.column_index(t, d);
            assert_eq!(e.day_of_column(col), d);
            assert_eq!(y[[0, col]], own.y_tr[[0, t]]);
        }
    }
    assert_eq!(e.x_te(), &build_lagged(&panels[0], &spec).unwrap().x_te);
}
