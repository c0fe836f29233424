use smoe_core::demo1d::{run_demo, Demo1DConfig, Scenario};
use smoe_core::model::pixel_coord;
use smoe_core::SmoeModel1;

fn scenario(samples: usize, noise_var: f64, h: usize, trials: usize) -> Scenario {
    let cfg = Demo1DConfig {
        sample_counts: vec![samples],
        noise_vars: vec![noise_var],
        h,
        trials,
        seed: 21,
        ..Demo1DConfig::default()
    };
    run_demo(&cfg).unwrap().scenarios.remove(0)
}

fn curve_rmse(a: &SmoeModel1, b: &SmoeModel1) -> f64 {
    let n = 1000;
    let s: f64 = (0..n)
        .map(|i| {
            let x = [pixel_coord(i, n)];
            (a.predict(&x) - b.predict(&x)).powi(2)
        })
        .sum();
    (s / n as f64).sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

#[test]
fn fusion_does_not_increase_median_error() {
    for h in [2, 5, 10] {
        let sc = scenario(32, 0.05, h, 20);
        let (single, fused) = (sc.median_single_error(), sc.median_fused_error());
        assert!(
            fused.expert_rmse <= single.expert_rmse,
            "H={h}: {fused:?} vs {single:?}"
        );
    }
}

#[test]
fn fused_expert_error_below_single_at_small_sample_count() {
    let sc = scenario(32, 0.05, 10, 20);
    assert!(sc.median_fused_error().expert_rmse < sc.median_single_error().expert_rmse);
}

#[test]
fn more_samples_reconstruct_the_signal_better() {
    let truth = smoe_core::demo1d::default_ground_truth();
    let err = |m| {
        median(
            scenario(m, 0.05, 1, 10)
                .trials
                .iter()
                .map(|t| curve_rmse(&truth, &t.fits[0]))
                .collect(),
        )
    };
    let (large, small) = (err(3000), err(32));
    assert!(large < small, "M=3000 {large} vs M=32 {small}");
}

// Under joint mixing weights the gating is unchanged when a common quadratic
// is added to every kernel exponent, so the fitted centers are free to drift
// along that family. The signal is recovered; the parameters are not.
#[test]
#[ignore = "kernel centers are not identifiable from samples alone"]
fn noiseless_large_sample_recovers_centers() {
    let sc = scenario(3000, 0.0, 1, 3);
    for t in &sc.trials {
        assert!(t.fit_errors[0].center_max < 1e-3, "{:?}", t.fit_errors[0]);
    }
}

#[test]
#[ignore = "kernel centers are not identifiable from samples alone"]
fn parameter_error_shrinks_with_sample_count() {
    let large = scenario(3000, 0.05, 1, 20).median_single_error();
    let small = scenario(32, 0.05, 1, 20).median_single_error();
    assert!(large.center_rmse < small.center_rmse && large.expert_rmse < small.expert_rmse);
}

#[test]
#[ignore = "kernel centers are not identifiable from samples alone"]
fn fusion_does_not_increase_median_center_error() {
    for h in [2, 5, 10] {
        let sc = scenario(32, 0.05, h, 20);
        let (single, fused) = (sc.median_single_error(), sc.median_fused_error());
        assert!(
            fused.center_rmse <= single.center_rmse,
            "H={h}: {fused:?} vs {single:?}"
        );
    }
}
