//! Property tests: the distributional estimators behave like CDFs on
//! arbitrary fitted models, the bootstrap only rearranges observed values,
//! and the full test is a pure function of its inputs.

use convspec::estimators::{
    convolution_cdf, convolution_cdf_profile, fit_least_squares, kernel_cdf, residual_cdf,
    KernelSpec,
};
use convspec::process::{simulate, Hypothesis, SimSpec, TimeSeries};
use convspec::spectest::{block_resample, run_test, GridSpec, TestConfig};
use convspec::MeanFamily;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_spec() -> impl Strategy<Value = SimSpec> {
    // theta0 is kept away from zero: at theta0 = 0 the null process (and the
    // alternative with theta1 = 0) degenerates to the zero series and no fit
    // exists.
    (
        0.05_f64..0.85,
        any::<bool>(),
        0.0_f64..1.2,
        20_usize..60,
        prop_oneof![Just(Hypothesis::Null), Just(Hypothesis::Alternative)],
        any::<u64>(),
    )
        .prop_map(|(magnitude, negative, theta1, length, hypothesis, seed)| {
            let theta0 = if negative { -magnitude } else { magnitude };
            SimSpec::new(theta0, theta1, length, hypothesis, seed)
        })
}

fn arb_bandwidth() -> impl Strategy<Value = f64> {
    0.02_f64..0.8
}

/// Sorted probe points spanning well past the data range.
fn probes(series: &TimeSeries, count: usize) -> Vec<f64> {
    let lo = series.values().iter().cloned().fold(f64::INFINITY, f64::min) - 3.0;
    let hi = series.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 3.0;
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_cdf_is_a_cdf(spec in arb_spec(), b in arb_bandwidth()) {
        let series = simulate(&spec).unwrap();
        let kernel = KernelSpec::uniform(b);
        let xs = probes(&series, 41);
        let mut prev = 0.0;
        for &x in &xs {
            let f = kernel_cdf(&series, &kernel, x).unwrap();
            prop_assert!((0.0..=1.0).contains(&f), "out of range at {x}: {f}");
            prop_assert!(f + 1e-12 >= prev, "not monotone at {x}: {f} < {prev}");
            prev = f;
        }
        prop_assert!(kernel_cdf(&series, &kernel, xs[0]).unwrap() == 0.0);
        prop_assert!(kernel_cdf(&series, &kernel, *xs.last().unwrap()).unwrap() == 1.0);
    }

    #[test]
    fn residual_cdf_is_a_cdf(spec in arb_spec(), b in arb_bandwidth()) {
        let series = simulate(&spec).unwrap();
        let fit = fit_least_squares(&series, &MeanFamily::scaled_abs()).unwrap();
        let kernel = KernelSpec::uniform(b);
        let mut prev = 0.0;
        for &x in &probes(&series, 41) {
            let f = residual_cdf(&fit, &kernel, x).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!(f + 1e-12 >= prev);
            prev = f;
        }
    }

    #[test]
    fn convolution_cdf_is_a_cdf(spec in arb_spec(), b in arb_bandwidth()) {
        let series = simulate(&spec).unwrap();
        let fit = fit_least_squares(&series, &MeanFamily::scaled_abs()).unwrap();
        let kernel = KernelSpec::uniform(b);
        // The estimate's support is the range of fitted mean + residual
        // anchors widened by 2b, not the data range.
        let min = |s: &[f64]| s.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = |s: &[f64]| s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = min(fit.fitted_means()) + min(fit.residuals()) - 2.0 * b - 1.0;
        let hi = max(fit.fitted_means()) + max(fit.residuals()) + 2.0 * b + 1.0;
        let xs: Vec<f64> = (0..41).map(|i| lo + (hi - lo) * i as f64 / 40.0).collect();
        let mut prev = 0.0;
        for &x in &xs {
            let f = convolution_cdf(&fit, &kernel, x).unwrap();
            prop_assert!((0.0..=1.0).contains(&f), "out of range at {x}: {f}");
            prop_assert!(f + 1e-12 >= prev, "not monotone at {x}: {f} < {prev}");
            prev = f;
        }
        prop_assert!(convolution_cdf(&fit, &kernel, lo).unwrap().abs() < 1e-12);
        prop_assert!((convolution_cdf(&fit, &kernel, hi).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_profile_agrees_with_pointwise(spec in arb_spec(), b in arb_bandwidth()) {
        let series = simulate(&spec).unwrap();
        let fit = fit_least_squares(&series, &MeanFamily::scaled_abs()).unwrap();
        let kernel = KernelSpec::uniform(b);
        let xs = probes(&series, 23);
        let batch = convolution_cdf_profile(&fit, &kernel, &xs).unwrap();
        for (&x, &fb) in xs.iter().zip(&batch) {
            let fp = convolution_cdf(&fit, &kernel, x).unwrap();
            prop_assert!((fb - fp).abs() < 1e-11, "batch {fb} vs pointwise {fp} at {x}");
        }
    }

    /// All three estimators are Lipschitz with constant at most 1/b, so a
    /// 2e-9 step moves them by well under 1e-7.
    #[test]
    fn cdfs_are_continuous_at_branch_seams(spec in arb_spec(), b in 0.05_f64..0.8) {
        let series = simulate(&spec).unwrap();
        let fit = fit_least_squares(&series, &MeanFamily::scaled_abs()).unwrap();
        let kernel = KernelSpec::uniform(b);
        let eps = 1e-9;
        let mut seams: Vec<f64> = Vec::new();
        for &e in fit.residuals().iter().take(6) {
            seams.push(e - b);
            seams.push(e + b);
        }
        for (&m, &e) in fit.fitted_means().iter().zip(fit.residuals()).take(6) {
            seams.push(m + e);
            seams.push(m + e - 2.0 * b);
            seams.push(m + e + 2.0 * b);
        }
        for &s in &seams {
            let jump = (convolution_cdf(&fit, &kernel, s + eps).unwrap()
                - convolution_cdf(&fit, &kernel, s - eps).unwrap())
                .abs();
            prop_assert!(jump < 1e-7, "seam at {s}: jump {jump}");
            let jump = (residual_cdf(&fit, &kernel, s + eps).unwrap()
                - residual_cdf(&fit, &kernel, s - eps).unwrap())
                .abs();
            prop_assert!(jump < 1e-7);
        }
    }

    #[test]
    fn resampled_series_only_rearrange_observed_values(
        spec in arb_spec(),
        block in 1_usize..20,
        seed in any::<u64>(),
    ) {
        let series = simulate(&spec).unwrap();
        prop_assume!(block <= series.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let resampled = block_resample(&series, block, &mut rng).unwrap();
        prop_assert_eq!(resampled.len(), series.len());
        for v in resampled.values() {
            prop_assert!(series.values().contains(v));
        }
    }

    #[test]
    fn resampling_is_deterministic_in_the_seed(
        spec in arb_spec(),
        block in 1_usize..10,
        seed in any::<u64>(),
    ) {
        let series = simulate(&spec).unwrap();
        prop_assume!(block <= series.len());
        let a = block_resample(&series, block, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = block_resample(&series, block, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn the_full_test_is_a_pure_function_of_its_inputs(master in any::<u64>()) {
        let spec = SimSpec::new(0.3, 0.9, 40, Hypothesis::Null, master);
        let series = simulate(&spec).unwrap();
        let config = TestConfig {
            bootstrap_iterations: 12,
            grid: GridSpec::Quantile { lower: 0.05, upper: 0.95, points: 11 },
            seed: master.wrapping_add(1),
            ..TestConfig::default()
        };
        let family = MeanFamily::scaled_abs();
        let a = run_test(&series, &family, &config).unwrap();
        let b = run_test(&series, &family, &config).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.statistic >= 0.0);
        for &s in &a.bootstrap_stats {
            prop_assert!(s >= 0.0);
        }
        // Every critical value is an order statistic of the bootstrap sample.
        for &(_, q) in &a.critical_values {
            prop_assert!(a.bootstrap_stats.contains(&q));
        }
    }
}
