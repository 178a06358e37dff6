use laplace_core::laplace::expectation_fully_exponential;
use laplace_core::model::{beta_binomial, gaussian_mean_var, gaussian_mixture, two_treatment, MixturePrior};
use laplace_core::montecarlo::{importance_expectation, importance_expectation_with, posterior_mode_estimate, McOptions};
use laplace_core::GFunction;

#[test]
fn two_in_ten_mean_within_three_standard_errors() {
    let m = beta_binomial(2.0, 8.0, 1.0, 1.0).unwrap();
    let e = importance_expectation(&m, &GFunction::coordinate(0, "theta"), 100_000, 7).unwrap();
    assert!((e.mean - 0.25).abs() <= 3.0 * e.standard_error, "{e:?}");
    assert!(e.standard_error > 0.0 && e.effective_sample_size <= 100_000.0);
}

#[test]
fn two_standard_error_coverage() {
    let m = beta_binomial(2.0, 8.0, 1.0, 1.0).unwrap();
    let g = GFunction::coordinate(0, "theta");
    let hits = (0..200u64)
        .filter(|&seed| {
            let e = importance_expectation(&m, &g, 2000, seed).unwrap();
            (e.mean - 0.25).abs() <= 2.0 * e.standard_error
        })
        .count();
    let coverage = hits as f64 / 200.0;
    assert!(coverage >= 0.88, "coverage {coverage}");
}

#[test]
fn same_seed_same_bits() {
    let m = gaussian_mean_var(&[0.3, 1.2, -0.4, 2.2, 0.9, 1.7, 0.1, 1.1]).unwrap();
    let g = GFunction::coordinate(1, "sigma");
    let a = importance_expectation(&m, &g, 5000, 11).unwrap();
    let b = importance_expectation(&m, &g, 5000, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    let c = importance_expectation(&m, &g, 5000, 12).unwrap();
    assert_ne!(a.mean.to_bits(), c.mean.to_bits());
    let t = importance_expectation_with(&m, &g, 5000, 11, &McOptions { threads: 4, ..Default::default() }).unwrap();
    assert_eq!(a, t);
}

fn two_clusters() -> Vec<f64> {
    (0..50).map(|i| if i % 2 == 0 { -5.0 } else { 5.0 } - 0.1 + 0.2 * (i / 2) as f64 / 24.0).collect()
}

// At 10^5 draws the standard error is a few parts in 10^4, finer than the
// Laplace error on very small samples: eight Gaussian observations leave
// about 4% in E(σ), and the two-treatment counts below at a tenth of their
// size leave 2.4% in E(θ1). Those cases get larger samples here.
#[test]
fn laplace_agrees_with_sampling_on_the_builtins() {
    let (m1, m2) = two_treatment(30.0, 20.0, 40.0, 10.0).unwrap();
    let gauss: Vec<f64> = (1..=50).map(|i| 1.5 + 2.0 * (i as f64 * 1.7).sin()).collect();
    let clusters = two_clusters();
    let cases = [
        (beta_binomial(2.0, 8.0, 1.0, 1.0).unwrap(), GFunction::coordinate(0, "theta")),
        (gaussian_mean_var(&gauss).unwrap(), GFunction::coordinate(1, "sigma")),
        (m1, GFunction::coordinate(0, "theta1")),
        (m2, GFunction::coordinate(0, "theta")),
        (gaussian_mixture(&clusters, 2, &MixturePrior::from_data(&clusters).unwrap()).unwrap(), GFunction::coordinate(3, "mu2")),
    ];
    for (m, g) in &cases {
        let lap = expectation_fully_exponential(m, g).unwrap().expectation;
        let mc = importance_expectation(m, g, 100_000, 7).unwrap();
        assert!((lap - mc.mean).abs() <= 3.0 * mc.standard_error, "{}: {lap} vs {mc:?}", m.label());
    }
}

#[test]
fn small_counts_gap_is_the_laplace_error() {
    let (m1, _) = two_treatment(3.0, 2.0, 4.0, 1.0).unwrap();
    let g = GFunction::coordinate(0, "theta1");
    let lap = expectation_fully_exponential(&m1, &g).unwrap().expectation;
    let mc = importance_expectation(&m1, &g, 100_000, 7).unwrap();
    // θ1 is Beta(4, 3) a posteriori with mean 4/7
    assert!((mc.mean - 4.0 / 7.0).abs() <= 3.0 * mc.standard_error);
    let s: f64 = 4.0;
    let r: f64 = 3.0;
    let closed = (0.5
        * ((2.0 * s + 1.0) * s.ln() + (2.0 * s + 2.0 * r - 1.0) * (s + r - 2.0).ln()
            - (2.0 * s - 1.0) * (s - 1.0).ln()
            - (2.0 * s + 2.0 * r + 1.0) * (s + r - 1.0).ln()))
    .exp();
    assert!((lap / closed - 1.0).abs() < 1e-10);
}

#[test]
fn mode_estimate_is_the_plug_in_value() {
    let m = beta_binomial(2.0, 8.0, 1.0, 1.0).unwrap();
    let p = posterior_mode_estimate(&m, &GFunction::coordinate(0, "theta")).unwrap();
    assert!((p - 0.2).abs() < 1e-12);
    assert_eq!(posterior_mode_estimate(&m, &GFunction::constant(2.5)).unwrap(), 2.5);
}
