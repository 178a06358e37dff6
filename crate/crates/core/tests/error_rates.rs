//! How the approximation errors shrink with the sample size.

use laplace_core::laplace::{bayes_factor, expectation_fully_exponential};
use laplace_core::model::{beta_binomial, two_treatment};
use laplace_core::montecarlo::posterior_mode_estimate;
use laplace_core::stats::ln_beta;
use laplace_core::GFunction;

/// Least-squares slope of `ln y` against `ln x`.
fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[test]
fn posterior_mean_errors_of_laplace_and_the_mode() {
    let theta = GFunction::coordinate(0, "theta");
    let (mut n, mut lap, mut mode) = (vec![], vec![], vec![]);
    for k in 1..=10 {
        let k = k as f64;
        let m = beta_binomial(2.0 * k, 8.0 * k, 1.0, 1.0).unwrap();
        let exact = (2.0 * k + 1.0) / (10.0 * k + 2.0);
        let e = expectation_fully_exponential(&m, &theta).unwrap().expectation;
        let p = posterior_mode_estimate(&m, &theta).unwrap();
        n.push(10.0 * k);
        lap.push((e / exact - 1.0).abs());
        mode.push((p / exact - 1.0).abs());
    }
    let (s_lap, s_mode) = (log_log_slope(&n, &lap), log_log_slope(&n, &mode));
    assert!((-2.6..=-1.4).contains(&s_lap), "Laplace slope {s_lap}");
    assert!((-1.4..=-0.6).contains(&s_mode), "mode slope {s_mode}");
    for i in 1..n.len() {
        assert!(lap[i] < mode[i], "k = {}", i + 1);
    }
}

#[test]
fn bayes_factor_error_is_first_order() {
    let (mut n, mut err) = (vec![], vec![]);
    for k in 1..=10 {
        let k = k as f64;
        let (m1, m2) = two_treatment(3.0 * k, 2.0 * k, 4.0 * k, k).unwrap();
        let b = bayes_factor(&m1, &m2).unwrap().bayes_factor();
        let exact = (ln_beta(3.0 * k + 1.0, 2.0 * k + 1.0) + ln_beta(4.0 * k + 1.0, k + 1.0)
            - ln_beta(7.0 * k + 1.0, 3.0 * k + 1.0))
        .exp();
        n.push(10.0 * k);
        err.push((b / exact - 1.0).abs());
    }
    let s = log_log_slope(&n, &err);
    assert!((-1.4..=-0.6).contains(&s), "slope {s}");
}
