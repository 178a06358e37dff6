//! Exact posterior moments for the built-in families, printed next to the
//! approximations when `g` is a bare parameter.

use laplace_core::model::Family;
use laplace_core::stats::{ln_beta, mean};
use statrs::function::gamma::ln_gamma;

use crate::modelfile::LoadedModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exact {
    pub mean: f64,
    /// Absent when the posterior variance is infinite.
    pub variance: Option<f64>,
}

fn beta(a: f64, b: f64) -> Exact {
    let s = a + b;
    Exact { mean: a / s, variance: Some(a * b / (s * s * (s + 1.0))) }
}

/// Exact mean and variance of parameter `name` under `model`.
pub fn parameter_moments(model: &LoadedModel, name: &str) -> Option<Exact> {
    let h = |k: &str| model.hyper.get(k).copied();
    match (model.family?, name) {
        (Family::BetaBinomial, "theta") => Some(beta(h("p")? + h("a")?, h("q")? + h("b")?)),
        (Family::TwoTreatment, "theta1") => Some(beta(h("n11")? + 1.0, h("n12")? + 1.0)),
        (Family::TwoTreatment, "theta2") => Some(beta(h("n21")? + 1.0, h("n22")? + 1.0)),
        (Family::GaussianMeanVar, param) => {
            // flat prior on mu and 1/sigma on sigma: mu is Student t with n-1
            // degrees of freedom, sigma^2 inverse gamma
            let x = &model.data;
            let n = x.len() as f64;
            let xbar = mean(x);
            let ss: f64 = x.iter().map(|v| (v - xbar) * (v - xbar)).sum();
            if n < 3.0 {
                return None;
            }
            let var = |v: f64| (n > 3.0).then_some(v);
            match param {
                "mu" => Some(Exact { mean: xbar, variance: var(ss / (n * (n - 3.0))) }),
                "sigma" => {
                    let m = (0.5 * ss).sqrt() * (ln_gamma(0.5 * (n - 2.0)) - ln_gamma(0.5 * (n - 1.0))).exp();
                    Some(Exact { mean: m, variance: var(ss / (n - 3.0) - m * m) })
                }
                _ => None,
            }
        }
        _ => None,
    }
}

/// Exact Bayes factor of separate against common rates, uniform priors.
pub fn two_treatment_bayes_factor(model: &LoadedModel) -> Option<f64> {
    if model.family? != Family::TwoTreatment {
        return None;
    }
    let h = |k: &str| model.hyper.get(k).copied();
    let (a, b, c, d) = (h("n11")?, h("n12")?, h("n21")?, h("n22")?);
    Some((ln_beta(a + 1.0, b + 1.0) + ln_beta(c + 1.0, d + 1.0) - ln_beta(a + c + 1.0, b + d + 1.0)).exp())
}
