//! Marginal likelihoods, Bayes factors and posterior model probabilities.
//!
//! The marginal likelihood is the integral of the kernel itself, so the
//! kernel must contain every constant of a proper prior. It is approximated
//! without the `1/n` scaling: `(m/2) log 2π + ½ log det Σ̃ - r̃(Θ̂)` with
//! `r̃ = -log(L π)`.

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::stats::log_sum_exp;

use super::{Laplace, LogLaplaceIntegral, LN_2PI};

#[derive(Debug, Clone, PartialEq)]
pub struct BayesFactorReport {
    pub log_b12: f64,
    pub log_marginals: (f64, f64),
    /// `(m₁ - m₂)/2 · log 2π`, already contained in the two marginals.
    pub dim_correction: f64,
    pub dims: (usize, usize),
    /// Posterior modes, constrained coordinates.
    pub minimizers: (Vec<f64>, Vec<f64>),
    pub log_det_sigmas: (f64, f64),
}

impl BayesFactorReport {
    pub fn bayes_factor(&self) -> f64 {
        self.log_b12.exp()
    }
}

impl Laplace {
    /// Laplace approximation of `log ∫ L(X|Θ) π(Θ) dΘ`. The reported
    /// components use `n = 1`.
    pub fn log_marginal_likelihood(&self) -> Result<LogLaplaceIntegral> {
        if !self.model().proper_prior() {
            return Err(Error::ImproperPrior { model: self.model().label().to_string() });
        }
        let mode = self.mode()?;
        Ok(LogLaplaceIntegral::from_parts(
            self.working_dim(),
            1,
            mode.log_det_sigma,
            mode.value,
            self.to_theta(&mode.minimizer),
            mode.iterations,
        ))
    }
}

pub fn log_marginal_likelihood(model: &ModelSpec) -> Result<f64> {
    Ok(Laplace::new(model)?.log_marginal_likelihood()?.log_value)
}

/// `log b₁₂ = log p(X|M₁) - log p(X|M₂)`. Both models must describe the same
/// evidence; that is not checked.
pub fn bayes_factor(m1: &ModelSpec, m2: &ModelSpec) -> Result<BayesFactorReport> {
    let a = Laplace::new(m1)?.log_marginal_likelihood()?;
    let b = Laplace::new(m2)?.log_marginal_likelihood()?;
    Ok(BayesFactorReport {
        log_b12: a.log_value - b.log_value,
        log_marginals: (a.log_value, b.log_value),
        dim_correction: 0.5 * (a.m as f64 - b.m as f64) * LN_2PI,
        dims: (a.m, b.m),
        minimizers: (a.minimizer, b.minimizer),
        log_det_sigmas: (a.log_det_sigma, b.log_det_sigma),
    })
}

fn check_priors(priors: &[f64]) -> Result<()> {
    if priors.is_empty() {
        return Err(Error::InvalidInput("at least one model is required".into()));
    }
    if priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidInput("prior probabilities must be nonnegative".into()));
    }
    let total: f64 = priors.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("prior probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// Posterior model probabilities from log marginal likelihoods.
pub fn posterior_from_log_marginals(log_marginals: &[f64], priors: &[f64]) -> Result<Vec<f64>> {
    check_priors(priors)?;
    if log_marginals.len() != priors.len() {
        return Err(Error::InvalidInput("one prior probability per model is required".into()));
    }
    let terms: Vec<f64> = log_marginals.iter().zip(priors).map(|(l, p)| l + p.ln()).collect();
    let total = log_sum_exp(&terms);
    if !total.is_finite() {
        return Err(Error::ZeroMass);
    }
    let post: Vec<f64> = terms.iter().map(|t| (t - total).exp()).collect();
    let s: f64 = post.iter().sum();
    Ok(post.into_iter().map(|p| p / s).collect())
}

/// `π(Mᵢ|X) ∝ p(X|Mᵢ) π(Mᵢ)`. Any model failing to approximate fails the
/// whole call.
pub fn model_posteriors(models: &[ModelSpec], priors: &[f64]) -> Result<Vec<f64>> {
    check_priors(priors)?;
    let lm = models.iter().map(log_marginal_likelihood).collect::<Result<Vec<f64>>>()?;
    posterior_from_log_marginals(&lm, priors)
}
