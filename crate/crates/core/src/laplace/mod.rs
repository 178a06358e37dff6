//! Laplace approximations of posterior integrals and everything built on
//! them.
//!
//! For a kernel `exp(-f(t))` over `m` coordinates with minimiser `t̂` and
//! `Σ = (∇²f(t̂))^-1`,
//!
//! ```text
//! log ∫ exp(-f) ≈ (m/2) log 2π + ½ log det Σ - f(t̂)
//! ```
//!
//! Writing `f = n r` gives the familiar `(2π/n)^(m/2) det(Σ_r)^½ exp(-n r(t̂))`.
//! All derived quantities (moments, densities, marginal likelihoods) are sums
//! and differences of such logs.
//!
//! # Working coordinates
//!
//! The engine either optimises in the model's natural coordinates (kernel
//! set to `-inf` outside the domain) or in unconstrained coordinates with the
//! Jacobian folded into the kernel. The two give different approximations;
//! [`Space::Auto`] picks natural coordinates unless the model has a simplex
//! block, which only the unconstrained map can handle.

mod bayes;
mod density;
mod mixture;
mod moments;

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::model::{Domain, ModelSpec};
use crate::optimize::{minimize, OptimOptions, OptimResult, WithJet};
use crate::stats::LN_2PI;

pub use bayes::{bayes_factor, log_marginal_likelihood, model_posteriors, posterior_from_log_marginals, BayesFactorReport};
pub use density::{DensityGrid, DensitySurface, Normalization, DEFAULT_GRID_POINTS, DEFAULT_GRID_SDS};
pub use mixture::{mixture_select, MixtureFit, MixtureSelection};
pub use moments::{
    covariance, expectation_fully_exponential, expectation_nonpositive, variance, CovarianceReport, MomentMethod,
    MomentReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Space {
    /// Natural coordinates unless the model has a simplex block.
    #[default]
    Auto,
    Natural,
    Unconstrained,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceOptions {
    pub space: Space,
    pub optim: OptimOptions,
    /// Relative step of the mgf derivative: `δ = mgf_step (1 + |g(θ̂)|)`.
    pub mgf_step: f64,
    /// Default shift: `c = shift_factor (1 + |g(θ̂)|)`.
    pub shift_factor: f64,
    /// Use exact derivatives when the model and `g` provide jets. When off,
    /// every gradient and Hessian comes from finite differences.
    pub exact_derivatives: bool,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        Self {
            space: Space::Auto,
            optim: OptimOptions::default(),
            mgf_step: 1e-4,
            shift_factor: 10.0,
            exact_derivatives: true,
        }
    }
}

/// The log of a Laplace approximation, with its ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLaplaceIntegral {
    pub log_value: f64,
    pub m: usize,
    pub n: usize,
    /// `log det Σ_r`, with `Σ_r` the inverse Hessian of `r` (not of `n r`).
    pub log_det_sigma: f64,
    pub n_times_r_min: f64,
    pub minimizer: Vec<f64>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl LogLaplaceIntegral {
    fn from_parts(m: usize, n: usize, log_det_sigma: f64, n_times_r_min: f64, minimizer: Vec<f64>, iterations: usize) -> Self {
        let (mf, nf) = (m as f64, n as f64);
        let log_value = 0.5 * mf * (LN_2PI - nf.ln()) + 0.5 * log_det_sigma - n_times_r_min;
        let mut warnings = Vec::new();
        if log_det_sigma < -30.0 {
            warnings.push(format!("log det Σ = {log_det_sigma:.3}: the Gaussian approximation is nearly degenerate"));
        }
        Self { log_value, m, n, log_det_sigma, n_times_r_min, minimizer, iterations, warnings }
    }
}

/// Laplace approximation of `∫ exp(-n r(φ)) dφ` over `R^m`.
pub fn log_laplace_integral<R>(r: R, n: usize, m: usize, warm_start: Option<&[f64]>) -> Result<LogLaplaceIntegral>
where
    R: Fn(&[f64]) -> f64,
{
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let zero = vec![0.0; m];
    let start = warm_start.unwrap_or(&zero);
    if start.len() != m {
        return Err(Error::InvalidInput(format!("start has {} coordinates, expected {m}", start.len())));
    }
    let opt = minimize(&|p: &[f64]| nan_to_inf(r(p)), start, &OptimOptions::default())?
        .require_regular("Hessian of r at its minimiser")?;
    let nf = n as f64;
    Ok(LogLaplaceIntegral::from_parts(m, n, opt.log_det_sigma, nf * opt.value, opt.minimizer, opt.iterations))
}

#[inline]
pub(crate) fn nan_to_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Laplace machinery bound to one model. The posterior mode is computed once
/// and reused by every approximation that needs it.
#[derive(Debug)]
pub struct Laplace {
    model: ModelSpec,
    opts: LaplaceOptions,
    unconstrained: bool,
    mode: OnceLock<OptimResult>,
}

impl Clone for Laplace {
    fn clone(&self) -> Self {
        Self { model: self.model.clone(), opts: self.opts, unconstrained: self.unconstrained, mode: self.mode.clone() }
    }
}

impl Laplace {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        Self::with_options(model, LaplaceOptions::default())
    }

    pub fn with_options(model: &ModelSpec, opts: LaplaceOptions) -> Result<Self> {
        let unconstrained = match opts.space {
            Space::Auto => model.has_simplex(),
            Space::Unconstrained => true,
            Space::Natural if model.has_simplex() => {
                return Err(Error::InvalidInput("simplex parameters need unconstrained coordinates".into()))
            }
            Space::Natural => false,
        };
        Ok(Self { model: model.clone(), opts, unconstrained, mode: OnceLock::new() })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn options(&self) -> &LaplaceOptions {
        &self.opts
    }

    /// The coordinates actually used, never `Auto`.
    pub fn space(&self) -> Space {
        if self.unconstrained {
            Space::Unconstrained
        } else {
            Space::Natural
        }
    }

    pub fn working_dim(&self) -> usize {
        if self.unconstrained {
            self.model.unconstrained_dim()
        } else {
            self.model.dim()
        }
    }

    pub fn to_working(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if self.unconstrained {
            Ok(self.model.to_unconstrained(theta)?.0)
        } else {
            if !self.model.contains(theta) {
                self.model.to_unconstrained(theta)?;
            }
            Ok(theta.to_vec())
        }
    }

    pub fn to_theta(&self, phi: &[f64]) -> Vec<f64> {
        if self.unconstrained {
            self.model.to_constrained(phi)
        } else {
            phi.to_vec()
        }
    }

    /// `-log kernel` in working coordinates, Jacobian included; `+inf`
    /// wherever the kernel vanishes or is undefined.
    pub fn objective(&self, phi: &[f64]) -> f64 {
        let v = if self.unconstrained {
            let (theta, lj) = self.model.to_constrained_with_log_jacobian(phi);
            -self.model.log_kernel(&theta) - lj
        } else {
            -self.model.log_kernel_checked(phi)
        };
        nan_to_inf(v)
    }

    /// [`Laplace::objective`] and `θ` as jets over the working coordinates,
    /// when the model's kernel runs on jets.
    pub(crate) fn objective_jets(&self, phi: &[f64]) -> Option<(Jet, Vec<Jet>)> {
        if !(self.opts.exact_derivatives && self.model.has_exact_derivatives()) {
            return None;
        }
        let vars = Jet::variables(phi);
        if self.unconstrained {
            let (theta, lj) = self.model.to_constrained_generic(&vars);
            let k = self.model.log_kernel_jet(&theta)?;
            Some((-(k + lj), theta))
        } else {
            let k = self.model.log_kernel_jet(&vars)?;
            Some((-k, vars))
        }
    }

    /// Minimiser of [`Laplace::objective`], with a positive-definite Hessian.
    pub fn mode(&self) -> Result<&OptimResult> {
        if let Some(m) = self.mode.get() {
            return Ok(m);
        }
        let start = self.to_working(&self.model.default_start())?;
        let objective = WithJet(|p: &[f64]| self.objective(p), |p: &[f64]| Some(self.objective_jets(p)?.0));
        let opt = minimize(&objective, &start, &self.opts.optim)?
            .require_regular("Hessian of -log posterior at the mode")?;
        let _ = self.mode.set(opt);
        Ok(self.mode.get().expect("mode was just set"))
    }

    /// Posterior mode in constrained coordinates.
    pub fn mode_theta(&self) -> Result<Vec<f64>> {
        Ok(self.to_theta(&self.mode()?.minimizer))
    }

    /// Laplace approximation of the log of the kernel's integral.
    pub fn log_integral(&self) -> Result<LogLaplaceIntegral> {
        let mode = self.mode()?;
        let m = self.working_dim();
        let n = self.model.sample_size();
        let log_det_sigma_r = mode.log_det_sigma + m as f64 * (n as f64).ln();
        Ok(LogLaplaceIntegral::from_parts(m, n, log_det_sigma_r, mode.value, mode.minimizer.clone(), mode.iterations))
    }

    /// Posterior standard deviation of parameter `index` in natural units,
    /// from the Gaussian approximation at the mode.
    pub(crate) fn natural_sd(&self, index: usize) -> Result<f64> {
        let mode = self.mode()?;
        let sigma = mode.sigma.as_ref().expect("regular mode has Σ");
        if !self.unconstrained {
            return Ok(sigma[(index, index)].sqrt());
        }
        let p = &self.model.parameters()[index];
        let j = self
            .model
            .unconstrained_index(index)
            .ok_or_else(|| Error::InvalidInput(format!("`{}` is a simplex coordinate", p.name)))?;
        let theta = self.to_theta(&mode.minimizer)[index];
        let scale = match p.domain {
            Domain::Real => 1.0,
            Domain::Positive => theta,
            Domain::UnitInterval => theta * (1.0 - theta),
            Domain::Simplex { .. } => unreachable!(),
        };
        Ok(sigma[(j, j)].sqrt() * scale)
    }
}
