//! Posterior moments in the fully exponential form.
//!
//! `E(h) ≈ exp{ ½(log det Σ₁ - log det Σ₂) - (f₁(φ̂₁) - f₂(φ̂₂)) }` where
//! `f₂` is the negative log posterior and `f₁ = f₂ - log h`. The numerator
//! optimisation starts from the denominator's minimiser, which is usually a
//! step or two away.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar};
use crate::model::{GFunction, ModelSpec};
use crate::optimize::{minimize, WithJet};

use super::Laplace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMethod {
    /// Fully exponential form on `g` itself; needs `g > 0`.
    Direct,
    /// Derivative at zero of `s ↦ E(exp(s g))`.
    Mgf,
    /// `E(g + c) - c` for a large constant `c`.
    Shift,
}

impl MomentMethod {
    pub fn name(&self) -> &'static str {
        match self {
            MomentMethod::Direct => "direct",
            MomentMethod::Mgf => "mgf",
            MomentMethod::Shift => "shift",
        }
    }
}

impl fmt::Display for MomentMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MomentMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(MomentMethod::Direct),
            "mgf" => Ok(MomentMethod::Mgf),
            "shift" => Ok(MomentMethod::Shift),
            other => Err(Error::InvalidInput(format!("unknown moment method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub expectation: f64,
    pub variance: Option<f64>,
    pub method: MomentMethod,
    /// Numerator minimiser, constrained coordinates. For the mgf method this
    /// is the one at `s = +δ`.
    pub theta_hat_1: Vec<f64>,
    /// Posterior mode, constrained coordinates.
    pub theta_hat_2: Vec<f64>,
    /// Newton iterations for (numerator, denominator).
    pub iterations: (usize, usize),
    pub positive_definite: (bool, bool),
    pub shift: Option<f64>,
    /// Set when `variance` came out negative. The value is kept as computed.
    pub negative_variance: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    pub covariance: f64,
    pub product: MomentReport,
    pub first: MomentReport,
    pub second: MomentReport,
}

struct Ratio {
    log_ratio: f64,
    theta1: Vec<f64>,
    iterations: usize,
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

impl Laplace {
    /// `log E(h)` for `h = exp(log_h)`. `log_h_jet` is the same function on
    /// jets, or `None` where it has none.
    fn log_ratio<H>(&self, log_h: H, log_h_jet: &dyn Fn(&[Jet]) -> Option<Jet>) -> Result<Ratio>
    where
        H: Fn(&[f64]) -> f64,
    {
        let mode = self.mode()?;
        let f1 = WithJet(
            |p: &[f64]| finite_or_inf(self.objective(p) - log_h(&self.to_theta(p))),
            |p: &[f64]| {
                let (f, theta) = self.objective_jets(p)?;
                Some(f - log_h_jet(&theta)?)
            },
        );
        let opt = minimize(&f1, &mode.minimizer, &self.opts.optim)?
            .require_regular("Hessian of the numerator exponent")?;
        Ok(Ratio {
            log_ratio: 0.5 * (opt.log_det_sigma - mode.log_det_sigma) - (opt.value - mode.value),
            theta1: self.to_theta(&opt.minimizer),
            iterations: opt.iterations,
        })
    }

    fn report(&self, expectation: f64, method: MomentMethod, ratio: &Ratio, shift: Option<f64>) -> Result<MomentReport> {
        let mode = self.mode()?;
        Ok(MomentReport {
            expectation,
            variance: None,
            method,
            theta_hat_1: ratio.theta1.clone(),
            theta_hat_2: self.to_theta(&mode.minimizer),
            iterations: (ratio.iterations, mode.iterations),
            positive_definite: (true, mode.positive_definite),
            shift,
            negative_variance: false,
            warnings: Vec::new(),
        })
    }

    /// Fully exponential approximation of `E(g | X)` for positive `g`.
    pub fn expectation(&self, g: &GFunction) -> Result<MomentReport> {
        let g2 = g.eval(&self.mode_theta()?);
        if !(g2 > 0.0) {
            return Err(Error::PositivityViolation { value: g2 });
        }
        let ratio = self.log_ratio(|t| g.eval(t).ln(), &|t| Some(g.jet(t)?.ln()))?;
        self.report(ratio.log_ratio.exp(), MomentMethod::Direct, &ratio, None)
    }

    /// `E(g | X)` for a `g` that may be zero or negative, by the mgf or the
    /// shift device. `shift` overrides the default constant of the shift
    /// method and is ignored otherwise.
    pub fn expectation_nonpositive(&self, g: &GFunction, method: MomentMethod, shift: Option<f64>) -> Result<MomentReport> {
        let g2 = g.eval(&self.mode_theta()?);
        match method {
            MomentMethod::Direct => self.expectation(g),
            MomentMethod::Mgf => {
                let delta = self.opts.mgf_step * (1.0 + g2.abs());
                let up = self.log_ratio(|t| delta * g.eval(t), &|t| Some(g.jet(t)? * delta))?;
                let down = self.log_ratio(|t| -delta * g.eval(t), &|t| Some(g.jet(t)? * -delta))?;
                let e = (up.log_ratio.exp_m1() - down.log_ratio.exp_m1()) / (2.0 * delta);
                let mut r = self.report(e, MomentMethod::Mgf, &up, None)?;
                r.iterations.0 = r.iterations.0.max(down.iterations);
                Ok(r)
            }
            MomentMethod::Shift => {
                let c = shift.unwrap_or(self.opts.shift_factor * (1.0 + g2.abs()));
                if !(c.is_finite() && c > 0.0) {
                    return Err(Error::InvalidInput(format!("shift constant must be positive, got {c}")));
                }
                if g2 + c <= 0.0 {
                    return Err(Error::ShiftInsufficient { shift: c });
                }
                let hit = AtomicBool::new(false);
                // log((g + c) / c); the dropped log c cancels in the ratio
                let ratio = self.log_ratio(
                    |t| {
                        let v = g.eval(t);
                        if v + c <= 0.0 {
                            hit.store(true, Ordering::Relaxed);
                        }
                        (v / c).ln_1p()
                    },
                    &|t| Some((g.jet(t)? / c).ln_1p()),
                )?;
                if hit.load(Ordering::Relaxed) {
                    return Err(Error::ShiftInsufficient { shift: c });
                }
                self.report(c * ratio.log_ratio.exp_m1(), MomentMethod::Shift, &ratio, Some(c))
            }
        }
    }

    /// Direct method when `g` is positive at the mode, mgf otherwise.
    pub fn expectation_auto(&self, g: &GFunction) -> Result<MomentReport> {
        if g.eval(&self.mode_theta()?) > 0.0 {
            self.expectation(g)
        } else {
            self.expectation_nonpositive(g, MomentMethod::Mgf, None)
        }
    }

    /// `Cov(g₁, g₂) ≈ E(g₁g₂) - E(g₁)E(g₂)`, each expectation approximated
    /// on its own.
    pub fn covariance(&self, g1: &GFunction, g2: &GFunction) -> Result<CovarianceReport> {
        let product = self.expectation_auto(&g1.product(g2))?;
        let first = self.expectation_auto(g1)?;
        let second = self.expectation_auto(g2)?;
        Ok(CovarianceReport {
            covariance: product.expectation - first.expectation * second.expectation,
            product,
            first,
            second,
        })
    }

    /// `Var(g) ≈ E(g²) - E(g)²`. A negative result is flagged, not clamped.
    pub fn variance(&self, g: &GFunction) -> Result<MomentReport> {
        let cov = self.covariance(g, g)?;
        let mut report = cov.first;
        report.variance = Some(cov.covariance);
        if cov.covariance < 0.0 {
            report.negative_variance = true;
            report.warnings.push(format!(
                "approximate variance is negative ({:e}); E(g^2) and E(g) were approximated separately",
                cov.covariance
            ));
        }
        Ok(report)
    }
}

pub fn expectation_fully_exponential(model: &ModelSpec, g: &GFunction) -> Result<MomentReport> {
    Laplace::new(model)?.expectation(g)
}

pub fn expectation_nonpositive(
    model: &ModelSpec,
    g: &GFunction,
    method: MomentMethod,
    shift: Option<f64>,
) -> Result<MomentReport> {
    Laplace::new(model)?.expectation_nonpositive(g, method, shift)
}

pub fn variance(model: &ModelSpec, g: &GFunction) -> Result<MomentReport> {
    Laplace::new(model)?.variance(g)
}

pub fn covariance(model: &ModelSpec, g1: &GFunction, g2: &GFunction) -> Result<CovarianceReport> {
    Laplace::new(model)?.covariance(g1, g2)
}
