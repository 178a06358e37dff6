//! Safeguarded Newton minimisation with numerical derivatives.
//!
//! Each iteration solves `(H + tau I) d = -g`, where `tau` starts at zero and
//! otherwise doubles from `1e-8 |H|inf` until the shifted matrix factors,
//! then backtracks along `d` under the Armijo condition. The Hessian reported
//! at the end is never ridged: a stationary point whose Hessian is not
//! positive definite is returned as such.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::linalg::{cholesky, cholesky_inverse, cholesky_solve, logdet_from_cholesky, norm_inf, symmetrize, vec_norm_inf};
use crate::numdiff::{gradient_with, hessian_with, DiffSettings};

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    /// Stop when the gradient's infinity norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub diff: DiffSettings,
    /// Take one extra Newton step after convergence when it improves
    /// stationarity. Moves the minimiser to the noise floor of the gradient.
    pub polish: bool,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, diff: DiffSettings::default(), polish: true }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub minimizer: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Hessian of the objective at the minimiser, unmodified.
    pub hessian: DMatrix<f64>,
    /// Inverse Hessian, present when the Hessian is positive definite.
    pub sigma: Option<DMatrix<f64>>,
    /// `-log det H`; NaN when the Hessian is not positive definite.
    pub log_det_sigma: f64,
    pub positive_definite: bool,
    /// Newton iterations taken before the stopping test passed.
    pub iterations: usize,
    pub converged: bool,
    /// Objective value at every accepted iterate, starting point first.
    pub trace: Vec<f64>,
}

impl OptimResult {
    pub fn grad_norm(&self) -> f64 {
        vec_norm_inf(&self.gradient)
    }

    /// The result as a hard requirement: converged with a positive-definite
    /// Hessian.
    pub fn require_regular(self, context: &str) -> Result<Self> {
        if !self.converged {
            return Err(Error::NonConvergence { iterations: self.iterations, grad_norm: self.grad_norm() });
        }
        if !self.positive_definite {
            return Err(Error::NotPositiveDefinite { context: context.to_string() });
        }
        Ok(self)
    }
}

/// Log-determinant through a Cholesky factorisation.
///
/// Returns `(log det H, true)` for a positive-definite matrix and
/// `(NaN, false)` otherwise. Rejects matrices whose asymmetry exceeds
/// `1e-10` relative to the largest entry.
pub fn cholesky_logdet(h: &DMatrix<f64>) -> Result<(f64, bool)> {
    if h.nrows() != h.ncols() {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let asym = (h - h.transpose()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if asym > 1e-10 * scale {
        return Err(Error::InvalidInput(format!("matrix is not symmetric (max |H - H^T| = {asym:e})")));
    }
    Ok(match cholesky(h) {
        Some(l) => (logdet_from_cholesky(&l), true),
        None => (f64::NAN, false),
    })
}

fn ridged_factor(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(l) = cholesky(h) {
        return Ok(l);
    }
    let hn = norm_inf(h);
    if !hn.is_finite() {
        return Err(Error::NonFinite { location: vec![] });
    }
    let mut tau = if hn > 0.0 { 1e-8 * hn } else { 1e-8 };
    for _ in 0..400 {
        let shifted = h + DMatrix::<f64>::identity(h.nrows(), h.ncols()) * tau;
        if let Some(l) = cholesky(&shifted) {
            return Ok(l);
        }
        tau *= 2.0;
    }
    Err(Error::NotPositiveDefinite { context: "ridge did not restore definiteness".into() })
}

/// Something to minimise. Plain closures get numerical derivatives;
/// [`WithJet`] supplies exact ones.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    /// Value, gradient and Hessian at `x`, if they can be computed exactly.
    fn jet(&self, _x: &[f64]) -> Option<Jet> {
        None
    }
}

impl<F: Fn(&[f64]) -> f64> Objective for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// An objective paired with its jet version.
pub struct WithJet<F, J>(pub F, pub J);

impl<F, J> Objective for WithJet<F, J>
where
    F: Fn(&[f64]) -> f64,
    J: Fn(&[f64]) -> Option<Jet>,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }

    fn jet(&self, x: &[f64]) -> Option<Jet> {
        (self.1)(x)
    }
}

/// Gradient at `x`, plus the Hessian when it came for free.
fn local<O: Objective + ?Sized>(f: &O, x: &[f64], opts: &OptimOptions) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
    if let Some(j) = f.jet(x) {
        if j.is_constant() {
            return Ok((vec![0.0; x.len()], Some(DMatrix::zeros(x.len(), x.len()))));
        }
        if !j.is_finite() {
            return Err(Error::NonFinite { location: x.to_vec() });
        }
        return Ok((j.gradient.as_slice().to_vec(), Some(symmetrize(&j.hessian))));
    }
    Ok((gradient_with(&|y: &[f64]| f.value(y), x, &opts.diff)?, None))
}

fn hessian_at<O: Objective + ?Sized>(f: &O, x: &[f64], cached: Option<DMatrix<f64>>, opts: &OptimOptions) -> Result<DMatrix<f64>> {
    match cached {
        Some(h) => Ok(h),
        None => hessian_with(&|y: &[f64]| f.value(y), x, &opts.diff),
    }
}

/// Minimise `f` from `start`.
///
/// Running out of iterations is not an error: the result comes back with
/// `converged = false`.
pub fn minimize<O: Objective + ?Sized>(f: &O, start: &[f64], opts: &OptimOptions) -> Result<OptimResult> {
    let mut x = start.to_vec();
    let mut fx = f.value(&x);
    if !fx.is_finite() {
        return Err(Error::NonFinite { location: x });
    }
    let mut trace = vec![fx];
    let mut iterations = 0;
    let (mut g, mut cached) = local(f, &x, opts)?;
    let mut converged = vec_norm_inf(&g) <= opts.tol;

    while !converged && iterations < opts.max_iter {
        let h = hessian_at(f, &x, cached.take(), opts)?;
        let l = ridged_factor(&h)?;
        let gv = DVector::from_vec(g.clone());
        let d = -cholesky_solve(&l, &gv);
        let slope = gv.dot(&d);

        let mut alpha = 1.0;
        let mut accepted = None;
        let mut saw_finite = false;
        // Near the minimum the predicted decrease drops below the rounding
        // of f, and the values can no longer judge a step. The full Newton
        // step is then kept if it does not visibly increase f.
        let floor = 64.0 * f64::EPSILON * (1.0 + fx.abs());
        if -slope <= floor {
            let xn: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
            let fnew = f.value(&xn);
            if xn != x && fnew.is_finite() && fnew <= fx + floor {
                accepted = Some((xn, fnew));
            }
        }
        while accepted.is_none() && alpha >= MIN_STEP {
            let xn: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + alpha * b).collect();
            if xn == x {
                saw_finite = true;
                break;
            }
            let fnew = f.value(&xn);
            if fnew.is_finite() {
                saw_finite = true;
                if fnew <= fx + ARMIJO_C * alpha * slope {
                    accepted = Some((xn, fnew));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((xn, fnew)) => {
                x = xn;
                fx = fnew;
                trace.push(fx);
                iterations += 1;
                (g, cached) = local(f, &x, opts)?;
                converged = vec_norm_inf(&g) <= opts.tol;
            }
            None if !saw_finite => return Err(Error::LineSearchFailed),
            // the predicted decrease is below rounding; nothing left to gain
            None => break,
        }
    }

    let mut h = hessian_at(f, &x, cached.take(), opts)?;
    if converged && opts.polish {
        if let Some(l) = cholesky(&h) {
            let d = -cholesky_solve(&l, &DVector::from_vec(g.clone()));
            let xn: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
            let fnew = f.value(&xn);
            let floor = 64.0 * f64::EPSILON * (1.0 + fx.abs());
            if fnew.is_finite() && fnew <= fx + floor {
                if let Ok((gn, hn)) = local(f, &xn, opts) {
                    if vec_norm_inf(&gn) < vec_norm_inf(&g) {
                        x = xn;
                        fx = fnew;
                        g = gn;
                        trace.push(fx);
                        h = hessian_at(f, &x, hn, opts)?;
                    }
                }
            }
        }
    }

    let (log_det_h, positive_definite) = cholesky_logdet(&h)?;
    let sigma = if positive_definite { cholesky(&h).map(|l| cholesky_inverse(&l)) } else { None };
    Ok(OptimResult {
        minimizer: x,
        value: fx,
        gradient: g,
        hessian: h,
        sigma,
        log_det_sigma: -log_det_h,
        positive_definite,
        iterations,
        converged,
        trace,
    })
}

/// Outcome of [`multistart_check`].
#[derive(Debug, Clone)]
pub struct MultistartReport {
    pub restarts: usize,
    /// Restarts that converged to a different point.
    pub disagreements: usize,
    /// Lowest objective value found by any restart.
    pub best_value: f64,
    pub best_minimizer: Vec<f64>,
}

impl MultistartReport {
    pub fn is_suspect(&self) -> bool {
        self.disagreements > 0
    }
}

/// Restart the optimiser from `restarts` random points around `reference`
/// (standard normal perturbations, seeded) and count the runs that converge
/// somewhere else. A clean report does not certify a global minimum.
pub fn multistart_check<O: Objective + ?Sized>(
    f: &O,
    reference: &OptimResult,
    restarts: usize,
    spread: f64,
    seed: u64,
    opts: &OptimOptions,
) -> MultistartReport {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut report = MultistartReport {
        restarts,
        disagreements: 0,
        best_value: reference.value,
        best_minimizer: reference.minimizer.clone(),
    };
    for _ in 0..restarts {
        let start: Vec<f64> = reference
            .minimizer
            .iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + spread * z
            })
            .collect();
        let Ok(r) = minimize(f, &start, opts) else { continue };
        if !r.converged {
            continue;
        }
        let far = r
            .minimizer
            .iter()
            .zip(&reference.minimizer)
            .any(|(a, b)| (a - b).abs() > 1e-4 * (1.0 + b.abs()));
        if far {
            report.disagreements += 1;
        }
        if r.value < report.best_value {
            report.best_value = r.value;
            report.best_minimizer = r.minimizer.clone();
        }
    }
    report
}
