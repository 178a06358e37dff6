//! Numerical gradients and Hessians of scalar functions.
//!
//! Two schemes are available. [`DiffScheme::Central`] is the plain
//! central-difference stencil with the classical step rules
//! `h = eps^(1/3) (1 + |x|)` for gradients and `h = eps^(1/4) (1 + |x|)` for
//! Hessians. [`DiffScheme::Extrapolated`] applies Richardson extrapolation to
//! the same stencils over a geometric sequence of steps (Ridders' method),
//! which buys roughly four more correct digits; the Laplace ratios need them,
//! because moment approximations divide two nearly equal Gaussian volumes.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiffScheme {
    Central,
    #[default]
    Extrapolated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffSettings {
    pub scheme: DiffScheme,
    /// Initial relative step of the extrapolation tableau.
    pub initial_step: f64,
    /// Step contraction factor between tableau rows.
    pub contraction: f64,
    /// Maximum tableau size.
    pub tableau: usize,
}

impl Default for DiffSettings {
    fn default() -> Self {
        Self { scheme: DiffScheme::Extrapolated, initial_step: 0.1, contraction: 1.4, tableau: 10 }
    }
}

impl DiffSettings {
    pub fn central() -> Self {
        Self { scheme: DiffScheme::Central, ..Self::default() }
    }
}

/// `h_i = eps^(1/3) (1 + |x_i|)`
pub fn gradient_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.abs())
}

/// `h_i = eps^(1/4) (1 + |x_i|)`
pub fn hessian_step(x: f64) -> f64 {
    f64::EPSILON.powf(0.25) * (1.0 + x.abs())
}

fn eval<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { location: x.to_vec() })
    }
}

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(i, d) in moves {
        y[i] += d;
    }
    y
}

/// Central-difference gradient.
pub fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Result<Vec<f64>> {
    gradient_with(f, x, &DiffSettings::central())
}

/// Central-difference Hessian, symmetrised.
pub fn hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Result<DMatrix<f64>> {
    hessian_with(f, x, &DiffSettings::central())
}

pub fn gradient_with<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], s: &DiffSettings) -> Result<Vec<f64>> {
    (0..x.len())
        .map(|i| match s.scheme {
            DiffScheme::Central => {
                let h = gradient_step(x[i]);
                let fp = eval(f, &shifted(x, &[(i, h)]))?;
                let fm = eval(f, &shifted(x, &[(i, -h)]))?;
                Ok((fp - fm) / (2.0 * h))
            }
            DiffScheme::Extrapolated => {
                let scale = 1.0 + x[i].abs();
                ridders(s, |t| {
                    let fp = eval(f, &shifted(x, &[(i, t * scale)]))?;
                    let fm = eval(f, &shifted(x, &[(i, -t * scale)]))?;
                    Ok((fp - fm) / (2.0 * t * scale))
                })
            }
        })
        .collect()
}

pub fn hessian_with<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], s: &DiffSettings) -> Result<DMatrix<f64>> {
    let m = x.len();
    let f0 = eval(f, x)?;
    let mut h = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let si = 1.0 + x[i].abs();
        let diag = |hi: f64| -> Result<f64> {
            let fp = eval(f, &shifted(x, &[(i, hi)]))?;
            let fm = eval(f, &shifted(x, &[(i, -hi)]))?;
            Ok((fp - 2.0 * f0 + fm) / (hi * hi))
        };
        h[(i, i)] = match s.scheme {
            DiffScheme::Central => diag(hessian_step(x[i]))?,
            DiffScheme::Extrapolated => ridders(s, |t| diag(t * si))?,
        };
        for j in 0..i {
            let sj = 1.0 + x[j].abs();
            let cross = |hi: f64, hj: f64| -> Result<f64> {
                let fpp = eval(f, &shifted(x, &[(i, hi), (j, hj)]))?;
                let fpm = eval(f, &shifted(x, &[(i, hi), (j, -hj)]))?;
                let fmp = eval(f, &shifted(x, &[(i, -hi), (j, hj)]))?;
                let fmm = eval(f, &shifted(x, &[(i, -hi), (j, -hj)]))?;
                Ok((fpp - fpm - fmp + fmm) / (4.0 * hi * hj))
            };
            let v = match s.scheme {
                DiffScheme::Central => cross(hessian_step(x[i]), hessian_step(x[j]))?,
                DiffScheme::Extrapolated => ridders(s, |t| cross(t * si, t * sj))?,
            };
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(symmetrize(&h))
}

/// Richardson extrapolation of a difference quotient `d(t)` whose error
/// expands in even powers of `t`. The initial step shrinks until every
/// stencil point is finite, so functions with hard domain walls work as long
/// as the point itself is interior. A singularity just beyond the stencil
/// leaves the stencil finite but ruins convergence; that shows up in the
/// tableau's error estimate, and the tableau is then rebuilt from smaller
/// steps.
fn ridders<D>(s: &DiffSettings, d: D) -> Result<f64>
where
    D: Fn(f64) -> Result<f64>,
{
    let mut t0 = s.initial_step;
    let (mut best, mut best_err) = tableau(s, &d, t0)?;
    for _ in 0..RESTARTS {
        if best_err <= ACCEPT * best.abs().max(1.0) {
            break;
        }
        t0 *= 0.25;
        let (v, e) = tableau(s, &d, t0)?;
        if e < best_err {
            best = v;
            best_err = e;
        }
    }
    Ok(best)
}

const RESTARTS: usize = 6;
const ACCEPT: f64 = 1e-9;
const CONVERGED: f64 = 1e-13;

fn tableau<D>(s: &DiffSettings, d: &D, t0: f64) -> Result<(f64, f64)>
where
    D: Fn(f64) -> Result<f64>,
{
    let con2 = s.contraction * s.contraction;
    let mut t = t0;
    let mut first = None;
    for _ in 0..60 {
        match d(t) {
            Ok(v) => {
                first = Some(v);
                break;
            }
            Err(Error::NonFinite { .. }) => t *= 0.5,
            Err(e) => return Err(e),
        }
        // below this the central rule is as good as anything
        if t < 1e-7 {
            break;
        }
    }
    let Some(a00) = first else {
        return Ok((d(t)?, f64::INFINITY));
    };

    let n = s.tableau.max(2);
    let mut prev: Vec<f64> = vec![a00];
    let mut best = a00;
    let mut err = f64::INFINITY;
    for i in 1..n {
        t /= s.contraction;
        let mut row = Vec::with_capacity(i + 1);
        row.push(d(t)?);
        let mut fac = con2;
        for j in 1..=i {
            let v = (row[j - 1] * fac - prev[j - 1]) / (fac - 1.0);
            fac *= con2;
            let errt = (v - row[j - 1]).abs().max((v - prev[j - 1]).abs());
            if errt <= err {
                err = errt;
                best = v;
            }
            row.push(v);
        }
        // converged to round-off: smaller steps would only add noise
        if (row[i] - prev[i - 1]).abs() >= 2.0 * err || err <= CONVERGED * best.abs() {
            break;
        }
        prev = row;
    }
    Ok((best, err))
}
