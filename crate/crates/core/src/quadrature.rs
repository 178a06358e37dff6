//! Adaptive Simpson integration and trapezoid rules for density grids.
//!
//! Infinite ranges are not accepted; map them onto a finite interval first,
//! e.g. `x = tanh(u)` with the factor `1 - tanh(u)^2`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::laplace::{DensityGrid, DensitySurface, Normalization};

pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_ABS_TOL: f64 = 1e-12;
const MAX_DEPTH: u32 = 30;
const MIN_DEPTH: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
    pub converged: bool,
}

struct Simpson<'a, F> {
    f: &'a F,
    evaluations: usize,
    error: f64,
    exhausted: bool,
}

impl<F: Fn(f64) -> f64> Simpson<'_, F> {
    fn eval(&mut self, x: f64) -> Result<f64> {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { location: vec![x] })
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(&mut self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let flm = self.eval(lm)?;
        let frm = self.eval(rm)?;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        let tiny = lm <= a || rm >= b;
        // Coarse and fine rules can agree by accident on a wide interval, so
        // shallow intervals are only accepted when the agreement is exact
        // (polynomials up to cubics).
        let exact = delta.abs() <= 64.0 * f64::EPSILON * (left.abs() + right.abs());
        let accept = if depth < MIN_DEPTH { exact } else { delta.abs() <= 15.0 * tol };
        if accept || depth >= MAX_DEPTH || tiny {
            if delta.abs() > 15.0 * tol {
                self.exhausted = true;
            }
            self.error += delta.abs() / 15.0;
            return Ok(left + right + delta / 15.0);
        }
        Ok(self.refine(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?
            + self.refine(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?)
    }
}

/// Adaptive Simpson rule on `[a, b]`. Running out of recursion depth is
/// reported through `converged`, not as an error.
pub fn integrate_1d<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<QuadratureResult> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::InvalidInput(format!("integration range [{a}, {b}] must be finite and increasing")));
    }
    if !(rel_tol >= 0.0 && abs_tol >= 0.0 && rel_tol + abs_tol > 0.0) {
        return Err(Error::InvalidInput("tolerances must be nonnegative and not both zero".into()));
    }
    let mut s = Simpson { f: &f, evaluations: 0, error: 0.0, exhausted: false };
    let m = 0.5 * (a + b);
    let fa = s.eval(a)?;
    let fm = s.eval(m)?;
    let fb = s.eval(b)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = abs_tol.max(rel_tol * whole.abs());
    let value = s.refine(a, b, fa, fm, fb, whole, tol, 1)?;
    let converged = !s.exhausted && s.error <= abs_tol.max(rel_tol * value.abs());
    Ok(QuadratureResult { value, abs_error_estimate: s.error, evaluations: s.evaluations, converged })
}

/// [`integrate_1d`] with the default tolerances.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<QuadratureResult> {
    integrate_1d(f, a, b, DEFAULT_REL_TOL, DEFAULT_ABS_TOL)
}

pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Log of the trapezoid integral of `exp(log_ys)`. Points whose value is NaN
/// are skipped, so the rule bridges gaps.
pub fn log_trapezoid(xs: &[f64], log_ys: &[f64]) -> f64 {
    let (px, py): (Vec<f64>, Vec<f64>) = xs.iter().zip(log_ys).filter(|(_, y)| !y.is_nan()).map(|(x, y)| (*x, *y)).unzip();
    let top = py.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    let ys: Vec<f64> = py.iter().map(|y| (y - top).exp()).collect();
    top + trapezoid(&px, &ys).ln()
}

/// Log of the tensor-product trapezoid integral of `exp(log_z)`, where
/// `log_z[(i, j)]` sits at `(xs[i], ys[j])`. NaN cells count as zero.
pub fn log_trapezoid_2d(xs: &[f64], ys: &[f64], log_z: &DMatrix<f64>) -> f64 {
    let top = log_z.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    let wx = trapezoid_weights(xs);
    let wy = trapezoid_weights(ys);
    let mut total = 0.0;
    for (i, wi) in wx.iter().enumerate() {
        for (j, wj) in wy.iter().enumerate() {
            let v = log_z[(i, j)];
            if !v.is_nan() {
                total += wi * wj * (v - top).exp();
            }
        }
    }
    top + total.ln()
}

fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        let h = 0.5 * (xs[i] - xs[i - 1]);
        w[i - 1] += h;
        w[i] += h;
    }
    w
}

/// Rescale a grid so its trapezoid mass is one.
pub fn normalize_grid(grid: &DensityGrid) -> Result<DensityGrid> {
    let valid = grid.valid.iter().filter(|v| **v).count();
    if valid < 2 {
        return Err(Error::InvalidInput("normalisation needs at least two valid grid points".into()));
    }
    if grid.log_densities.iter().zip(&grid.valid).any(|(v, ok)| *ok && *v == f64::INFINITY) {
        return Err(Error::InvalidInput("grid holds an infinite density".into()));
    }
    let log_mass = log_trapezoid(&grid.abscissae, &grid.log_densities);
    if !log_mass.is_finite() {
        return Err(Error::ZeroMass);
    }
    let mut out = grid.clone();
    for v in out.log_densities.iter_mut() {
        *v -= log_mass;
    }
    out.normalization = Normalization::Quadrature;
    Ok(out)
}

pub fn normalize_surface(surface: &DensitySurface) -> Result<DensitySurface> {
    let log_mass = log_trapezoid_2d(&surface.x, &surface.y, &surface.log_densities);
    if !log_mass.is_finite() {
        return Err(Error::ZeroMass);
    }
    let mut out = surface.clone();
    out.log_densities.iter_mut().for_each(|v| *v -= log_mass);
    out.normalization = Normalization::Quadrature;
    Ok(out)
}
