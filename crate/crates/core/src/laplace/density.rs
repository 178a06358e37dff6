//! Marginal posterior densities and densities of scalar functions of the
//! parameters.
//!
//! At each grid value `k` the nuisance block is profiled out by a Laplace
//! approximation: `log π̂(k) = ½ log det Σ_q(k) - f(k, θ̂_q(k))`, optionally
//! plus `(q/2) log 2π` minus the Laplace log integral of the whole kernel.
//! Solves are warm-started from the neighbouring grid point, sweeping
//! outward from the point nearest the mode. A point whose solve fails is
//! kept as a gap (`valid = false`, log density NaN) rather than aborting the
//! grid.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{GFunction, ModelSpec};
use crate::numdiff::{gradient_with, hessian_with};
use crate::optimize::{cholesky_logdet, minimize};
use crate::quadrature::{log_trapezoid, normalize_grid, normalize_surface};
use crate::stats::LN_2PI;

use super::{nan_to_inf, Laplace};

pub const DEFAULT_GRID_POINTS: usize = 101;
/// Default grids span the mode plus or minus this many posterior sds.
pub const DEFAULT_GRID_SDS: f64 = 5.0;

const PENALTIES: [f64; 3] = [1e2, 1e4, 1e6];
const MULTIPLIER_ROUNDS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Divided by the trapezoid mass of the grid.
    Quadrature,
    /// Divided by the Laplace approximation of the full kernel's integral.
    LaplaceConstant,
    Unnormalized,
}

impl Normalization {
    pub fn name(&self) -> &'static str {
        match self {
            Normalization::Quadrature => "quadrature",
            Normalization::LaplaceConstant => "laplace-constant",
            Normalization::Unnormalized => "unnormalized",
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadrature" => Ok(Normalization::Quadrature),
            "laplace" | "laplace-constant" => Ok(Normalization::LaplaceConstant),
            "unnormalized" | "none" => Ok(Normalization::Unnormalized),
            other => Err(Error::InvalidInput(format!("unknown normalization `{other}`"))),
        }
    }
}

/// A density on a one-dimensional grid. `log_densities` is authoritative;
/// gaps carry NaN and `valid = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub abscissae: Vec<f64>,
    pub log_densities: Vec<f64>,
    pub valid: Vec<bool>,
    pub normalization: Normalization,
    /// `(grid index, reason)` for every gap.
    pub failures: Vec<(usize, String)>,
}

impl DensityGrid {
    pub fn new(abscissae: Vec<f64>, log_densities: Vec<f64>, normalization: Normalization) -> Result<Self> {
        if abscissae.is_empty() {
            return Err(Error::InvalidInput("empty grid".into()));
        }
        if abscissae.len() != log_densities.len() {
            return Err(Error::InvalidInput("abscissae and densities differ in length".into()));
        }
        check_increasing(&abscissae)?;
        let valid = log_densities.iter().map(|v| !v.is_nan()).collect();
        Ok(Self { abscissae, log_densities, valid, normalization, failures: Vec::new() })
    }

    /// Build from densities rather than log densities.
    pub fn from_densities(abscissae: Vec<f64>, densities: &[f64], normalization: Normalization) -> Result<Self> {
        if densities.iter().any(|d| *d < 0.0) {
            return Err(Error::InvalidInput("densities must be nonnegative".into()));
        }
        Self::new(abscissae, densities.iter().map(|d| d.ln()).collect(), normalization)
    }

    pub fn len(&self) -> usize {
        self.abscissae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissae.is_empty()
    }

    pub fn densities(&self) -> Vec<f64> {
        self.log_densities.iter().map(|v| v.exp()).collect()
    }

    /// Trapezoid mass over the valid points.
    pub fn mass(&self) -> f64 {
        log_trapezoid(&self.abscissae, &self.log_densities).exp()
    }
}

/// A density on a tensor-product grid; `log_densities[(i, j)]` sits at
/// `(x[i], y[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySurface {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub log_densities: DMatrix<f64>,
    pub normalization: Normalization,
    pub failures: Vec<((usize, usize), String)>,
}

fn check_increasing(xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid abscissae must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Indices of `xs` ordered outward from the one nearest `centre`, as
/// `(index, index it warm-starts from)`.
fn sweep(xs: &[f64], centre: f64) -> Vec<(usize, Option<usize>)> {
    let c = (0..xs.len())
        .min_by(|&a, &b| (xs[a] - centre).abs().total_cmp(&(xs[b] - centre).abs()))
        .unwrap_or(0);
    let mut order = vec![(c, None)];
    order.extend((c + 1..xs.len()).map(|i| (i, Some(i - 1))));
    order.extend((0..c).rev().map(|i| (i, Some(i + 1))));
    order
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Profile of the kernel with some parameters pinned.
struct Conditional<'a> {
    lap: &'a Laplace,
    kept: Vec<usize>,
    free: Vec<usize>,
    /// The free block as a model of its own, for its transforms.
    sub: Option<ModelSpec>,
}

impl<'a> Conditional<'a> {
    fn new(lap: &'a Laplace, kept: Vec<usize>) -> Result<Self> {
        let model = lap.model();
        let free: Vec<usize> = (0..model.dim()).filter(|i| !kept.contains(i)).collect();
        for &i in &kept {
            if model.unconstrained_index(i).is_none() {
                return Err(Error::InvalidInput(format!(
                    "`{}` is a simplex coordinate and cannot be held fixed",
                    model.parameters()[i].name
                )));
            }
        }
        let sub = if lap.unconstrained && !free.is_empty() {
            let params = free.iter().map(|&i| model.parameters()[i].clone()).collect();
            Some(ModelSpec::new("nuisance", params, 1, |_: &[f64]| 0.0)?)
        } else {
            None
        };
        Ok(Self { lap, kept, free, sub })
    }

    fn q(&self) -> usize {
        match &self.sub {
            Some(s) => s.unconstrained_dim(),
            None => self.free.len(),
        }
    }

    fn objective(&self, k: &[f64], psi: &[f64]) -> f64 {
        let model = self.lap.model();
        let mut theta = vec![0.0; model.dim()];
        for (&i, &v) in self.kept.iter().zip(k) {
            theta[i] = v;
        }
        let lj = match &self.sub {
            Some(s) => {
                let (t, lj) = s.to_constrained_with_log_jacobian(psi);
                for (&i, v) in self.free.iter().zip(t) {
                    theta[i] = v;
                }
                lj
            }
            None => {
                for (&i, &v) in self.free.iter().zip(psi) {
                    theta[i] = v;
                }
                0.0
            }
        };
        nan_to_inf(-model.log_kernel_checked(&theta) - lj)
    }

    fn start(&self) -> Result<Vec<f64>> {
        let theta = self.lap.mode_theta()?;
        let free: Vec<f64> = self.free.iter().map(|&i| theta[i]).collect();
        match &self.sub {
            Some(s) => Ok(s.to_unconstrained(&free)?.0),
            None => Ok(free),
        }
    }

    /// Unnormalised log density at `k` and the nuisance minimiser.
    fn solve(&self, k: &[f64], warm: &[f64]) -> Result<(f64, Vec<f64>)> {
        if self.free.is_empty() {
            return Ok((self.lap.model().log_kernel_checked(k), Vec::new()));
        }
        let opt = minimize(&|p: &[f64]| self.objective(k, p), warm, &self.lap.opts.optim)?
            .require_regular("Hessian of the nuisance block")?;
        Ok((0.5 * opt.log_det_sigma - opt.value, opt.minimizer))
    }
}

impl Laplace {
    /// `(q/2) log 2π - log Î`, added to an unnormalised profile to turn it
    /// into a density.
    fn laplace_constant(&self, q: usize) -> Result<f64> {
        let mode = self.mode()?;
        let d = self.working_dim() as f64;
        let log_i = 0.5 * d * LN_2PI + 0.5 * mode.log_det_sigma - mode.value;
        Ok(0.5 * q as f64 * LN_2PI - log_i)
    }

    fn parameter(&self, name: &str) -> Result<usize> {
        self.model()
            .parameter_index(name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown parameter `{name}`")))
    }

    /// Mode plus or minus five posterior sds, kept inside the domain.
    pub fn default_grid(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.parameter(name)?;
        let centre = self.mode_theta()?[i];
        let sd = self.natural_sd(i)?;
        let (dlo, dhi) = self.model().parameters()[i].domain.bounds();
        let mut lo = centre - DEFAULT_GRID_SDS * sd;
        let mut hi = centre + DEFAULT_GRID_SDS * sd;
        if lo <= dlo {
            lo = dlo + 1e-3 * (centre - dlo);
        }
        if hi >= dhi {
            hi = dhi - 1e-3 * (dhi - centre);
        }
        Ok(linspace(lo, hi, DEFAULT_GRID_POINTS))
    }

    fn check_grid(&self, i: usize, grid: &[f64]) -> Result<()> {
        check_increasing(grid)?;
        let p = &self.model().parameters()[i];
        if let Some(v) = grid.iter().find(|v| !p.domain.contains(**v)) {
            return Err(Error::OutsideDomain { parameter: p.name.clone(), value: *v });
        }
        Ok(())
    }

    /// Marginal posterior density of one parameter.
    pub fn marginal_density(&self, keep: &str, grid: Option<&[f64]>, normalization: Normalization) -> Result<DensityGrid> {
        let i = self.parameter(keep)?;
        let grid = match grid {
            Some(g) => g.to_vec(),
            None => self.default_grid(keep)?,
        };
        if grid.is_empty() {
            return Err(Error::InvalidInput("empty grid".into()));
        }
        self.check_grid(i, &grid)?;
        let cond = Conditional::new(self, vec![i])?;
        let start = cond.start()?;
        let centre = self.mode_theta()?[i];

        let mut logs = vec![f64::NAN; grid.len()];
        let mut warm: Vec<Option<Vec<f64>>> = vec![None; grid.len()];
        let mut failures = Vec::new();
        for (j, from) in sweep(&grid, centre) {
            let w = from.and_then(|f| warm[f].clone()).unwrap_or_else(|| start.clone());
            match cond.solve(&[grid[j]], &w) {
                Ok((v, psi)) => {
                    logs[j] = v;
                    warm[j] = Some(psi);
                }
                Err(e) => {
                    failures.push((j, e.to_string()));
                    warm[j] = Some(w);
                }
            }
        }
        failures.sort_by_key(|f| f.0);
        self.finish_grid(grid, logs, failures, cond.q(), normalization)
    }

    fn finish_grid(
        &self,
        grid: Vec<f64>,
        mut logs: Vec<f64>,
        failures: Vec<(usize, String)>,
        q: usize,
        normalization: Normalization,
    ) -> Result<DensityGrid> {
        if normalization == Normalization::LaplaceConstant {
            let c = self.laplace_constant(q)?;
            logs.iter_mut().for_each(|v| *v += c);
        }
        let mut out = DensityGrid::new(grid, logs, Normalization::Unnormalized)?;
        out.failures = failures;
        match normalization {
            Normalization::Quadrature => normalize_grid(&out),
            other => {
                out.normalization = other;
                Ok(out)
            }
        }
    }

    /// Joint marginal density of two parameters on the grid `x × y`.
    pub fn marginal_density_2d(
        &self,
        keep: [&str; 2],
        x: &[f64],
        y: &[f64],
        normalization: Normalization,
    ) -> Result<DensitySurface> {
        let (i, j) = (self.parameter(keep[0])?, self.parameter(keep[1])?);
        if i == j {
            return Err(Error::InvalidInput("the two kept parameters must differ".into()));
        }
        if x.is_empty() || y.is_empty() {
            return Err(Error::InvalidInput("empty grid".into()));
        }
        self.check_grid(i, x)?;
        self.check_grid(j, y)?;
        let cond = Conditional::new(self, vec![i, j])?;
        let start = cond.start()?;
        let mode = self.mode_theta()?;

        let mut logs = DMatrix::from_element(x.len(), y.len(), f64::NAN);
        let mut warm: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; y.len()]; x.len()];
        let mut failures = Vec::new();
        let ysweep = sweep(y, mode[j]);
        let cy = ysweep[0].0;
        for (a, from_a) in sweep(x, mode[i]) {
            for &(b, from_b) in &ysweep {
                let w = match from_b {
                    Some(fb) => warm[a][fb].clone(),
                    None => from_a.and_then(|fa| warm[fa][cy].clone()),
                }
                .unwrap_or_else(|| start.clone());
                match cond.solve(&[x[a], y[b]], &w) {
                    Ok((v, psi)) => {
                        logs[(a, b)] = v;
                        warm[a][b] = Some(psi);
                    }
                    Err(e) => {
                        failures.push(((a, b), e.to_string()));
                        warm[a][b] = Some(w);
                    }
                }
            }
        }
        failures.sort_by_key(|f| f.0);
        if normalization == Normalization::LaplaceConstant {
            let c = self.laplace_constant(cond.q())?;
            logs.iter_mut().for_each(|v| *v += c);
        }
        let surface =
            DensitySurface { x: x.to_vec(), y: y.to_vec(), log_densities: logs, normalization, failures };
        match normalization {
            Normalization::Quadrature => normalize_surface(&surface),
            _ => Ok(surface),
        }
    }

    /// Density of a scalar function `g` of the parameters.
    ///
    /// A coordinate projection is handled exactly by the marginal routine.
    /// Otherwise each grid value needs the minimiser of the kernel on the
    /// level set `g = k`, found by an augmented-Lagrangian sequence with
    /// penalties `1e2, 1e4, 1e6`, and the density is
    /// `½ log det Σ - ½ log(∇gᵀ Σ ∇g) - f` there.
    pub fn nonlinear_density(&self, g: &GFunction, grid: Option<&[f64]>, normalization: Normalization) -> Result<DensityGrid> {
        let theta_hat = self.mode_theta()?;
        let norm = g.gradient(&theta_hat)?.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-8) {
            return Err(Error::GradientDegenerate { norm });
        }
        if let Some(i) = g.coordinate_index() {
            let name = self.model().parameters()[i].name.clone();
            return self.marginal_density(&name, grid, normalization);
        }

        let mode = self.mode()?;
        let psi = |p: &[f64]| g.eval(&self.to_theta(p));
        let centre = psi(&mode.minimizer);
        let grid = match grid {
            Some(gr) => gr.to_vec(),
            None => {
                let dg = DVector::from_vec(gradient_with(&psi, &mode.minimizer, &self.opts.optim.diff)?);
                let sigma = mode.sigma.as_ref().expect("regular mode has Σ");
                let sd = dg.dot(&(sigma * &dg)).sqrt();
                linspace(centre - DEFAULT_GRID_SDS * sd, centre + DEFAULT_GRID_SDS * sd, DEFAULT_GRID_POINTS)
            }
        };
        if grid.is_empty() {
            return Err(Error::InvalidInput("empty grid".into()));
        }
        check_increasing(&grid)?;

        let mut logs = vec![f64::NAN; grid.len()];
        let mut warm: Vec<Option<(Vec<f64>, f64)>> = vec![None; grid.len()];
        let mut failures = Vec::new();
        for (j, from) in sweep(&grid, centre) {
            let w = from.and_then(|f| warm[f].clone()).unwrap_or_else(|| (mode.minimizer.clone(), 0.0));
            match self.level_set_density(&psi, grid[j], &w) {
                Ok((v, phi, lambda)) => {
                    logs[j] = v;
                    warm[j] = Some((phi, lambda));
                }
                Err(e) => {
                    failures.push((j, e.to_string()));
                    warm[j] = Some(w);
                }
            }
        }
        failures.sort_by_key(|f| f.0);
        self.finish_grid(grid, logs, failures, self.working_dim() - 1, normalization)
    }

    fn level_set_density<P>(&self, psi: &P, k: f64, warm: &(Vec<f64>, f64)) -> Result<(f64, Vec<f64>, f64)>
    where
        P: Fn(&[f64]) -> f64,
    {
        let f = |p: &[f64]| self.objective(p);
        let (mut phi, mut lambda) = warm.clone();
        let target = 1e-12 * (1.0 + k.abs());
        let mut residual = psi(&phi) - k;
        'outer: for (stage, &mu) in PENALTIES.iter().enumerate() {
            let last = stage + 1 == PENALTIES.len();
            for _ in 0..MULTIPLIER_ROUNDS {
                let q = |p: &[f64]| {
                    let r = psi(p) - k;
                    nan_to_inf(f(p) - lambda * r + 0.5 * mu * r * r)
                };
                let opt = minimize(&q, &phi, &self.opts.optim)?;
                phi = opt.minimizer;
                let r = psi(&phi) - k;
                lambda -= mu * r;
                let slow = r.abs() > 0.25 * residual.abs();
                residual = r;
                if residual.abs() <= target {
                    break 'outer;
                }
                if slow && !last {
                    break;
                }
            }
        }
        if !(residual.abs() < 1e-6 * (1.0 + k.abs())) {
            return Err(Error::ConstraintFailed { k, residual });
        }
        let h = hessian_with(&f, &phi, &self.opts.optim.diff)?;
        let (log_det_h, pd) = cholesky_logdet(&h)?;
        if !pd {
            return Err(Error::NotPositiveDefinite { context: format!("Hessian on the level set g = {k}") });
        }
        let sigma = crate::linalg::cholesky_inverse(&crate::linalg::cholesky(&h).expect("positive definite"));
        let dg = DVector::from_vec(gradient_with(psi, &phi, &self.opts.optim.diff)?);
        let s = dg.dot(&(&sigma * &dg));
        if !(s > 0.0) {
            return Err(Error::GradientDegenerate { norm: s.max(0.0).sqrt() });
        }
        let value = -0.5 * log_det_h - 0.5 * s.ln() - f(&phi);
        Ok((value, phi, lambda))
    }
}
