//! Posterior kernels, parameter domains and the maps between constrained
//! and unconstrained coordinates.
//!
//! A [`ModelSpec`] is an unnormalised log posterior `log(L(X|θ) π(θ))` over
//! named parameters, each living on a declared [`Domain`]. Every domain has a
//! bijection onto unbounded space (identity, log, logit, stick-breaking), and
//! the log absolute Jacobian of the inverse map is reported so that a kernel
//! moved to unconstrained space integrates to the same value.
//!
//! Improper priors are allowed (the Gaussian example uses `π ∝ 1/σ`);
//! whether the posterior is proper is left to the caller. Only models whose
//! kernel carries every normalising constant of the prior should set
//! `proper_prior`, since marginal likelihoods are meaningless otherwise.

mod builtin;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar};
use crate::numdiff::{gradient_with, DiffSettings};

pub use builtin::{
    beta_binomial, builtin_model, gaussian_mean_var, gaussian_mixture, two_treatment, Builtin, Family,
    quantile_start, MixturePrior,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Real,
    Positive,
    UnitInterval,
    /// One coordinate of a probability vector. Consecutive parameters with
    /// the same `block` form the vector; a block of `K` coordinates maps to
    /// `K - 1` unconstrained ones by stick-breaking.
    Simplex { block: usize },
}

impl Domain {
    pub fn name(&self) -> &'static str {
        match self {
            Domain::Real => "real",
            Domain::Positive => "positive",
            Domain::UnitInterval => "unit",
            Domain::Simplex { .. } => "simplex",
        }
    }

    /// Open bounds of a scalar domain.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Domain::Real => (f64::NEG_INFINITY, f64::INFINITY),
            Domain::Positive => (0.0, f64::INFINITY),
            Domain::UnitInterval | Domain::Simplex { .. } => (0.0, 1.0),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        let (lo, hi) = self.bounds();
        v > lo && v < hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDescriptor {
    pub name: String,
    pub domain: Domain,
}

impl ParameterDescriptor {
    pub fn new(name: impl Into<String>, domain: Domain) -> Self {
        Self { name: name.into(), domain }
    }
}

pub type LogKernel = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type JetKernel = Arc<dyn Fn(&[Jet]) -> Jet + Send + Sync>;

/// A kernel written once for plain numbers and for jets, which gives the
/// optimiser exact derivatives.
pub trait GenericKernel: Send + Sync + 'static {
    fn log_kernel<S: Scalar>(&self, theta: &[S]) -> S;
}

fn logistic<S: Scalar>(x: S) -> S {
    if x.value() >= 0.0 {
        ((-x).exp() + 1.0).recip()
    } else {
        let e = x.exp();
        e.clone() / (e + 1.0)
    }
}

fn softplus<S: Scalar>(x: S) -> S {
    if x.value() > 0.0 {
        x.clone() + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(logistic(x) (1 - logistic(x)))`
fn log_logistic_jacobian<S: Scalar>(x: S) -> S {
    -softplus(x.clone()) - softplus(-x)
}

#[derive(Debug, Clone, Copy)]
enum Block {
    Scalar { index: usize, domain: Domain },
    Simplex { start: usize, len: usize },
}

/// An unnormalised posterior over named, domain-constrained parameters.
#[derive(Clone)]
pub struct ModelSpec {
    label: String,
    parameters: Vec<ParameterDescriptor>,
    blocks: Vec<Block>,
    log_kernel: LogKernel,
    jet_kernel: Option<JetKernel>,
    sample_size: usize,
    proper_prior: bool,
    start: Option<Vec<f64>>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("label", &self.label)
            .field("parameters", &self.parameters)
            .field("sample_size", &self.sample_size)
            .field("proper_prior", &self.proper_prior)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn new<F>(
        label: impl Into<String>,
        parameters: Vec<ParameterDescriptor>,
        sample_size: usize,
        log_kernel: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if parameters.is_empty() {
            return Err(Error::InvalidInput("a model needs at least one parameter".into()));
        }
        if sample_size == 0 {
            return Err(Error::InvalidInput("sample size must be at least 1".into()));
        }
        for (i, p) in parameters.iter().enumerate() {
            if parameters[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::InvalidInput(format!("duplicate parameter `{}`", p.name)));
            }
        }
        let mut blocks = Vec::new();
        let mut i = 0;
        while i < parameters.len() {
            match parameters[i].domain {
                Domain::Simplex { block } => {
                    let start = i;
                    while i < parameters.len() && parameters[i].domain == (Domain::Simplex { block }) {
                        i += 1;
                    }
                    if i - start < 2 {
                        return Err(Error::InvalidInput(format!(
                            "simplex block {block} needs at least two coordinates"
                        )));
                    }
                    if blocks.iter().any(|b| matches!(b, Block::Simplex { start: s, .. } if parameters[*s].domain == parameters[start].domain)) {
                        return Err(Error::InvalidInput(format!("simplex block {block} is not contiguous")));
                    }
                    blocks.push(Block::Simplex { start, len: i - start });
                }
                domain => {
                    blocks.push(Block::Scalar { index: i, domain });
                    i += 1;
                }
            }
        }
        Ok(Self {
            label: label.into(),
            parameters,
            blocks,
            log_kernel: Arc::new(log_kernel),
            jet_kernel: None,
            sample_size,
            proper_prior: false,
            start: None,
        })
    }

    /// A model whose kernel also runs on jets, so that the Laplace machinery
    /// works with exact derivatives.
    pub fn from_kernel<K: GenericKernel>(
        label: impl Into<String>,
        parameters: Vec<ParameterDescriptor>,
        sample_size: usize,
        kernel: K,
    ) -> Result<Self> {
        let k = Arc::new(kernel);
        let kj = k.clone();
        let mut m = Self::new(label, parameters, sample_size, move |t: &[f64]| k.log_kernel(t))?;
        m.jet_kernel = Some(Arc::new(move |t: &[Jet]| kj.log_kernel(t)));
        Ok(m)
    }

    /// Attach a jet version of the kernel. It must compute the same function
    /// as the plain kernel.
    pub fn with_jet_kernel<F>(mut self, f: F) -> Self
    where
        F: Fn(&[Jet]) -> Jet + Send + Sync + 'static,
    {
        self.jet_kernel = Some(Arc::new(f));
        self
    }

    /// The kernel plus a constant, i.e. the posterior kernel multiplied by
    /// `exp(log_c)`. Every normalised quantity is unchanged.
    pub fn scaled(&self, log_c: f64) -> ModelSpec {
        let mut m = self.clone();
        let k = self.log_kernel.clone();
        m.log_kernel = Arc::new(move |t: &[f64]| k(t) + log_c);
        if let Some(j) = self.jet_kernel.clone() {
            m.jet_kernel = Some(Arc::new(move |t: &[Jet]| j(t) + log_c));
        }
        m.proper_prior = false;
        m
    }

    /// Declare that the kernel includes every normalising constant of a
    /// proper prior.
    pub fn with_proper_prior(mut self, proper: bool) -> Self {
        self.proper_prior = proper;
        self
    }

    /// Constrained starting point for optimisation.
    pub fn with_start(mut self, start: Vec<f64>) -> Result<Self> {
        self.check_interior(&start)?;
        self.start = Some(start);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn parameters(&self) -> &[ParameterDescriptor] {
        &self.parameters
    }

    pub fn parameter_index(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p.name == name)
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.parameters.iter().map(|p| p.name.clone()).collect()
    }

    /// Number of constrained coordinates.
    pub fn dim(&self) -> usize {
        self.parameters.len()
    }

    /// Number of unconstrained coordinates.
    pub fn unconstrained_dim(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| match b {
                Block::Scalar { .. } => 1,
                Block::Simplex { len, .. } => len - 1,
            })
            .sum()
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn proper_prior(&self) -> bool {
        self.proper_prior
    }

    pub fn has_simplex(&self) -> bool {
        self.blocks.iter().any(|b| matches!(b, Block::Simplex { .. }))
    }

    /// The kernel itself, without a domain check.
    pub fn log_kernel(&self, theta: &[f64]) -> f64 {
        (self.log_kernel)(theta)
    }

    /// The kernel on jets, when the model provides one.
    pub fn log_kernel_jet(&self, theta: &[Jet]) -> Option<Jet> {
        self.jet_kernel.as_ref().map(|k| k(theta))
    }

    pub fn has_exact_derivatives(&self) -> bool {
        self.jet_kernel.is_some()
    }

    /// The kernel, or `-inf` outside the declared domain.
    pub fn log_kernel_checked(&self, theta: &[f64]) -> f64 {
        if self.contains(theta) {
            (self.log_kernel)(theta)
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        self.check_interior(theta).is_ok()
    }

    fn check_interior(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.dim(),
                theta.len()
            )));
        }
        for (p, &v) in self.parameters.iter().zip(theta) {
            if !p.domain.contains(v) {
                return Err(Error::OutsideDomain { parameter: p.name.clone(), value: v });
            }
        }
        for b in &self.blocks {
            if let Block::Simplex { start, len } = *b {
                let s: f64 = theta[start..start + len].iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::OutsideDomain { parameter: self.parameters[start].name.clone(), value: s });
                }
            }
        }
        Ok(())
    }

    /// Map an interior point to unconstrained space. Also returns
    /// `log |det dθ/dφ|` at that point.
    pub fn to_unconstrained(&self, theta: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_interior(theta)?;
        let mut phi = Vec::with_capacity(self.unconstrained_dim());
        let mut log_jac = 0.0;
        for b in &self.blocks {
            match *b {
                Block::Scalar { index, domain } => {
                    let t = theta[index];
                    match domain {
                        Domain::Real => phi.push(t),
                        Domain::Positive => {
                            phi.push(t.ln());
                            log_jac += t.ln();
                        }
                        Domain::UnitInterval => {
                            let u = (t / (1.0 - t)).ln();
                            phi.push(u);
                            log_jac += log_logistic_jacobian(u);
                        }
                        Domain::Simplex { .. } => unreachable!(),
                    }
                }
                Block::Simplex { start, len } => {
                    let mut stick = 1.0;
                    for k in 0..len - 1 {
                        let z = theta[start + k] / stick;
                        let y = (z / (1.0 - z)).ln() + ((len - 1 - k) as f64).ln();
                        let u = y - ((len - 1 - k) as f64).ln();
                        log_jac += stick.ln() + log_logistic_jacobian(u);
                        phi.push(y);
                        stick -= theta[start + k];
                    }
                }
            }
        }
        Ok((phi, log_jac))
    }

    pub fn to_constrained(&self, phi: &[f64]) -> Vec<f64> {
        self.to_constrained_with_log_jacobian(phi).0
    }

    /// Inverse of [`ModelSpec::to_unconstrained`], with the same Jacobian
    /// term.
    pub fn to_constrained_with_log_jacobian(&self, phi: &[f64]) -> (Vec<f64>, f64) {
        self.to_constrained_generic(phi)
    }

    /// [`ModelSpec::to_constrained_with_log_jacobian`] on any [`Scalar`].
    pub fn to_constrained_generic<S: Scalar>(&self, phi: &[S]) -> (Vec<S>, S) {
        debug_assert_eq!(phi.len(), self.unconstrained_dim());
        let mut theta = vec![S::constant(0.0); self.dim()];
        let mut log_jac = S::constant(0.0);
        let mut j = 0;
        for b in &self.blocks {
            match *b {
                Block::Scalar { index, domain } => {
                    let u = phi[j].clone();
                    j += 1;
                    theta[index] = match domain {
                        Domain::Real => u,
                        Domain::Positive => {
                            log_jac = log_jac + u.clone();
                            u.exp()
                        }
                        Domain::UnitInterval => {
                            log_jac = log_jac + log_logistic_jacobian(u.clone());
                            logistic(u)
                        }
                        Domain::Simplex { .. } => unreachable!(),
                    };
                }
                Block::Simplex { start, len } => {
                    let mut stick = S::constant(1.0);
                    for k in 0..len - 1 {
                        let u = phi[j].clone() - ((len - 1 - k) as f64).ln();
                        j += 1;
                        let x = stick.clone() * logistic(u.clone());
                        log_jac = log_jac + (stick.clone().ln() + log_logistic_jacobian(u));
                        theta[start + k] = x.clone();
                        stick = stick - x;
                    }
                    theta[start + len - 1] = stick;
                }
            }
        }
        (theta, log_jac)
    }

    /// Position of a scalar parameter among the unconstrained coordinates;
    /// `None` for simplex coordinates.
    pub fn unconstrained_index(&self, index: usize) -> Option<usize> {
        let mut j = 0;
        for b in &self.blocks {
            match *b {
                Block::Scalar { index: i, .. } => {
                    if i == index {
                        return Some(j);
                    }
                    j += 1;
                }
                Block::Simplex { len, .. } => j += len - 1,
            }
        }
        None
    }

    /// Starting point in constrained space: the declared start, else the
    /// image of the unconstrained origin.
    pub fn default_start(&self) -> Vec<f64> {
        self.start.clone().unwrap_or_else(|| self.to_constrained(&vec![0.0; self.unconstrained_dim()]))
    }
}

pub type GEval = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GGradient = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type GJet = Arc<dyn Fn(&[Jet]) -> Jet + Send + Sync>;

/// A function of the parameters written once for plain numbers and jets.
pub trait GenericFunction: Send + Sync + 'static {
    fn eval<S: Scalar>(&self, theta: &[S]) -> S;
}

/// A scalar function `g(θ)` of the constrained parameters.
#[derive(Clone)]
pub struct GFunction {
    label: String,
    eval: GEval,
    gradient: Option<GGradient>,
    jet: Option<GJet>,
    coordinate: Option<usize>,
}

impl fmt::Debug for GFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GFunction")
            .field("label", &self.label)
            .field("coordinate", &self.coordinate)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("jet", &self.jet.is_some())
            .finish()
    }
}

impl GFunction {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { label: label.into(), eval: Arc::new(f), gradient: None, jet: None, coordinate: None }
    }

    pub fn from_generic<G: GenericFunction>(label: impl Into<String>, g: G) -> Self {
        let g = Arc::new(g);
        let gj = g.clone();
        let mut f = Self::new(label, move |t: &[f64]| g.eval(t));
        f.jet = Some(Arc::new(move |t: &[Jet]| gj.eval(t)));
        f
    }

    /// Attach a jet version of the function.
    pub fn with_jet<J>(mut self, j: J) -> Self
    where
        J: Fn(&[Jet]) -> Jet + Send + Sync + 'static,
    {
        self.jet = Some(Arc::new(j));
        self
    }

    /// The projection `θ ↦ θ[index]`.
    pub fn coordinate(index: usize, label: impl Into<String>) -> Self {
        let mut g = Self::new(label, move |t: &[f64]| t[index]);
        g.coordinate = Some(index);
        g.jet = Some(Arc::new(move |t: &[Jet]| t[index].clone()));
        g.gradient = Some(Arc::new(move |t: &[f64]| {
            let mut v = vec![0.0; t.len()];
            v[index] = 1.0;
            v
        }));
        g
    }

    pub fn constant(c: f64) -> Self {
        let mut g = Self::new(format!("{c}"), move |_: &[f64]| c);
        g.gradient = Some(Arc::new(|t: &[f64]| vec![0.0; t.len()]));
        g.jet = Some(Arc::new(move |_: &[Jet]| Jet::constant(c)));
        g
    }

    pub fn with_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(grad));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Index of the parameter this function projects onto, if it is a
    /// coordinate projection.
    pub fn coordinate_index(&self) -> Option<usize> {
        self.coordinate
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        (self.eval)(theta)
    }

    /// The function on jets, when available.
    pub fn jet(&self, theta: &[Jet]) -> Option<Jet> {
        self.jet.as_ref().map(|j| j(theta))
    }

    /// Analytic gradient when one was supplied or a jet version exists,
    /// numerical otherwise.
    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if let Some(g) = &self.gradient {
            return Ok(g(theta));
        }
        if let Some(j) = &self.jet {
            let v = j(&Jet::variables(theta));
            if v.is_constant() {
                return Ok(vec![0.0; theta.len()]);
            }
            if v.is_finite() {
                return Ok(v.gradient.as_slice().to_vec());
            }
        }
        gradient_with(&|t: &[f64]| self.eval(t), theta, &DiffSettings::default())
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some() || self.jet.is_some()
    }

    /// `g + c`
    pub fn shifted(&self, c: f64) -> GFunction {
        let e = self.eval.clone();
        let mut g = GFunction::new(format!("({}) + {c}", self.label), move |t: &[f64]| e(t) + c);
        g.gradient = self.gradient.clone();
        if let Some(j) = self.jet.clone() {
            g.jet = Some(Arc::new(move |t: &[Jet]| j(t) + c));
        }
        g
    }

    /// `g1 * g2`
    pub fn product(&self, other: &GFunction) -> GFunction {
        let (a, b) = (self.eval.clone(), other.eval.clone());
        let mut g = GFunction::new(format!("({}) * ({})", self.label, other.label), move |t: &[f64]| a(t) * b(t));
        if let (Some(ja), Some(jb)) = (self.jet.clone(), other.jet.clone()) {
            g.jet = Some(Arc::new(move |t: &[Jet]| ja(t) * jb(t)));
        }
        g
    }

    /// `exp(s g)`
    pub fn exp_scaled(&self, s: f64) -> GFunction {
        let e = self.eval.clone();
        let mut g = GFunction::new(format!("exp({s} * ({}))", self.label), move |t: &[f64]| (s * e(t)).exp());
        if let Some(j) = self.jet.clone() {
            g.jet = Some(Arc::new(move |t: &[Jet]| (j(t) * s).exp()));
        }
        g
    }
}

#[cfg(test)]
mod tests;
