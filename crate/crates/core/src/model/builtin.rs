//! The example posteriors used as oracles, plus a Gaussian mixture family.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::jet::Scalar;
use crate::stats::{ln_beta, mean, sample_variance, LN_2PI};

use super::{Domain, GenericKernel, ModelSpec, ParameterDescriptor};

/// `coef ln(x)` with `0 ln(0) = 0`.
fn xlogy<S: Scalar>(coef: f64, x: S) -> S {
    if coef == 0.0 {
        S::constant(0.0)
    } else {
        x.ln() * coef
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    BetaBinomial,
    GaussianMeanVar,
    TwoTreatment,
    GaussianMixture,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::BetaBinomial => "beta-binomial",
            Family::GaussianMeanVar => "gaussian-meanvar",
            Family::TwoTreatment => "two-treatment",
            Family::GaussianMixture => "gaussian-mixture",
        }
    }

    pub fn hyper_keys(&self) -> &'static [&'static str] {
        match self {
            Family::BetaBinomial => &["p", "q", "a", "b"],
            Family::GaussianMeanVar => &[],
            Family::TwoTreatment => &["n11", "n12", "n21", "n22"],
            Family::GaussianMixture => &["k"],
        }
    }

    pub fn needs_data(&self) -> bool {
        matches!(self, Family::GaussianMeanVar | Family::GaussianMixture)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta-binomial" => Ok(Family::BetaBinomial),
            "gaussian-meanvar" => Ok(Family::GaussianMeanVar),
            "two-treatment" => Ok(Family::TwoTreatment),
            "gaussian-mixture" => Ok(Family::GaussianMixture),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

/// A built-in family instantiated with hyperparameters. Two-treatment yields
/// the pair (M1, M2); every other family yields a single model.
#[derive(Debug, Clone)]
pub struct Builtin {
    pub family: Family,
    pub models: Vec<ModelSpec>,
}

impl Builtin {
    pub fn primary(&self) -> &ModelSpec {
        &self.models[0]
    }
}

pub fn builtin_model(name: &str, hyper: &BTreeMap<String, f64>, data: &[f64]) -> Result<Builtin> {
    let family: Family = name.parse()?;
    let keys = family.hyper_keys();
    if let Some(k) = hyper.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(Error::InvalidHyper(format!("`{k}` is not a hyperparameter of {family}")));
    }
    let get = |key: &str| -> Result<f64> {
        let v = *hyper
            .get(key)
            .ok_or_else(|| Error::InvalidHyper(format!("{family} requires `{key}`")))?;
        if !v.is_finite() {
            return Err(Error::InvalidHyper(format!("`{key}` must be finite")));
        }
        Ok(v)
    };
    if family.needs_data() && data.is_empty() {
        return Err(Error::InvalidInput(format!("{family} requires data")));
    }
    let models = match family {
        Family::BetaBinomial => vec![beta_binomial(get("p")?, get("q")?, get("a")?, get("b")?)?],
        Family::GaussianMeanVar => vec![gaussian_mean_var(data)?],
        Family::TwoTreatment => {
            let (m1, m2) = two_treatment(get("n11")?, get("n12")?, get("n21")?, get("n22")?)?;
            vec![m1, m2]
        }
        Family::GaussianMixture => {
            let k = get("k")?;
            if k < 1.0 || k.fract() != 0.0 {
                return Err(Error::InvalidHyper("`k` must be a positive integer".into()));
            }
            vec![gaussian_mixture(data, k as usize, &MixturePrior::from_data(data)?)?]
        }
    };
    Ok(Builtin { family, models })
}

fn nonnegative(key: &str, v: f64) -> Result<()> {
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidHyper(format!("`{key}` must be nonnegative, got {v}")))
    }
}

/// `p` heads and `q` tails under a Beta(a, b) prior. The kernel carries the
/// prior's normalising constant, so it is also a proper marginal likelihood.
pub fn beta_binomial(p: f64, q: f64, a: f64, b: f64) -> Result<ModelSpec> {
    nonnegative("p", p)?;
    nonnegative("q", q)?;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidHyper(format!("prior shapes must be positive, got a={a}, b={b}")));
    }
    let n = ((p + q).round() as usize).max(1);
    let kernel = BetaKernel { c1: p + a - 1.0, c2: q + b - 1.0, log_norm: ln_beta(a, b) };
    Ok(ModelSpec::from_kernel(
        format!("beta-binomial(p={p},q={q},a={a},b={b})"),
        vec![ParameterDescriptor::new("theta", Domain::UnitInterval)],
        n,
        kernel,
    )?
    .with_proper_prior(true))
}

/// `c1 ln θ + c2 ln(1 - θ) - log_norm`
struct BetaKernel {
    c1: f64,
    c2: f64,
    log_norm: f64,
}

impl GenericKernel for BetaKernel {
    fn log_kernel<S: Scalar>(&self, t: &[S]) -> S {
        xlogy(self.c1, t[0].clone()) + xlogy(self.c2, -t[0].clone() + 1.0) - self.log_norm
    }
}

/// Normal measurements with unknown mean and standard deviation under the
/// improper prior `π(μ, σ) ∝ 1/σ`.
pub fn gaussian_mean_var(data: &[f64]) -> Result<ModelSpec> {
    if data.len() < 2 {
        return Err(Error::InvalidInput("gaussian-meanvar needs at least two measurements".into()));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("data must be finite".into()));
    }
    let n = data.len();
    let nf = n as f64;
    let xbar = mean(data);
    let s2 = sample_variance(data);
    if !(s2 > 0.0) {
        return Err(Error::InvalidInput("data have zero variance".into()));
    }
    let ss = (nf - 1.0) * s2;
    ModelSpec::from_kernel(
        format!("gaussian-meanvar(n={n})"),
        vec![
            ParameterDescriptor::new("mu", Domain::Real),
            ParameterDescriptor::new("sigma", Domain::Positive),
        ],
        n,
        GaussianKernel { n: nf, xbar, ss },
    )?
    .with_start(vec![xbar, s2.sqrt()])
}

struct GaussianKernel {
    n: f64,
    xbar: f64,
    ss: f64,
}

impl GenericKernel for GaussianKernel {
    fn log_kernel<S: Scalar>(&self, t: &[S]) -> S {
        let (mu, sigma) = (t[0].clone(), t[1].clone());
        let d = -mu + self.xbar;
        -(sigma.clone().ln() * (self.n + 1.0)) - (d.clone() * d * self.n + self.ss) / (sigma.clone() * sigma * 2.0)
    }
}

/// Two treatment groups with success/failure counts `(n11, n12)` and
/// `(n21, n22)`. M1 gives each group its own rate, M2 a common one; both
/// rates have uniform priors.
pub fn two_treatment(n11: f64, n12: f64, n21: f64, n22: f64) -> Result<(ModelSpec, ModelSpec)> {
    for (k, v) in [("n11", n11), ("n12", n12), ("n21", n21), ("n22", n22)] {
        nonnegative(k, v)?;
    }
    let n = ((n11 + n12 + n21 + n22).round() as usize).max(1);
    let m1 = ModelSpec::from_kernel(
        format!("two-treatment-M1(n11={n11},n12={n12},n21={n21},n22={n22})"),
        vec![
            ParameterDescriptor::new("theta1", Domain::UnitInterval),
            ParameterDescriptor::new("theta2", Domain::UnitInterval),
        ],
        n,
        SeparateRates { counts: [n11, n12, n21, n22] },
    )?
    .with_proper_prior(true);
    let m2 = ModelSpec::from_kernel(
        format!("two-treatment-M2(n11={n11},n12={n12},n21={n21},n22={n22})"),
        vec![ParameterDescriptor::new("theta", Domain::UnitInterval)],
        n,
        BetaKernel { c1: n11 + n21, c2: n12 + n22, log_norm: 0.0 },
    )?
    .with_proper_prior(true);
    Ok((m1, m2))
}

struct SeparateRates {
    counts: [f64; 4],
}

impl GenericKernel for SeparateRates {
    fn log_kernel<S: Scalar>(&self, t: &[S]) -> S {
        let [n11, n12, n21, n22] = self.counts;
        xlogy(n11, t[0].clone())
            + xlogy(n12, -t[0].clone() + 1.0)
            + xlogy(n21, t[1].clone())
            + xlogy(n22, -t[1].clone() + 1.0)
    }
}

/// Proper prior for the mixture family: flat weights on the simplex, flat
/// means on `[mean_lo, mean_hi]`, log-uniform variances on
/// `[var_lo, var_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixturePrior {
    pub mean_lo: f64,
    pub mean_hi: f64,
    pub var_lo: f64,
    pub var_hi: f64,
}

impl MixturePrior {
    /// Means over the data range, variances over `[1e-6, 1e2]` times the
    /// sample variance.
    pub fn from_data(data: &[f64]) -> Result<Self> {
        if data.len() < 2 || data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("mixture data must hold at least two finite values".into()));
        }
        let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = sample_variance(data);
        if !(hi > lo) || !(v > 0.0) {
            return Err(Error::InvalidInput("mixture data have zero spread".into()));
        }
        Ok(Self { mean_lo: lo, mean_hi: hi, var_lo: 1e-6 * v, var_hi: 1e2 * v })
    }
}

/// Parameters are `w1..wk` (a simplex block, omitted when `k = 1`),
/// `mu1..muk`, `var1..vark`.
pub fn gaussian_mixture(data: &[f64], k: usize, prior: &MixturePrior) -> Result<ModelSpec> {
    if k == 0 {
        return Err(Error::InvalidHyper("`k` must be a positive integer".into()));
    }
    if data.is_empty() || data.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("mixture data must be finite and nonempty".into()));
    }
    let mut params = Vec::with_capacity(3 * k);
    if k > 1 {
        params.extend((1..=k).map(|j| ParameterDescriptor::new(format!("w{j}"), Domain::Simplex { block: 0 })));
    }
    params.extend((1..=k).map(|j| ParameterDescriptor::new(format!("mu{j}"), Domain::Real)));
    params.extend((1..=k).map(|j| ParameterDescriptor::new(format!("var{j}"), Domain::Positive)));

    let p = *prior;
    let log_prior_const = statrs::function::gamma::ln_gamma(k as f64)
        - k as f64 * (p.mean_hi - p.mean_lo).ln()
        - k as f64 * (p.var_hi / p.var_lo).ln().ln();
    let kernel = MixtureKernel { xs: data.to_vec(), k, prior: p, log_prior_const };
    Ok(ModelSpec::from_kernel(format!("gaussian-mixture(k={k})"), params, data.len(), kernel)?
        .with_proper_prior(true)
        .with_start(quantile_start(data, k, prior))?)
}

struct MixtureKernel {
    xs: Vec<f64>,
    k: usize,
    prior: MixturePrior,
    log_prior_const: f64,
}

impl GenericKernel for MixtureKernel {
    fn log_kernel<S: Scalar>(&self, t: &[S]) -> S {
        let (k, p) = (self.k, &self.prior);
        let woff = if k > 1 { k } else { 0 };
        let mu = &t[woff..woff + k];
        let var = &t[woff + k..woff + 2 * k];
        let mut log_prior = S::constant(self.log_prior_const);
        for j in 0..k {
            let (m, v) = (mu[j].value(), var[j].value());
            if !(m >= p.mean_lo && m <= p.mean_hi && v >= p.var_lo && v <= p.var_hi) {
                return S::constant(f64::NEG_INFINITY);
            }
            log_prior = log_prior - var[j].clone().ln();
        }
        let consts: Vec<S> = (0..k)
            .map(|j| {
                let lw = if k > 1 { t[j].clone().ln() } else { S::constant(0.0) };
                lw - (var[j].clone().ln() + LN_2PI) * 0.5
            })
            .collect();
        let inv2v: Vec<S> = var.iter().map(|v| (v.clone() * 2.0).recip()).collect();
        let mut ll = S::constant(0.0);
        let mut terms = Vec::with_capacity(k);
        for &x in &self.xs {
            terms.clear();
            for j in 0..k {
                let d = -mu[j].clone() + x;
                terms.push(consts[j].clone() - d.clone() * d * inv2v[j].clone());
            }
            // log-sum-exp around the largest term
            let top = (0..k).fold(0, |b, j| if terms[j].value() > terms[b].value() { j } else { b });
            let mut sum = S::constant(0.0);
            for (j, term) in terms.iter().enumerate() {
                if j != top {
                    sum = sum + (term.clone() - terms[top].clone()).exp();
                }
            }
            ll = ll + terms[top].clone() + sum.ln_1p();
        }
        ll + log_prior
    }
}

/// Means at evenly spaced sample quantiles, equal weights, variances a
/// `k`-th of the spread squared.
pub fn quantile_start(data: &[f64], k: usize, prior: &MixturePrior) -> Vec<f64> {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let var = if n > 1 { sample_variance(&sorted) } else { 1.0 };
    let mut start = Vec::with_capacity(3 * k);
    if k > 1 {
        start.extend(std::iter::repeat_n(1.0 / k as f64, k));
    }
    let span = prior.mean_hi - prior.mean_lo;
    for j in 0..k {
        let idx = (((j as f64 + 0.5) / k as f64) * n as f64) as usize;
        let m = sorted[idx.min(n - 1)];
        start.push(m.clamp(prior.mean_lo + 1e-9 * span, prior.mean_hi - 1e-9 * span));
    }
    let v = (var / (k * k) as f64).clamp(prior.var_lo * 1.01, prior.var_hi * 0.99);
    start.extend(std::iter::repeat_n(v, k));
    start
}
