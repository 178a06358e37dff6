//! Choosing the number of components of a Gaussian mixture by posterior
//! probability.
//!
//! Each candidate `k` is fitted by EM from quantile starting values, then
//! refined by Newton in unconstrained coordinates and scored by its Laplace
//! marginal likelihood. The kernel is invariant under the `k!` relabellings
//! of the components, so the posterior has `k!` symmetric modes; the
//! approximation at one of them is multiplied by `k!`. Fits are reported
//! with components sorted by mean.

use crate::error::{Error, Result};
use crate::model::{gaussian_mixture, MixturePrior};
use crate::stats::{log_sum_exp, sample_variance, LN_2PI};

use statrs::function::gamma::ln_gamma;

use super::{posterior_from_log_marginals, Laplace, LaplaceOptions, Space};

const EM_ITERATIONS: usize = 500;
/// A component whose variance falls below this fraction of the data
/// variance is treated as collapsed onto single points.
const COLLAPSE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureFit {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Log marginal likelihood, label multiplicity included.
    pub log_marginal: f64,
    /// Laplace approximation at the single fitted mode.
    pub log_laplace: f64,
    /// Means strictly increasing after canonical sorting.
    pub ordered: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSelection {
    pub fits: Vec<MixtureFit>,
    /// Component counts that could not be fitted, with the reason.
    pub failures: Vec<(usize, String)>,
    pub prior: Vec<f64>,
    /// Posterior over `k = 1..=k_max`; failed counts get zero and the prior
    /// is renormalised over the rest.
    pub posterior: Vec<f64>,
}

impl MixtureSelection {
    pub fn most_probable(&self) -> usize {
        let best = (0..self.posterior.len()).max_by(|&a, &b| self.posterior[a].total_cmp(&self.posterior[b]));
        best.map_or(0, |i| i + 1)
    }
}

pub fn mixture_select(
    data: &[f64],
    k_max: usize,
    prior_over_k: Option<&[f64]>,
    opts: LaplaceOptions,
) -> Result<MixtureSelection> {
    if k_max == 0 {
        return Err(Error::InvalidInput("k_max must be at least 1".into()));
    }
    if data.len() < 2 * k_max {
        return Err(Error::InvalidInput(format!(
            "{} observations cannot identify {k_max} components; at least {} are needed",
            data.len(),
            2 * k_max
        )));
    }
    let prior = match prior_over_k {
        Some(p) if p.len() != k_max => {
            return Err(Error::InvalidInput(format!("prior over k needs {k_max} entries, got {}", p.len())))
        }
        Some(p) => p.to_vec(),
        None => vec![1.0 / k_max as f64; k_max],
    };
    posterior_from_log_marginals(&vec![0.0; k_max], &prior)?;

    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mp = MixturePrior::from_data(&sorted)?;
    let opts = LaplaceOptions { space: Space::Unconstrained, ..opts };

    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for k in 1..=k_max {
        match fit(&sorted, k, &mp, opts) {
            Ok(f) => fits.push(f),
            Err(e) => failures.push((k, e.to_string())),
        }
    }
    if fits.is_empty() {
        return Err(Error::InvalidInput("no component count could be fitted".into()));
    }
    let kept_prior: Vec<f64> = fits.iter().map(|f| prior[f.k - 1]).collect();
    let mass: f64 = kept_prior.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let kept_prior: Vec<f64> = kept_prior.iter().map(|p| p / mass).collect();
    let lm: Vec<f64> = fits.iter().map(|f| f.log_marginal).collect();
    let post = posterior_from_log_marginals(&lm, &kept_prior)?;
    let mut posterior = vec![0.0; k_max];
    for (f, p) in fits.iter().zip(post) {
        posterior[f.k - 1] = p;
    }
    Ok(MixtureSelection { fits, failures, prior, posterior })
}

fn fit(sorted: &[f64], k: usize, mp: &MixturePrior, opts: LaplaceOptions) -> Result<MixtureFit> {
    let start = em_start(sorted, k, mp);
    let model = gaussian_mixture(sorted, k, mp)?.with_start(start)?;
    let lap = Laplace::with_options(&model, opts)?;
    let lm = lap.log_marginal_likelihood()?;
    let theta = &lm.minimizer;
    let woff = if k > 1 { k } else { 0 };
    let weights: Vec<f64> = if k > 1 { theta[..k].to_vec() } else { vec![1.0] };
    let means = theta[woff..woff + k].to_vec();
    let variances = theta[woff + k..woff + 2 * k].to_vec();

    let floor = COLLAPSE * sample_variance(sorted);
    if let Some(v) = variances.iter().find(|v| **v < floor) {
        return Err(Error::DegenerateFit { k, detail: format!("a component variance collapsed to {v:e}") });
    }

    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| {
        means[a].total_cmp(&means[b]).then(variances[a].total_cmp(&variances[b])).then(weights[a].total_cmp(&weights[b]))
    });
    let means: Vec<f64> = idx.iter().map(|&j| means[j]).collect();
    let ordered = means.windows(2).all(|w| w[0] < w[1]);
    Ok(MixtureFit {
        k,
        weights: idx.iter().map(|&j| weights[j]).collect(),
        variances: idx.iter().map(|&j| variances[j]).collect(),
        means,
        log_marginal: lm.log_value + ln_gamma(k as f64 + 1.0),
        log_laplace: lm.log_value,
        ordered,
        iterations: lm.iterations,
    })
}

/// Maximum-likelihood EM from quantile starting values, kept strictly
/// inside the prior's support.
fn em_start(x: &[f64], k: usize, mp: &MixturePrior) -> Vec<f64> {
    let init = crate::model::quantile_start(x, k, mp);
    let woff = if k > 1 { k } else { 0 };
    let mut w: Vec<f64> = if k > 1 { init[..k].to_vec() } else { vec![1.0] };
    let mut mu = init[woff..woff + k].to_vec();
    let mut var = init[woff + k..].to_vec();
    let n = x.len() as f64;
    let span = mp.mean_hi - mp.mean_lo;
    let (vlo, vhi) = (mp.var_lo * 10.0, mp.var_hi * 0.9);

    let mut resp = vec![0.0; k];
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..EM_ITERATIONS {
        let mut nk = vec![0.0; k];
        let mut sx = vec![0.0; k];
        let mut sxx = vec![0.0; k];
        let mut ll = 0.0;
        for &xi in x {
            for j in 0..k {
                let d = xi - mu[j];
                resp[j] = w[j].ln() - 0.5 * (LN_2PI + var[j].ln()) - d * d / (2.0 * var[j]);
            }
            let total = log_sum_exp(&resp);
            ll += total;
            for j in 0..k {
                let r = (resp[j] - total).exp();
                nk[j] += r;
                sx[j] += r * xi;
                sxx[j] += r * xi * xi;
            }
        }
        for j in 0..k {
            let nj = nk[j].max(1e-12);
            w[j] = (nk[j] / n).max(1e-6);
            let m = sx[j] / nj;
            var[j] = (sxx[j] / nj - m * m).clamp(vlo, vhi);
            mu[j] = m.clamp(mp.mean_lo + 1e-6 * span, mp.mean_hi - 1e-6 * span);
        }
        let ws: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= ws);
        if (ll - prev_ll).abs() <= 1e-12 * (1.0 + ll.abs()) {
            break;
        }
        prev_ll = ll;
    }
    let mut out = Vec::with_capacity(3 * k);
    if k > 1 {
        out.extend(&w);
    }
    out.extend(&mu);
    out.extend(&var);
    out
}
