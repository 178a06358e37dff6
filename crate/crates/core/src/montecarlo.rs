//! Self-normalised importance sampling, the reference the Laplace results
//! are compared against.
//!
//! The proposal is a Gaussian in unconstrained coordinates centred at the
//! posterior mode with covariance `scale² Σ̂`. Random numbers come from
//! ChaCha20 (`rand_chacha`). Draws are produced in blocks of
//! [`BLOCK_SIZE`]; block `b` uses a generator seeded with the user seed and
//! switched to stream `b`, so the draws do not depend on how blocks are
//! spread over threads. The weighted sums are always accumulated in block
//! order, which makes threaded and sequential runs bit-identical.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::laplace::{Laplace, LaplaceOptions, Space};
use crate::linalg::cholesky;
use crate::model::{GFunction, ModelSpec};

pub const BLOCK_SIZE: usize = 4096;
pub const MIN_SAMPLES: usize = 100;
pub const MIN_ESS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    /// Standard deviations of the proposal relative to the Laplace ones.
    pub proposal_scale: f64,
    pub threads: usize,
    pub laplace: LaplaceOptions,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { proposal_scale: 1.2, threads: 1, laplace: LaplaceOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub effective_sample_size: f64,
    pub n_samples: usize,
    pub seed: u64,
}

pub fn importance_expectation(model: &ModelSpec, g: &GFunction, n_samples: usize, seed: u64) -> Result<McEstimate> {
    importance_expectation_with(model, g, n_samples, seed, &McOptions::default())
}

pub fn importance_expectation_with(
    model: &ModelSpec,
    g: &GFunction,
    n_samples: usize,
    seed: u64,
    opts: &McOptions,
) -> Result<McEstimate> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!("at least {MIN_SAMPLES} samples are required")));
    }
    if !(opts.proposal_scale.is_finite() && opts.proposal_scale > 0.0) {
        return Err(Error::InvalidInput("proposal scale must be positive".into()));
    }
    let lap = Laplace::with_options(model, LaplaceOptions { space: Space::Unconstrained, ..opts.laplace })?;
    let mode = lap.mode()?;
    let sigma = mode.sigma.as_ref().expect("regular mode has Σ");
    let l = cholesky(sigma).ok_or_else(|| Error::NotPositiveDefinite { context: "proposal covariance".into() })?
        * opts.proposal_scale;
    let centre = DVector::from_vec(mode.minimizer.clone());

    let blocks = n_samples.div_ceil(BLOCK_SIZE);
    let run = |b: usize| draw_block(&lap, g, &centre, &l, seed, b, block_len(n_samples, b));
    let threads = opts.threads.max(1).min(blocks);
    let results: Vec<Vec<(f64, f64)>> = if threads == 1 {
        (0..blocks).map(run).collect()
    } else {
        let mut slots: Vec<Option<Vec<(f64, f64)>>> = vec![None; blocks];
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let run = &run;
                    s.spawn(move || (t..blocks).step_by(threads).map(|b| (b, run(b))).collect::<Vec<_>>())
                })
                .collect();
            for h in handles {
                for (b, v) in h.join().expect("sampling thread panicked") {
                    slots[b] = Some(v);
                }
            }
        });
        slots.into_iter().map(|v| v.expect("every block was drawn")).collect()
    };
    let draws: Vec<(f64, f64)> = results.into_iter().flatten().collect();
    reduce(&draws, n_samples, seed)
}

fn block_len(n: usize, b: usize) -> usize {
    (n - b * BLOCK_SIZE).min(BLOCK_SIZE)
}

/// `(log weight, g)` pairs for one block; log weights are up to a constant.
fn draw_block(
    lap: &Laplace,
    g: &GFunction,
    centre: &DVector<f64>,
    l: &DMatrix<f64>,
    seed: u64,
    block: usize,
    len: usize,
) -> Vec<(f64, f64)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    let d = centre.len();
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut rng)));
        let phi = centre + l * &z;
        let f = lap.objective(phi.as_slice());
        let lw = if f.is_finite() { -f + 0.5 * z.norm_squared() } else { f64::NEG_INFINITY };
        let gv = if lw.is_finite() { g.eval(&lap.to_theta(phi.as_slice())) } else { 0.0 };
        out.push((lw, gv));
    }
    out
}

fn reduce(draws: &[(f64, f64)], n_samples: usize, seed: u64) -> Result<McEstimate> {
    let top = draws.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::ZeroMass);
    }
    let mut sw = 0.0;
    let mut swg = 0.0;
    let mut sw2 = 0.0;
    for &(lw, gv) in draws {
        let w = (lw - top).exp();
        if w > 0.0 && !gv.is_finite() {
            return Err(Error::NonFinite { location: vec![gv] });
        }
        sw += w;
        swg += w * gv;
        sw2 += w * w;
    }
    let mean = swg / sw;
    let spread: f64 = draws
        .iter()
        .map(|&(lw, gv)| {
            let w = (lw - top).exp();
            if w > 0.0 {
                w * w * (gv - mean) * (gv - mean)
            } else {
                0.0
            }
        })
        .sum();
    let ess = (sw * sw / sw2).min(n_samples as f64);
    if ess < MIN_ESS {
        return Err(Error::LowEffectiveSampleSize { ess });
    }
    Ok(McEstimate { mean, standard_error: spread.sqrt() / sw, effective_sample_size: ess, n_samples, seed })
}

/// Plug-in estimate `g(θ̂)` at the posterior mode.
pub fn posterior_mode_estimate(model: &ModelSpec, g: &GFunction) -> Result<f64> {
    Ok(g.eval(&Laplace::new(model)?.mode_theta()?))
}
