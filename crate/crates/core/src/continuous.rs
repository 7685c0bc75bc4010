//! Monte Carlo estimation of the gradient of the buffered failure
//! probability for general distributions.
//!
//! Under smoothness, positive-mass, no-atom and unique-minimizer conditions
//! the gradient is `E[F(ξ, x, γ̂)]` with `F = 0` when `γ̂g + 1 ≤ 0` and
//! `F = γ̂∇_x g` otherwise. The estimator plugs in `γ̂` from the empirical
//! distribution of the same draws (midpoint of the empirical minimizer
//! interval) and averages `F` over them. Reusing the draws biases the
//! estimate slightly; the reported standard error ignores the sampling
//! variability of `γ̂`.
//!
//! Draws are indexed by `(seed, index)` so evaluation order and the thread
//! count never change the result; all reductions run over fixed blocks in a
//! fixed pairwise order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::risk::{gamma_set, regime, Regime};
use crate::scenario::{FiniteDistribution, PerformanceModel, ScenarioSet};

/// Counter-based sampling access to a random vector.
pub trait Sampler: Send + Sync {
    fn dim(&self) -> usize;

    /// Outcome number `index` of stream `seed`; identical arguments give
    /// bit-identical draws.
    fn draw(&self, seed: u64, index: u64) -> Vec<f64>;
}

/// Independent generator for draw `index` of stream `seed`.
fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform on `[a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformSampler {
    pub a: f64,
    pub b: f64,
}

impl Sampler for UniformSampler {
    fn dim(&self) -> usize {
        1
    }

    fn draw(&self, seed: u64, index: u64) -> Vec<f64> {
        let u: f64 = stream(seed, index).gen();
        vec![self.a + (self.b - self.a) * u]
    }
}

/// Independent standard normal coordinates by Box–Muller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalSampler {
    pub dim: usize,
}

impl Sampler for NormalSampler {
    fn dim(&self) -> usize {
        self.dim
    }

    fn draw(&self, seed: u64, index: u64) -> Vec<f64> {
        let mut rng = stream(seed, index);
        let mut out = Vec::with_capacity(self.dim + 1);
        while out.len() < self.dim {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt();
            let t = std::f64::consts::TAU * u2;
            out.push(r * t.cos());
            out.push(r * t.sin());
        }
        out.truncate(self.dim);
        out
    }
}

/// Resamples the outcomes of a scenario set with their probabilities.
#[derive(Debug, Clone)]
pub struct FiniteSampler {
    scenarios: ScenarioSet,
    cumulative: Vec<f64>,
}

impl FiniteSampler {
    pub fn new(scenarios: ScenarioSet) -> Self {
        let mut acc = 0.0;
        let cumulative = scenarios
            .probs()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self {
            scenarios,
            cumulative,
        }
    }
}

impl Sampler for FiniteSampler {
    fn dim(&self) -> usize {
        self.scenarios.dim()
    }

    fn draw(&self, seed: u64, index: u64) -> Vec<f64> {
        let u = stream(seed, index).gen::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let i = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.scenarios.len() - 1);
        self.scenarios.scenarios()[i].clone()
    }
}

/// Empirical probes of the checkable gradient-formula assumptions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// `(ε, fraction of draws with g ≥ ε)`, ε the 90th percentile of the
    /// positive draws.
    pub positive_mass: (f64, f64),
    /// Fraction of draws with `|γ̂g + 1|` within the atom tolerance.
    pub atom_fraction: f64,
    /// Width of the empirical minimizer interval.
    pub gamma_width: f64,
    pub mean_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientEstimate {
    pub mean: Vec<f64>,
    /// Per-coordinate naive i.i.d. standard error.
    pub stderr: Vec<f64>,
    pub gamma_hat: f64,
    pub n_samples: usize,
    pub diagnostics: AssumptionReport,
}

/// Relative tolerance for counting draws as sitting on `γ̂g + 1 = 0`.
pub const ATOM_REL_TOL: f64 = 1e-8;

const BLOCK: usize = 1024;

/// `0` if `γ̂g + 1 ≤ 0`, `γ̂∇g` otherwise.
#[allow(non_snake_case)]
pub fn F_integrand(g_val: f64, grad_g: &[f64], gamma_hat: f64) -> Vec<f64> {
    if gamma_hat * g_val + 1.0 <= 0.0 {
        vec![0.0; grad_g.len()]
    } else {
        grad_g.iter().map(|d| gamma_hat * d).collect()
    }
}

/// Sum of `f(0..n)` over fixed blocks, combined pairwise in a fixed order.
fn tree_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let mut level: Vec<f64> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| (b * BLOCK..((b + 1) * BLOCK).min(n)).map(&f).sum())
        .collect();
    while level.len() > 1 {
        level = level.chunks(2).map(|c| c.iter().sum()).collect();
    }
    level.first().copied().unwrap_or(0.0)
}

/// Monte Carlo estimate of the gradient from `n_samples` draws of stream
/// `seed`.
pub fn mc_gradient(
    sampler: &dyn Sampler,
    model: &dyn PerformanceModel,
    x: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<GradientEstimate> {
    if n_samples < 2 {
        return Err(Error::BadParameter(format!(
            "need at least 2 samples, got {n_samples}"
        )));
    }
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    if let Some(m) = model.scenario_dim() {
        if sampler.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: sampler.dim(),
            });
        }
    }
    let n = model.dim();

    let draws: Vec<(f64, Vec<f64>)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let xi = sampler.draw(seed, k);
            (model.eval(&xi, x), model.grad(&xi, x))
        })
        .collect();
    let values: Vec<f64> = draws.iter().map(|d| d.0).collect();
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::BadParameter(format!(
            "model produced non-finite value {v}"
        )));
    }
    let big_n = n_samples as f64;
    let mean_g = tree_sum(n_samples, |k| values[k]) / big_n;

    let dist = FiniteDistribution::uniform(values)?;
    if regime(&dist) != Regime::Interior {
        return Err(Error::WrongRegime(format!(
            "empirical mean {mean_g} must be negative with some positive draws"
        )));
    }
    let gamma = gamma_set(&dist)?;
    let gamma_hat = gamma.midpoint();
    let values = dist.values();

    let active: Vec<bool> = values.iter().map(|g| gamma_hat * g + 1.0 > 0.0).collect();
    if !active.iter().any(|&a| a) {
        return Err(Error::Degenerate(
            "every draw falls on the zero branch".into(),
        ));
    }
    let f_at = |k: usize, j: usize| {
        if active[k] {
            gamma_hat * draws[k].1[j]
        } else {
            0.0
        }
    };

    let mut mean = Vec::with_capacity(n);
    let mut stderr = Vec::with_capacity(n);
    for j in 0..n {
        let m = tree_sum(n_samples, |k| f_at(k, j)) / big_n;
        let ss = tree_sum(n_samples, |k| (f_at(k, j) - m).powi(2));
        mean.push(m);
        stderr.push((ss / (big_n - 1.0) / big_n).sqrt());
    }

    let mut positives: Vec<f64> = values.iter().copied().filter(|&g| g > 0.0).collect();
    positives.par_sort_unstable_by(f64::total_cmp);
    let rank = ((0.9 * positives.len() as f64).ceil() as usize).clamp(1, positives.len());
    let eps = positives[rank - 1];
    let at_least_eps = values.iter().filter(|&&g| g >= eps).count() as f64 / big_n;
    let atol = ATOM_REL_TOL * (1.0 + gamma_hat * dist.max_abs());
    let atoms = values
        .iter()
        .filter(|&&g| (gamma_hat * g + 1.0).abs() <= atol)
        .count() as f64
        / big_n;

    Ok(GradientEstimate {
        mean,
        stderr,
        gamma_hat,
        n_samples,
        diagnostics: AssumptionReport {
            positive_mass: (eps, at_least_eps),
            atom_fraction: atoms,
            gamma_width: gamma.width(),
            mean_g,
        },
    })
}
