//! Independent numerical oracles: central and one-sided finite differences
//! and a brute-force grid minimization of the min-formula objective.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scenario::FiniteDistribution;

/// Relative finite-difference step: `h_j = 1e-5 · max(1, |x_j|)`.
pub const FD_REL_STEP: f64 = 1e-5;

pub fn default_step(x: f64) -> f64 {
    FD_REL_STEP * x.abs().max(1.0)
}

fn finite(v: f64, at: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { at: at.to_vec() })
    }
}

/// Central differences `(f(x + h e_j) − f(x − h e_j)) / 2h`.
pub fn fd_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    fd_gradient_with(|x| Ok(f(x)), x, |_| h)
}

/// Central differences with the default relative step per coordinate.
pub fn fd_gradient_default<F>(f: F, x: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    fd_gradient_with(|x| Ok(f(x)), x, default_step)
}

/// Central differences of a fallible function with step `step(x_j)`.
pub fn fd_gradient_with<F, S>(f: F, x: &[f64], step: S) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
    S: Fn(f64) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = step(x[j]);
            if !(h > 0.0) {
                return Err(Error::BadParameter(format!("step {h} must be positive")));
            }
            probe[j] = x[j] + h;
            let fp = finite(f(&probe)?, &probe)?;
            probe[j] = x[j] - h;
            let fm = finite(f(&probe)?, &probe)?;
            probe[j] = x[j];
            Ok((fp - fm) / (2.0 * h))
        })
        .collect()
}

/// `((f(x) − f(x − h)) / h, (f(x + h) − f(x)) / h)`.
pub fn one_sided_derivatives<F>(f: F, x: f64, h: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::BadParameter(format!("step {h} must be positive")));
    }
    let at = |t: f64| finite(f(t), &[t]);
    let (fm, f0, fp) = (at(x - h)?, at(x)?, at(x + h)?);
    Ok(((f0 - fm) / h, (fp - f0) / h))
}

/// Twice the largest breakpoint `−1/v` over the negative outcomes, or 1
/// when there is none.
pub fn default_gamma_max(dist: &FiniteDistribution) -> f64 {
    let max_bp = dist
        .values()
        .iter()
        .filter(|v| **v < 0.0)
        .map(|v| -1.0 / v)
        .fold(0.0, f64::max);
    if max_bp > 0.0 {
        2.0 * max_bp
    } else {
        1.0
    }
}

const GRID_CHUNK: usize = 4096;

/// Evaluates `E[max{0, γ·value + 1}]` on the uniform grid of `n_grid`
/// points over `[0, gamma_max]` and returns `(min value, argmin)`. Ties
/// resolve to the smallest `γ`.
pub fn bpoe_grid_oracle(
    dist: &FiniteDistribution,
    gamma_max: f64,
    n_grid: usize,
) -> Result<(f64, f64)> {
    if !(gamma_max > 0.0) || n_grid < 2 {
        return Err(Error::BadParameter(format!(
            "grid needs gamma_max > 0 and at least 2 points, got {gamma_max} and {n_grid}"
        )));
    }
    let spacing = gamma_max / (n_grid - 1) as f64;
    let eval = |k: usize| {
        let g = spacing * k as f64;
        let v: f64 = dist.iter().map(|(v, p)| p * (g * v + 1.0).max(0.0)).sum();
        (v, g)
    };
    let better = |a: (f64, f64), b: (f64, f64)| if b.0 < a.0 { b } else { a };
    let chunks: Vec<(f64, f64)> = (0..n_grid.div_ceil(GRID_CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * GRID_CHUNK;
            let end = (start + GRID_CHUNK).min(n_grid);
            (start..end).map(eval).fold((f64::INFINITY, 0.0), better)
        })
        .collect();
    Ok(chunks.into_iter().fold((f64::INFINITY, 0.0), better))
}
