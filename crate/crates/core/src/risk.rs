//! Quantiles, superquantiles, failure probability and the buffered failure
//! probability of a finite distribution.
//!
//! The buffered failure probability is available through two independent
//! routes: the definitional one solves `q̄_α = 0` for the level `ᾱ` by
//! bisection, and the min-formula route minimizes the convex piecewise
//! linear function `γ ↦ E[max{0, γ·g + 1}]` over `γ ≥ 0` exactly by
//! enumerating its breakpoints `−1/v` for the negative outcomes `v`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{compensated_sum, FiniteDistribution};

/// Relative scale of the flat-segment test on slopes of the objective.
pub const SLOPE_REL_TOL: f64 = 1e-12;

/// Bisection stops once the bracket on `ᾱ` is this narrow.
pub const ALPHA_TOL: f64 = 1e-12;

pub const MAX_BISECTION_ITERS: usize = 200;

/// Which of the three cases of the buffered failure probability applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `p(x) = 0`.
    Zero,
    /// `p(x) > 0` and `E[g] < 0`.
    Interior,
    /// Everything else (`E[g] ≥ 0`).
    One,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Zero => "zero",
            Regime::Interior => "interior",
            Regime::One => "one",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaKind {
    Unique,
    Interval,
}

/// The closed interval `[lo, hi]` of minimizers of the min-formula
/// objective, together with every breakpoint of that objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSet {
    pub lo: f64,
    pub hi: f64,
    /// Distinct kinks `−1/v` for the negative outcomes, ascending.
    pub breakpoints: Vec<f64>,
    pub kind: GammaKind,
}

impl GammaSet {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_unique(&self) -> bool {
        self.kind == GammaKind::Unique
    }

    pub fn contains(&self, gamma: f64, tol: f64) -> bool {
        gamma >= self.lo - tol && gamma <= self.hi + tol
    }

    /// The same interval for the distribution scaled by `c > 0`.
    pub fn rescaled(&self, c: f64) -> Self {
        Self {
            lo: self.lo / c,
            hi: self.hi / c,
            breakpoints: self.breakpoints.iter().map(|b| b / c).collect(),
            kind: self.kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BpoeMethod {
    /// Bisection on `α` for `q̄_α = 0`.
    Definitional,
    /// Exact minimization of `E[max{0, γ·g + 1}]`.
    MinFormula,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpoeResult {
    pub value: f64,
    /// Present iff the regime is interior; then `value = 1 − alpha_bar`.
    pub alpha_bar: Option<f64>,
    pub gamma: Option<GammaSet>,
    pub regime: Regime,
}

/// Outcomes sorted ascending with their probabilities.
struct SortedDist {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl SortedDist {
    fn new(dist: &FiniteDistribution) -> Self {
        let mut idx: Vec<usize> = (0..dist.len()).collect();
        idx.sort_by(|&a, &b| dist.values()[a].total_cmp(&dist.values()[b]));
        Self {
            values: idx.iter().map(|&i| dist.values()[i]).collect(),
            probs: idx.iter().map(|&i| dist.probs()[i]).collect(),
        }
    }

    fn quantile(&self, alpha: f64) -> f64 {
        let mut cum = 0.0;
        for (&v, &p) in self.values.iter().zip(&self.probs) {
            cum += p;
            if cum >= alpha {
                return v;
            }
        }
        // Rounding left the total just below alpha.
        *self.values.last().expect("nonempty distribution")
    }

    fn superquantile(&self, alpha: f64) -> f64 {
        if alpha == 0.0 {
            return compensated_sum(self.values.iter().zip(&self.probs).map(|(v, p)| v * p));
        }
        let q = self.quantile(alpha);
        let excess = compensated_sum(
            self.values
                .iter()
                .zip(&self.probs)
                .map(|(v, p)| p * (v - q).max(0.0)),
        );
        q + excess / (1.0 - alpha)
    }
}

/// Left-continuous inverse of the distribution function:
/// `min{t : P(value ≤ t) ≥ alpha}`.
pub fn quantile(dist: &FiniteDistribution, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::BadAlpha(alpha));
    }
    Ok(SortedDist::new(dist).quantile(alpha))
}

/// `q_α + E[max{0, value − q_α}] / (1 − α)` for `α ∈ [0, 1)`; the mean at
/// `α = 0`.
pub fn superquantile(dist: &FiniteDistribution, alpha: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::BadAlpha(alpha));
    }
    Ok(SortedDist::new(dist).superquantile(alpha))
}

/// `P(value > 0)`, strict.
pub fn failure_prob(dist: &FiniteDistribution) -> f64 {
    compensated_sum(dist.iter().filter(|(v, _)| *v > 0.0).map(|(_, p)| p))
}

pub fn regime(dist: &FiniteDistribution) -> Regime {
    if failure_prob(dist) == 0.0 {
        Regime::Zero
    } else if dist.mean() < 0.0 {
        Regime::Interior
    } else {
        Regime::One
    }
}

/// `E[max{0, γ·value + 1}]`.
pub fn objective(dist: &FiniteDistribution, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::BadParameter(format!(
            "gamma = {gamma} must be nonnegative"
        )));
    }
    Ok(objective_unchecked(dist, gamma))
}

pub(crate) fn objective_unchecked(dist: &FiniteDistribution, gamma: f64) -> f64 {
    compensated_sum(dist.iter().map(|(v, p)| p * (gamma * v + 1.0).max(0.0)))
}

/// Exact minimizer interval of `γ ↦ E[max{0, γ·value + 1}]` over `γ ≥ 0`.
///
/// The objective starts with slope `E[value] < 0` and, each time `γ`
/// passes a breakpoint `−1/v`, the slope grows by `−p·v > 0`; past the last
/// breakpoint it equals `Σ_{v>0} p·v > 0`. The minimizers are where the
/// slope first stops being negative: a single breakpoint, or the flat
/// segment between two consecutive ones.
pub fn gamma_set(dist: &FiniteDistribution) -> Result<GammaSet> {
    match regime(dist) {
        Regime::Interior => {}
        r => {
            return Err(Error::WrongRegime(format!(
                "minimizer set requires p > 0 and E[g] < 0, regime is {}",
                r.as_str()
            )))
        }
    }

    let mut negatives: Vec<(f64, f64)> = dist
        .iter()
        .filter(|(v, _)| *v < 0.0)
        .map(|(v, p)| (-1.0 / v, p * v))
        .collect();
    negatives.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Group equal breakpoints; `mass[k]` is the total p·v leaving the
    // active set at breakpoint k.
    let mut breakpoints: Vec<f64> = Vec::new();
    let mut mass: Vec<Vec<f64>> = Vec::new();
    for (bp, pv) in negatives {
        if breakpoints.last() == Some(&bp) {
            mass.last_mut().unwrap().push(pv);
        } else {
            breakpoints.push(bp);
            mass.push(vec![pv]);
        }
    }
    let groups = breakpoints.len();

    let positive_slope = compensated_sum(dist.iter().filter(|(v, _)| *v > 0.0).map(|(v, p)| p * v));
    // suffix[k] = Σ p·v over groups k.. ; slope just after breakpoint k is
    // positive_slope + suffix[k + 1].
    let mut suffix = vec![0.0; groups + 1];
    for k in (0..groups).rev() {
        suffix[k] = suffix[k + 1] + compensated_sum(mass[k].iter().copied());
    }
    let slope_after = |k: usize| positive_slope + suffix[k + 1];
    let tol = SLOPE_REL_TOL * compensated_sum(dist.iter().map(|(v, p)| p * v.abs()));

    let initial_slope = positive_slope + suffix[0];
    let (lo, hi) = if initial_slope >= -tol {
        (0.0, breakpoints.first().copied().unwrap_or(0.0))
    } else {
        let k = (0..groups)
            .find(|&k| slope_after(k) >= -tol)
            .ok_or_else(|| Error::Degenerate("objective slope never turns nonnegative".into()))?;
        if slope_after(k) > tol {
            (breakpoints[k], breakpoints[k])
        } else {
            let next = breakpoints.get(k + 1).copied().ok_or_else(|| {
                Error::Degenerate("objective is flat beyond its last breakpoint".into())
            })?;
            // Slopes jump by a nonzero amount at every breakpoint, so the
            // flat stretch ends exactly at the next one.
            debug_assert!(slope_after(k + 1) > tol);
            (breakpoints[k], next)
        }
    };

    let kind = if hi > lo {
        GammaKind::Interval
    } else {
        GammaKind::Unique
    };
    Ok(GammaSet {
        lo,
        hi,
        breakpoints,
        kind,
    })
}

/// Buffered failure probability by the chosen route.
///
/// Both routes classify the regime identically; in the interior regime both
/// report `ᾱ` and the minimizer set.
pub fn bpoe(dist: &FiniteDistribution, method: BpoeMethod) -> Result<BpoeResult> {
    match regime(dist) {
        Regime::Zero => Ok(BpoeResult {
            value: 0.0,
            alpha_bar: None,
            gamma: None,
            regime: Regime::Zero,
        }),
        Regime::One => Ok(BpoeResult {
            value: 1.0,
            alpha_bar: None,
            gamma: None,
            regime: Regime::One,
        }),
        Regime::Interior => {
            let gamma = gamma_set(dist)?;
            let value = match method {
                BpoeMethod::MinFormula => objective_unchecked(dist, gamma.lo),
                BpoeMethod::Definitional => 1.0 - alpha_bar_bisection(dist)?,
            };
            Ok(BpoeResult {
                value,
                alpha_bar: Some(1.0 - value),
                gamma: Some(gamma),
                regime: Regime::Interior,
            })
        }
    }
}

/// Level `ᾱ` with `q̄_ᾱ = 0`, assuming the interior regime.
///
/// `q̄_0 = E[g] < 0` and `q̄_{1−p} ≥ E[g | g > 0] > 0`, so `[0, 1 − p]`
/// brackets the root.
fn alpha_bar_bisection(dist: &FiniteDistribution) -> Result<f64> {
    let sorted = SortedDist::new(dist);
    let mut lo = 0.0;
    let mut hi = 1.0 - failure_prob(dist);
    for _ in 0..MAX_BISECTION_ITERS {
        if hi - lo <= ALPHA_TOL {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        if sorted.superquantile(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Convergence {
        iterations: MAX_BISECTION_ITERS,
    })
}
