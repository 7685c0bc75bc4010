//! Outer estimate of the subdifferential of the buffered failure
//! probability for finite distributions, and the closed-form gradient that
//! applies when all outcome values are distinct.
//!
//! Every subgradient `y` at `x̂` has the form `γ̂ Σ p_i μ_i ∇g_i` for some
//! `γ̂ ∈ Γ(x̂)` and multipliers `μ_i ∈ [0, 1]` with `Σ p_i μ_i g_i = 0`,
//! where `μ_i` is forced to 0 when `γ̂g_i + 1 < 0`, forced to 1 when
//! `γ̂g_i + 1 > 0` and free otherwise. The set of all such vectors, the
//! [`SubgradientSet`], contains the subdifferential and can be strictly
//! larger; it is never reported as the subdifferential itself.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp;
use crate::risk::{gamma_set, GammaSet};
use crate::scenario::{
    check_dims, compensated_sum, push_forward, scenario_gradients, FiniteDistribution,
    PerformanceModel, ScenarioSet,
};

/// Relative tie tolerance on `|γ̂v + 1|`.
pub const TIE_REL_TOL: f64 = 1e-9;

/// Largest tied set whose polytope vertices are enumerated.
pub const MAX_VERTEX_TIED: usize = 12;

/// Tie tolerance matched to the scale of the data at `gamma_hat`.
pub fn tie_tolerance(dist: &FiniteDistribution, gamma_hat: f64) -> f64 {
    TIE_REL_TOL * (dist.max_abs() * gamma_hat + 1.0)
}

/// Classification of scenarios at one `γ̂` by the sign of `γ̂v_i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierPattern {
    pub gamma_hat: f64,
    /// `γ̂v_i + 1 < −tol`: `μ_i = 0`.
    pub forced_zero: Vec<usize>,
    /// `γ̂v_i + 1 > tol`: `μ_i = 1`.
    pub forced_one: Vec<usize>,
    /// `|γ̂v_i + 1| ≤ tol`: `μ_i ∈ [0, 1]`.
    pub tied: Vec<usize>,
    /// Required `Σ_tied p_i μ_i`, clamped into `[0, tied_capacity]`.
    pub tied_mass: f64,
    /// `Σ_tied p_i`.
    pub tied_capacity: f64,
}

impl MultiplierPattern {
    /// Same index sets (the γ̂ may differ, e.g. after rescaling).
    pub fn same_sets(&self, other: &Self) -> bool {
        self.forced_zero == other.forced_zero
            && self.forced_one == other.forced_one
            && self.tied == other.tied
    }
}

/// Classifies every scenario at `gamma_hat` and derives the tied mass from
/// `Σ p_i μ_i v_i = 0`: tied values all equal `−1/γ̂`, so
/// `Σ_tied p_i μ_i = γ̂ Σ_forced_one p_i v_i`.
pub fn activity_pattern(
    dist: &FiniteDistribution,
    gamma_hat: f64,
    tol: f64,
) -> Result<MultiplierPattern> {
    if !(gamma_hat > 0.0 && gamma_hat.is_finite()) {
        return Err(Error::BadParameter(format!(
            "gamma_hat = {gamma_hat} must be positive"
        )));
    }
    let mut forced_zero = Vec::new();
    let mut forced_one = Vec::new();
    let mut tied = Vec::new();
    for (i, (v, _)) in dist.iter().enumerate() {
        let s = gamma_hat * v + 1.0;
        if s < -tol {
            forced_zero.push(i);
        } else if s > tol {
            forced_one.push(i);
        } else {
            tied.push(i);
        }
    }
    let p = dist.probs();
    let v = dist.values();
    let raw_mass = gamma_hat * compensated_sum(forced_one.iter().map(|&i| p[i] * v[i]));
    let capacity = compensated_sum(tied.iter().map(|&i| p[i]));
    let mass_tol = tol.max(1e-12);
    if raw_mass < -mass_tol || raw_mass > capacity + mass_tol {
        return Err(Error::InfeasibleMultipliers {
            tied_mass: raw_mass,
            capacity,
        });
    }
    Ok(MultiplierPattern {
        gamma_hat,
        forced_zero,
        forced_one,
        tied,
        tied_mass: raw_mass.clamp(0.0, capacity),
        tied_capacity: capacity,
    })
}

/// A scenario whose multiplier is free in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiedAtom {
    pub index: usize,
    pub prob: f64,
    pub value: f64,
    pub grad: Vec<f64>,
}

/// `{ γ̂(c + Σ_tied p_i μ_i ∇g_i) : μ ∈ [0,1]^tied, Σ_tied p_i μ_i = s }`
/// for one activity pattern.
///
/// The pattern of the open interior of an interval `Γ` holds for every
/// `γ̂` in it and has no tied scenarios; that slice is the segment
/// `{γ̂c : γ̂ ∈ gamma_span}`. Endpoint and unique-point slices have a
/// degenerate span.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slice {
    pub pattern: MultiplierPattern,
    /// `c = Σ_forced_one p_i ∇g_i`.
    pub base: Vec<f64>,
    pub atoms: Vec<TiedAtom>,
    /// Range of `γ̂` over which the pattern applies.
    pub gamma_span: (f64, f64),
    /// `Σ_forced_one p_i v_i`, kept for residual checks.
    forced_one_moment: f64,
}

impl Slice {
    fn build(
        pattern: MultiplierPattern,
        gamma_span: (f64, f64),
        dist: &FiniteDistribution,
        grads: &[Vec<f64>],
    ) -> Self {
        let n = grads.first().map_or(0, Vec::len);
        let p = dist.probs();
        let v = dist.values();
        let base = (0..n)
            .map(|j| compensated_sum(pattern.forced_one.iter().map(|&i| p[i] * grads[i][j])))
            .collect();
        let atoms = pattern
            .tied
            .iter()
            .map(|&i| TiedAtom {
                index: i,
                prob: p[i],
                value: v[i],
                grad: grads[i].clone(),
            })
            .collect();
        let forced_one_moment = compensated_sum(pattern.forced_one.iter().map(|&i| p[i] * v[i]));
        Self {
            pattern,
            base,
            atoms,
            gamma_span,
            forced_one_moment,
        }
    }

    pub fn gamma_hat(&self) -> f64 {
        self.pattern.gamma_hat
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    /// The element for tied multipliers `mu` (in atom order) at the
    /// representative `γ̂`.
    pub fn point(&self, mu: &[f64]) -> Vec<f64> {
        let g = self.gamma_hat();
        (0..self.dim())
            .map(|j| {
                g * (self.base[j]
                    + self
                        .atoms
                        .iter()
                        .zip(mu)
                        .map(|(a, m)| a.prob * m * a.grad[j])
                        .sum::<f64>())
            })
            .collect()
    }

    /// Multipliers filling the tied mass greedily, atoms visited by
    /// ascending (`maximize = false`) or descending `j`-th gradient entry.
    fn greedy_fill(&self, j: usize, maximize: bool) -> Vec<f64> {
        let mut order: Vec<usize> = (0..self.atoms.len()).collect();
        order.sort_by(|&a, &b| {
            let (ga, gb) = (self.atoms[a].grad[j], self.atoms[b].grad[j]);
            if maximize {
                gb.total_cmp(&ga)
            } else {
                ga.total_cmp(&gb)
            }
        });
        let mut mu = vec![0.0; self.atoms.len()];
        let mut remaining = self.pattern.tied_mass;
        for k in order {
            if remaining <= 0.0 {
                break;
            }
            let take = remaining.min(self.atoms[k].prob);
            mu[k] = take / self.atoms[k].prob;
            remaining -= take;
        }
        mu
    }

    /// Exact `[min, max]` of coordinate `j` over the slice.
    pub fn bounds(&self, j: usize) -> (f64, f64) {
        if self.atoms.is_empty() {
            let (a, b) = (
                self.gamma_span.0 * self.base[j],
                self.gamma_span.1 * self.base[j],
            );
            return (a.min(b), a.max(b));
        }
        let lo = self.point(&self.greedy_fill(j, false))[j];
        let hi = self.point(&self.greedy_fill(j, true))[j];
        (lo, hi)
    }

    /// `Σ p_i μ_i v_i` over the whole pattern for tied multipliers `mu`.
    pub fn moment_residual(&self, mu: &[f64]) -> f64 {
        self.forced_one_moment
            + self
                .atoms
                .iter()
                .zip(mu)
                .map(|(a, m)| a.prob * m * a.value)
                .sum::<f64>()
    }

    /// Residuals of the greedy fills for each coordinate and direction.
    pub fn greedy_residuals(&self) -> Vec<f64> {
        (0..self.dim())
            .flat_map(|j| [false, true].map(|m| self.moment_residual(&self.greedy_fill(j, m))))
            .collect()
    }

    /// The only element, when the slice is a single point.
    pub fn unique_point(&self) -> Option<Vec<f64>> {
        let lo_mu = self.greedy_fill(0, false);
        let pt = self.point(&lo_mu);
        let scale = 1e-12 * (1.0 + pt.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        (0..self.dim())
            .all(|j| {
                let (lo, hi) = self.bounds(j);
                hi - lo <= scale
            })
            .then_some(pt)
    }

    /// Images of the vertices of the multiplier polytope (each vertex has
    /// at most one fractional multiplier). `None` beyond
    /// [`MAX_VERTEX_TIED`] tied atoms.
    pub fn vertices(&self) -> Option<Vec<Vec<f64>>> {
        let t = self.atoms.len();
        if t > MAX_VERTEX_TIED {
            return None;
        }
        let s = self.pattern.tied_mass;
        let tol = 1e-12;
        let mut out: Vec<Vec<f64>> = Vec::new();
        fn push_new(out: &mut Vec<Vec<f64>>, y: Vec<f64>) {
            if !out
                .iter()
                .any(|o| o.iter().zip(&y).all(|(a, b)| (a - b).abs() <= 1e-14))
            {
                out.push(y);
            }
        }
        if t == 0 {
            for g in [self.gamma_span.0, self.gamma_span.1] {
                push_new(&mut out, self.base.iter().map(|c| g * c).collect());
            }
            return Some(out);
        }
        let mut push = |mu: Vec<f64>| push_new(&mut out, self.point(&mu));
        for ones in 0u32..(1 << t) {
            let mass: f64 = (0..t)
                .filter(|k| ones & (1 << k) != 0)
                .map(|k| self.atoms[k].prob)
                .sum();
            let mut mu: Vec<f64> = (0..t).map(|k| f64::from((ones >> k) & 1)).collect();
            if (mass - s).abs() <= tol {
                push(mu.clone());
            }
            for k in (0..t).filter(|k| ones & (1 << k) == 0) {
                let frac = (s - mass) / self.atoms[k].prob;
                if frac > tol && frac < 1.0 - tol {
                    mu[k] = frac;
                    push(mu.clone());
                    mu[k] = 0.0;
                }
            }
        }
        Some(out)
    }

    /// The slice as an affine image `y = coef·z + constant` of a polytope
    /// `{lower ≤ z ≤ upper, a_eq z = b_eq}`.
    pub fn image(&self) -> SliceImage {
        let g = self.gamma_hat();
        let n = self.dim();
        if self.atoms.is_empty() {
            let (lo, hi) = self.gamma_span;
            return SliceImage {
                lower: vec![lo],
                upper: vec![hi],
                a_eq: Vec::new(),
                b_eq: Vec::new(),
                coef: self.base.iter().map(|&c| vec![c]).collect(),
                constant: vec![0.0; n],
            };
        }
        let t = self.atoms.len();
        SliceImage {
            lower: vec![0.0; t],
            upper: vec![1.0; t],
            a_eq: vec![self.atoms.iter().map(|a| a.prob).collect()],
            b_eq: vec![self.pattern.tied_mass],
            coef: (0..n)
                .map(|j| self.atoms.iter().map(|a| g * a.prob * a.grad[j]).collect())
                .collect(),
            constant: self.base.iter().map(|&c| g * c).collect(),
        }
    }

    fn contains(&self, y: &[f64], tol: f64) -> bool {
        let img = self.image();
        let n = self.dim();
        let k = img.lower.len();
        // Variables: z then per-coordinate slacks e_j ∈ [−tol, tol].
        let mut a_eq: Vec<Vec<f64>> = img
            .a_eq
            .iter()
            .map(|r| {
                r.iter()
                    .copied()
                    .chain(std::iter::repeat_n(0.0, n))
                    .collect()
            })
            .collect();
        let mut b_eq = img.b_eq.clone();
        for j in 0..n {
            let mut row = img.coef[j].clone();
            row.extend((0..n).map(|i| if i == j { 1.0 } else { 0.0 }));
            a_eq.push(row);
            b_eq.push(y[j] - img.constant[j]);
        }
        let mut lower = img.lower.clone();
        lower.extend(std::iter::repeat_n(-tol, n));
        let mut upper = img.upper.clone();
        upper.extend(std::iter::repeat_n(tol, n));
        debug_assert_eq!(lower.len(), k + n);
        lp::lp_feasible(&a_eq, &b_eq, &lower, &upper)
    }
}

/// Affine description of a [`Slice`]: `y = coef·z + constant`, with `z`
/// ranging over `{lower ≤ z ≤ upper, a_eq z = b_eq}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceImage {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    /// `n` rows, one per coordinate of `y`.
    pub coef: Vec<Vec<f64>>,
    pub constant: Vec<f64>,
}

/// Outer estimate of the subdifferential at one point: one [`Slice`] per
/// distinct activity pattern over `Γ(x̂)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgradientSet {
    pub gamma: GammaSet,
    /// Interior pattern first (the unique point when `Γ` is a singleton),
    /// then the `Γ.lo` and `Γ.hi` patterns when `Γ` is an interval.
    pub slices: Vec<Slice>,
}

impl SubgradientSet {
    pub fn dim(&self) -> usize {
        self.slices[0].dim()
    }

    /// The slice of the interior activity pattern.
    pub fn interior(&self) -> &Slice {
        &self.slices[0]
    }

    /// The only element, when the whole set is a single point.
    pub fn unique_point(&self) -> Option<Vec<f64>> {
        let first = self.slices[0].unique_point()?;
        for s in &self.slices[1..] {
            let p = s.unique_point()?;
            if p.iter()
                .zip(&first)
                .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs()))
            {
                return None;
            }
        }
        Some(first)
    }
}

/// Builds the outer subgradient set at `x` from the minimizer interval of
/// the push-forward distribution.
pub fn subgradient_set(
    scenarios: &ScenarioSet,
    model: &dyn PerformanceModel,
    x: &[f64],
) -> Result<SubgradientSet> {
    check_dims(model, scenarios, x)?;
    let dist = push_forward(model, scenarios, x)?;
    let gamma = gamma_set(&dist)?;
    if !(gamma.lo > 0.0) {
        return Err(Error::Degenerate("minimizer interval touches zero".into()));
    }
    let grads = scenario_gradients(model, scenarios, x);
    let points = if gamma.is_unique() {
        vec![(gamma.lo, (gamma.lo, gamma.lo))]
    } else {
        vec![
            (gamma.midpoint(), (gamma.lo, gamma.hi)),
            (gamma.lo, (gamma.lo, gamma.lo)),
            (gamma.hi, (gamma.hi, gamma.hi)),
        ]
    };
    let slices = points
        .into_iter()
        .map(|(g, span)| {
            let pattern = activity_pattern(&dist, g, tie_tolerance(&dist, g))?;
            Ok(Slice::build(pattern, span, &dist, &grads))
        })
        .collect::<Result<Vec<_>>>()?;
    if !gamma.is_unique() && !slices[0].atoms.is_empty() {
        // A breakpoint inside the flat stretch would contradict the slope
        // jump at every breakpoint.
        return Err(Error::Degenerate(
            "tied scenarios inside the minimizer interval".into(),
        ));
    }
    Ok(SubgradientSet { gamma, slices })
}

/// Exact `[min, max]` of coordinate `j` over all slices.
pub fn coordinate_bounds(set: &SubgradientSet, j: usize) -> (f64, f64) {
    set.slices
        .iter()
        .map(|s| s.bounds(j))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
            (lo.min(a), hi.max(b))
        })
}

/// Whether some slice contains `y` within `tol` per coordinate.
pub fn contains(set: &SubgradientSet, y: &[f64], tol: f64) -> bool {
    y.len() == set.dim() && set.slices.iter().any(|s| s.contains(y, tol))
}

/// Closed-form gradient for distinct outcome values: with values sorted
/// ascending and `j` the index where `Σ_{i≥j} p_i g_i < 0 < Σ_{i>j} p_i g_i`,
/// returns `Σ_{i>j} p_i ((g_i / g_j²) ∇g_j − (1/g_j) ∇g_i)`.
pub fn distinct_outcome_gradient(
    scenarios: &ScenarioSet,
    model: &dyn PerformanceModel,
    x: &[f64],
) -> Result<Vec<f64>> {
    check_dims(model, scenarios, x)?;
    let dist = push_forward(model, scenarios, x)?;
    match crate::risk::regime(&dist) {
        crate::risk::Regime::Interior => {}
        r => {
            return Err(Error::WrongRegime(format!(
                "closed-form gradient requires the interior regime, got {}",
                r.as_str()
            )))
        }
    }
    let grads = scenario_gradients(model, scenarios, x);
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| dist.values()[a].total_cmp(&dist.values()[b]));
    let v: Vec<f64> = order.iter().map(|&i| dist.values()[i]).collect();
    let p: Vec<f64> = order.iter().map(|&i| dist.probs()[i]).collect();

    let gap_tol = 1e-9 * dist.max_abs();
    if v.windows(2).any(|w| w[1] - w[0] <= gap_tol) {
        return Err(Error::NotApplicable(
            "outcome values are not distinct".into(),
        ));
    }

    // tail[k] = Σ_{i≥k} p_i v_i in sorted order.
    let nu = v.len();
    let mut tail = vec![0.0; nu + 1];
    for k in (0..nu).rev() {
        tail[k] = tail[k + 1] + p[k] * v[k];
    }
    let j = (0..nu)
        .find(|&k| tail[k] < 0.0 && 0.0 < tail[k + 1])
        .ok_or_else(|| Error::NotApplicable("no index separates the tail sums".into()))?;

    let gj = v[j];
    let grad_j = &grads[order[j]];
    let n = model.dim();
    let mut out = vec![0.0; n];
    for k in j + 1..nu {
        let gi = &grads[order[k]];
        for c in 0..n {
            out[c] += p[k] * ((v[k] / (gj * gj)) * grad_j[c] - gi[c] / gj);
        }
    }
    Ok(out)
}
