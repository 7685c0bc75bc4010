//! Box-constrained minimization of the buffered failure probability by
//! projected subgradient steps, and the first-order stationarity test
//! `∃ y ∈ Y(x̂)` with `−y` in the normal cone of the box at `x̂`.
//!
//! The test is necessary for local optimality only; a `true` result means
//! stationary, not optimal.

use log::debug;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpOutcome};
use crate::risk::{bpoe, BpoeMethod, Regime};
use crate::scenario::{check_dims, push_forward, PerformanceModel, ScenarioSet};
use crate::subgradient::{subgradient_set, Slice};

/// Relative tolerance for treating a coordinate as sitting on a bound.
pub const BOUND_REL_TOL: f64 = 1e-9;

/// Residual at which [`projected_subgradient`] stops.
pub const STOP_RESIDUAL: f64 = 1e-6;

/// Axis-aligned box; infinite bounds are allowed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Box {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Box {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (l, u) in lower.iter().zip(&upper) {
            if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                return Err(Error::BadParameter(format!("invalid box side [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((v, l), u)| l <= v && v <= u)
    }
}

/// Componentwise clamp of `x` into the box.
pub fn project_box(x: &[f64], bx: &Box) -> Vec<f64> {
    x.iter()
        .zip(bx.lower.iter().zip(&bx.upper))
        .map(|(&v, (&l, &u))| v.clamp(l, u))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Inside,
    Lower,
    Upper,
    /// Degenerate side `lower = upper`: the normal cone is the whole line.
    Both,
}

fn on_bound(v: f64, bound: f64) -> bool {
    bound.is_finite() && (v - bound).abs() <= BOUND_REL_TOL * bound.abs().max(1.0)
}

fn sides(x: &[f64], bx: &Box) -> Vec<Side> {
    x.iter()
        .zip(bx.lower.iter().zip(&bx.upper))
        .map(|(&v, (&l, &u))| match (on_bound(v, l), on_bound(v, u)) {
            (true, true) => Side::Both,
            (true, false) => Side::Lower,
            (false, true) => Side::Upper,
            (false, false) => Side::Inside,
        })
        .collect()
}

/// Smallest `t ≥ 0` such that some `y` in the slice satisfies the sign
/// conditions up to `t` in every coordinate.
fn slice_residual(slice: &Slice, sides: &[Side]) -> f64 {
    let img = slice.image();
    let k = img.lower.len();
    let mut cost = vec![0.0; k + 1];
    cost[k] = 1.0;
    let mut a_ub = Vec::new();
    let mut b_ub = Vec::new();
    for (j, side) in sides.iter().enumerate() {
        let row = &img.coef[j];
        let c = img.constant[j];
        // y_j ≤ t
        if matches!(side, Side::Inside | Side::Upper) {
            let mut r = row.clone();
            r.push(-1.0);
            a_ub.push(r);
            b_ub.push(-c);
        }
        // y_j ≥ −t
        if matches!(side, Side::Inside | Side::Lower) {
            let mut r: Vec<f64> = row.iter().map(|v| -v).collect();
            r.push(-1.0);
            a_ub.push(r);
            b_ub.push(c);
        }
    }
    let mut lower = img.lower.clone();
    lower.push(0.0);
    let mut upper = img.upper.clone();
    upper.push(f64::INFINITY);
    let program = LinearProgram {
        cost,
        a_eq: img
            .a_eq
            .iter()
            .map(|r| r.iter().copied().chain([0.0]).collect())
            .collect(),
        b_eq: img.b_eq.clone(),
        a_ub,
        b_ub,
        lower,
        upper,
    };
    match lp::solve(&program) {
        LpOutcome::Optimal { value, .. } => value.max(0.0),
        _ => f64::INFINITY,
    }
}

/// Whether some element `y` of the outer subgradient set at `x` has `−y` in
/// the normal cone of the box, with the smallest per-coordinate violation
/// over slices (reported as 0 when within `tol`).
pub fn stationarity_check(
    scenarios: &ScenarioSet,
    model: &dyn PerformanceModel,
    x: &[f64],
    bx: &Box,
    tol: f64,
) -> Result<(bool, f64)> {
    check_dims(model, scenarios, x)?;
    if bx.dim() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: bx.dim(),
        });
    }
    let dist = push_forward(model, scenarios, x)?;
    let r = bpoe(&dist, BpoeMethod::MinFormula)?;
    if r.regime != Regime::Interior {
        return Err(Error::WrongRegime(format!(
            "regime at x is {}",
            r.regime.as_str()
        )));
    }
    let set = subgradient_set(scenarios, model, x)?;
    let sides = sides(x, bx);
    let residual = set
        .slices
        .iter()
        .map(|s| slice_residual(s, &sides))
        .fold(f64::INFINITY, f64::min);
    if residual <= tol {
        Ok((true, 0.0))
    } else {
        Ok((false, residual))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeReport {
    pub x_final: Vec<f64>,
    pub bpoe_final: f64,
    pub iterations: usize,
    pub stationarity_residual: f64,
    /// `(iteration, x, bpoe)` for every visited iterate.
    pub trace: Vec<(usize, Vec<f64>, f64)>,
}

/// Projected subgradient descent with steps `step0 / √(k+1)`. The direction
/// is the unique point of the interior-pattern slice, or the midpoint of its
/// coordinate bounds when it has tied scenarios.
pub fn projected_subgradient(
    scenarios: &ScenarioSet,
    model: &dyn PerformanceModel,
    x0: &[f64],
    bx: &Box,
    max_iter: usize,
    step0: f64,
) -> Result<OptimizeReport> {
    check_dims(model, scenarios, x0)?;
    if !bx.contains(x0) {
        return Err(Error::BadParameter(
            "starting point lies outside the box".into(),
        ));
    }
    if !(step0 > 0.0 && step0.is_finite()) || max_iter == 0 {
        return Err(Error::BadParameter(format!(
            "need step0 > 0 and max_iter ≥ 1, got {step0} and {max_iter}"
        )));
    }
    let mut x = x0.to_vec();
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    for k in 0..max_iter {
        let dist = push_forward(model, scenarios, &x)?;
        let value = bpoe(&dist, BpoeMethod::MinFormula)?;
        if value.regime != Regime::Interior {
            return Err(Error::IterateLeftRegime { iteration: k, x });
        }
        trace.push((k, x.clone(), value.value));
        residual = stationarity_check(scenarios, model, &x, bx, STOP_RESIDUAL)?.1;
        if residual <= STOP_RESIDUAL || k + 1 == max_iter {
            break;
        }
        let set = subgradient_set(scenarios, model, &x)?;
        let slice = set.interior();
        let (y, rule) = match slice.unique_point() {
            Some(p) => (p, "interior point"),
            None => (
                (0..x.len())
                    .map(|j| {
                        let (lo, hi) = slice.bounds(j);
                        0.5 * (lo + hi)
                    })
                    .collect(),
                "bounds midpoint",
            ),
        };
        let step = step0 / ((k + 1) as f64).sqrt();
        debug!(
            "iteration {k}: bpoe {} via {rule}, y = {y:?}, step {step}",
            value.value
        );
        let moved: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| xi - step * yi).collect();
        x = project_box(&moved, bx);
    }
    let (_, x_final, bpoe_final) = trace.last().cloned().expect("at least one iterate");
    Ok(OptimizeReport {
        x_final,
        bpoe_final,
        iterations: trace.len(),
        stationarity_residual: residual,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{
        bernoulli_scenarios, network_flow_model, AffineModel, ScalarLinearModel,
    };

    fn unit_box(lo: f64, hi: f64) -> Box {
        Box::new(vec![lo], vec![hi]).unwrap()
    }

    /// `g = b` with no dependence on `x`.
    fn flat_instance() -> (ScenarioSet, AffineModel) {
        let set = ScenarioSet::new(
            vec![
                AffineModel::encode(-1.0, &[0.0]),
                AffineModel::encode(0.5, &[0.0]),
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        (set, AffineModel::new(1))
    }

    #[test]
    fn projection() {
        assert_eq!(project_box(&[3.0], &unit_box(0.0, 2.0)), vec![2.0]);
        assert_eq!(project_box(&[1.5], &unit_box(0.0, 2.0)), vec![1.5]);
        let b = Box::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(project_box(&[-1.0, 5.0], &b), vec![0.0, 1.0]);
        let open = Box::new(vec![f64::NEG_INFINITY], vec![f64::INFINITY]).unwrap();
        assert_eq!(project_box(&[-1e300], &open), vec![-1e300]);
    }

    #[test]
    fn invalid_boxes() {
        assert!(Box::new(vec![1.0], vec![0.0]).is_err());
        assert!(Box::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(Box::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(Box::new(vec![f64::INFINITY], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn network_stationarity() {
        let (set, model) = network_flow_model(0.1).unwrap();
        let bx = unit_box(2.5, 5.0);
        assert_eq!(
            stationarity_check(&set, &model, &[5.0], &bx, 1e-9).unwrap(),
            (true, 0.0)
        );
        let (ok, r) = stationarity_check(&set, &model, &[3.0], &bx, 1e-9).unwrap();
        assert!(!ok);
        let tau = 1.0 - 0.9f64.powi(4) - 2.0 * 0.9f64.powi(3) * 0.1;
        assert!((r - tau / 4.0).abs() < 1e-9, "{r}");
        // At the lower bound the derivative points inward.
        assert!(
            !stationarity_check(&set, &model, &[2.5], &bx, 1e-9)
                .unwrap()
                .0
        );
    }

    #[test]
    fn kink_stationarity_uses_whole_interval() {
        let (set, model) = network_flow_model(0.1).unwrap();
        let x_hat = (1.0 - 0.9f64.powi(4)) / (2.0 * 0.9f64.powi(3) * 0.1);
        // Every element of Y is negative, so x̂ is stationary only as an
        // upper bound.
        assert!(
            stationarity_check(&set, &model, &[x_hat], &unit_box(2.0, x_hat), 1e-9)
                .unwrap()
                .0
        );
        let (ok, r) =
            stationarity_check(&set, &model, &[x_hat], &unit_box(2.0, 3.0), 1e-9).unwrap();
        assert!(!ok);
        assert!((r - 0.0392).abs() < 1e-3, "{r}");
    }

    #[test]
    fn zero_gradient_is_stationary() {
        let (set, model) = flat_instance();
        assert!(
            stationarity_check(&set, &model, &[0.3], &unit_box(0.0, 1.0), 1e-9)
                .unwrap()
                .0
        );
        let rep =
            projected_subgradient(&set, &model, &[0.3], &unit_box(0.0, 1.0), 50, 1.0).unwrap();
        assert_eq!(rep.x_final, vec![0.3]);
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.stationarity_residual, 0.0);
    }

    #[test]
    fn wrong_regime() {
        let set = ScenarioSet::new(vec![AffineModel::encode(1.0, &[0.0])], vec![1.0]).unwrap();
        let model = AffineModel::new(1);
        assert!(matches!(
            stationarity_check(&set, &model, &[0.0], &unit_box(-1.0, 1.0), 1e-9),
            Err(Error::WrongRegime(_))
        ));
    }

    #[test]
    fn leaving_the_regime_is_reported() {
        // g = xξ − 1 on {0, 1}: regime is zero for x ≤ 1.
        let set = bernoulli_scenarios();
        let err = projected_subgradient(
            &set,
            &ScalarLinearModel,
            &[1.5],
            &unit_box(0.5, 1.8),
            10,
            2.0,
        )
        .unwrap_err();
        match err {
            Error::IterateLeftRegime { iteration, x } => {
                assert_eq!(iteration, 1);
                assert_eq!(x, vec![0.5]);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn network_descends_to_upper_bound() {
        let (set, model) = network_flow_model(0.1).unwrap();
        let bx = unit_box(2.5, 5.0);
        let rep = projected_subgradient(&set, &model, &[2.5], &bx, 500, 20.0).unwrap();
        assert!((rep.x_final[0] - 5.0).abs() < 1e-3, "{rep:?}");
        assert!(rep.stationarity_residual <= 1e-6);
        assert!(
            stationarity_check(&set, &model, &rep.x_final, &bx, 1e-6)
                .unwrap()
                .0
        );
        assert!(rep.trace.iter().all(|(_, x, _)| bx.contains(x)));
        assert!(rep.trace.windows(2).all(|w| w[1].2 <= w[0].2 + 1e-6));
        assert_eq!(rep.iterations, rep.trace.len());
        assert_eq!(rep.bpoe_final, rep.trace.last().unwrap().2);
    }

    #[test]
    fn bernoulli_descends_to_lower_bound() {
        let set = bernoulli_scenarios();
        let bx = unit_box(1.2, 1.8);
        let rep = projected_subgradient(&set, &ScalarLinearModel, &[1.5], &bx, 100, 1.0).unwrap();
        assert!((rep.x_final[0] - 1.2).abs() < 1e-3);
        assert!((rep.bpoe_final - 0.6).abs() < 1e-9);
        assert!(
            stationarity_check(&set, &ScalarLinearModel, &rep.x_final, &bx, 1e-6)
                .unwrap()
                .0
        );
        assert!(
            !stationarity_check(&set, &ScalarLinearModel, &[1.5], &bx, 1e-6)
                .unwrap()
                .0
        );
        assert!(rep.trace.windows(2).all(|w| w[1].2 <= w[0].2 + 1e-6));
    }

    #[test]
    fn start_outside_box_rejected() {
        let set = bernoulli_scenarios();
        assert!(matches!(
            projected_subgradient(
                &set,
                &ScalarLinearModel,
                &[2.0],
                &unit_box(1.2, 1.8),
                10,
                1.0
            ),
            Err(Error::BadParameter(_))
        ));
    }

    #[test]
    fn stationarity_scale_invariant() {
        // Scaling every (b, a) by c scales g by c.
        let (set, _) = network_flow_model(0.1).unwrap();
        let model = crate::scenario::NetworkFlowModel;
        let to_affine = |c: f64| {
            let scen = set
                .scenarios()
                .iter()
                .map(|xi| {
                    let (b, a) = model.coefficients(xi);
                    AffineModel::encode(c * b, &[c * a])
                })
                .collect();
            ScenarioSet::new(scen, set.probs().to_vec()).unwrap()
        };
        let bx = unit_box(2.5, 5.0);
        for x in [3.0, 4.0, 5.0] {
            let base =
                stationarity_check(&to_affine(1.0), &AffineModel::new(1), &[x], &bx, 1e-9).unwrap();
            for c in [0.01, 7.0] {
                let s = stationarity_check(&to_affine(c), &AffineModel::new(1), &[x], &bx, 1e-9)
                    .unwrap();
                assert_eq!(s.0, base.0);
                assert!((s.1 - base.1).abs() < 1e-9);
            }
        }
    }
}
