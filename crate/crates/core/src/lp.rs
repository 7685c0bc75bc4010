//! Small dense two-phase simplex with Bland's rule.
//!
//! Sized for the multiplier polytopes of the subgradient sets: a handful of
//! rows and at most a few dozen bounded variables. Every call owns its
//! tableau.

/// Residual tolerance for deciding feasibility.
pub const FEAS_TOL: f64 = 1e-9;

const PIVOT_EPS: f64 = 1e-12;
const MAX_PIVOTS: usize = 100_000;

/// `min cost·x` subject to `a_eq x = b_eq`, `a_ub x ≤ b_ub`,
/// `lower ≤ x ≤ upper`. Bounds may be infinite.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

/// `μ_i = offset + Σ coef · z_col` over the nonnegative standard-form
/// columns.
struct VarMap {
    offset: f64,
    terms: Vec<(usize, f64)>,
}

struct Standard {
    maps: Vec<VarMap>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    ncols: usize,
}

fn to_standard(lp: &LinearProgram) -> Standard {
    let nvar = lp.lower.len();
    let mut ncols = 0;
    let mut maps = Vec::with_capacity(nvar);
    // Extra rows z + s = u − l for doubly bounded variables.
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for i in 0..nvar {
        let (l, u) = (lp.lower[i], lp.upper[i]);
        let map = if l.is_finite() {
            let z = ncols;
            ncols += 1;
            if u.is_finite() {
                bound_rows.push((z, u - l));
            }
            VarMap {
                offset: l,
                terms: vec![(z, 1.0)],
            }
        } else if u.is_finite() {
            let z = ncols;
            ncols += 1;
            VarMap {
                offset: u,
                terms: vec![(z, -1.0)],
            }
        } else {
            let z = ncols;
            ncols += 2;
            VarMap {
                offset: 0.0,
                terms: vec![(z, 1.0), (z + 1, -1.0)],
            }
        };
        maps.push(map);
    }
    let first_bound_slack = ncols;
    ncols += bound_rows.len();
    let first_ub_slack = ncols;
    ncols += lp.a_ub.len();

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut push_row = |coeffs: &[f64], b: f64, slack: Option<usize>, ncols: usize| {
        let mut row = vec![0.0; ncols];
        let mut b = b;
        for (i, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            b -= a * maps[i].offset;
            for &(col, c) in &maps[i].terms {
                row[col] += a * c;
            }
        }
        if let Some(s) = slack {
            row[s] = 1.0;
        }
        rows.push(row);
        rhs.push(b);
    };
    for (a, &b) in lp.a_eq.iter().zip(&lp.b_eq) {
        push_row(a, b, None, ncols);
    }
    for (k, (a, &b)) in lp.a_ub.iter().zip(&lp.b_ub).enumerate() {
        push_row(a, b, Some(first_ub_slack + k), ncols);
    }
    for (k, &(z, width)) in bound_rows.iter().enumerate() {
        let mut row = vec![0.0; ncols];
        row[z] = 1.0;
        row[first_bound_slack + k] = 1.0;
        rows.push(row);
        rhs.push(width);
    }

    let mut cost = vec![0.0; ncols];
    for (i, &c) in lp.cost.iter().enumerate() {
        for &(col, k) in &maps[i].terms {
            cost[col] += c * k;
        }
    }
    Standard {
        maps,
        rows,
        rhs,
        cost,
        ncols,
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
}

enum Phase {
    Optimal,
    Unbounded,
    Stalled,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        for k in 0..self.rows.len() {
            if k == r {
                continue;
            }
            let f = self.rows[k][c];
            if f != 0.0 {
                for (v, pv) in self.rows[k].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.rhs[k] -= f * pivot_rhs;
            }
        }
        self.basis[r] = c;
    }

    /// Primal simplex over columns `0..allowed` with Bland's rule.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Phase {
        for _ in 0..MAX_PIVOTS {
            let entering = (0..allowed).find(|&j| {
                let reduced = cost[j]
                    - self
                        .basis
                        .iter()
                        .zip(&self.rows)
                        .map(|(&b, row)| cost[b] * row[j])
                        .sum::<f64>();
                reduced < -PIVOT_EPS && !self.basis.contains(&j)
            });
            let Some(c) = entering else {
                return Phase::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][c];
                if a > PIVOT_EPS {
                    let ratio = self.rhs[r].max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, best)) => {
                            ratio < best - PIVOT_EPS
                                || (ratio <= best + PIVOT_EPS && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Phase::Unbounded;
            };
            if ratio == 0.0 {
                log::debug!("degenerate pivot: column {c} enters at row {r} with zero step");
            }
            self.pivot(r, c);
        }
        log::warn!("simplex pivot cap of {MAX_PIVOTS} reached");
        Phase::Stalled
    }
}

struct Solved {
    x: Vec<f64>,
    tableau: Tableau,
    std: Standard,
}

fn recover(std: &Standard, tab: &Tableau) -> Vec<f64> {
    let mut z = vec![0.0; std.ncols];
    for (&b, &v) in tab.basis.iter().zip(&tab.rhs) {
        if b < std.ncols {
            z[b] = v.max(0.0);
        }
    }
    std.maps
        .iter()
        .map(|m| m.offset + m.terms.iter().map(|&(c, k)| k * z[c]).sum::<f64>())
        .collect()
}

/// Largest violation of any constraint or bound at `x`.
pub fn max_violation(lp: &LinearProgram, x: &[f64]) -> f64 {
    let dot = |a: &[f64]| a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
    let eq = lp
        .a_eq
        .iter()
        .zip(&lp.b_eq)
        .map(|(a, b)| (dot(a) - b).abs());
    let ub = lp
        .a_ub
        .iter()
        .zip(&lp.b_ub)
        .map(|(a, b)| (dot(a) - b).max(0.0));
    let bounds = x
        .iter()
        .zip(lp.lower.iter().zip(&lp.upper))
        .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0));
    eq.chain(ub).chain(bounds).fold(0.0, f64::max)
}

fn phase_one(lp: &LinearProgram) -> Option<Solved> {
    let std = to_standard(lp);
    let m = std.rows.len();
    let n = std.ncols;
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for (r, (row, &b)) in std.rows.iter().zip(&std.rhs).enumerate() {
        let sign = if b < 0.0 { -1.0 } else { 1.0 };
        let mut full: Vec<f64> = row.iter().map(|v| sign * v).collect();
        full.extend((0..m).map(|k| if k == r { 1.0 } else { 0.0 }));
        rows.push(full);
        rhs.push(sign * b);
    }
    let mut tab = Tableau {
        rows,
        rhs,
        basis: (n..n + m).collect(),
    };
    let mut cost = vec![0.0; n + m];
    cost[n..].iter_mut().for_each(|c| *c = 1.0);
    if let Phase::Stalled = tab.optimize(&cost, n + m) {
        return None;
    }

    // Pivot remaining artificials out where a structural column allows it;
    // rows with none are redundant and keep a zero artificial.
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(c) = (0..n).find(|&c| tab.rows[r][c].abs() > 1e-9) {
                tab.pivot(r, c);
            }
        }
    }
    let x = recover(&std, &tab);
    (max_violation(lp, &x) <= FEAS_TOL).then_some(Solved {
        x,
        tableau: tab,
        std,
    })
}

/// Solves the program with a two-phase simplex.
pub fn solve(lp: &LinearProgram) -> LpOutcome {
    let Some(Solved {
        tableau: mut tab,
        std,
        ..
    }) = phase_one(lp)
    else {
        return LpOutcome::Infeasible;
    };
    let n = std.ncols;
    let mut cost = std.cost.clone();
    cost.extend(std::iter::repeat_n(0.0, tab.rows.len()));
    match tab.optimize(&cost, n) {
        Phase::Unbounded => LpOutcome::Unbounded,
        Phase::Optimal | Phase::Stalled => {
            let x = recover(&std, &tab);
            let value = lp.cost.iter().zip(&x).map(|(c, x)| c * x).sum();
            LpOutcome::Optimal { x, value }
        }
    }
}

/// Decides whether `{μ : lower ≤ μ ≤ upper, a_eq μ = b_eq}` is nonempty,
/// with residual tolerance [`FEAS_TOL`].
pub fn lp_feasible(a_eq: &[Vec<f64>], b_eq: &[f64], lower: &[f64], upper: &[f64]) -> bool {
    feasible_point(a_eq, b_eq, lower, upper).is_some()
}

/// A point of the set tested by [`lp_feasible`], if one exists.
pub fn feasible_point(
    a_eq: &[Vec<f64>],
    b_eq: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Option<Vec<f64>> {
    let lp = LinearProgram {
        cost: vec![0.0; lower.len()],
        a_eq: a_eq.to_vec(),
        b_eq: b_eq.to_vec(),
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        ..Default::default()
    };
    phase_one(&lp).map(|s| s.x)
}
