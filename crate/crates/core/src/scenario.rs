//! Finite distributions, scenario sets and performance models.
//!
//! A [`PerformanceModel`] maps an outcome `ξ` of the random vector and a
//! decision `x` to the scalar quantity of interest `g(ξ, x)`; failure means
//! `g > 0`. Pushing a [`ScenarioSet`] through a model at a fixed `x` yields
//! the [`FiniteDistribution`] every risk measure in this crate consumes.
//! Tied outcome values are never merged: multipliers are indexed by
//! scenario, so index identity must survive the push-forward.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities handed to constructors must sum to one within this.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// File loaders renormalize probabilities that sum to one within this and
/// reject anything further off.
pub const RENORMALIZE_TOL: f64 = 1e-9;

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in iter {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::BadProbabilities("no outcomes".into()));
    }
    if let Some((i, p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !(p.is_finite() && **p > 0.0))
    {
        return Err(Error::BadProbabilities(format!(
            "probability {p} at index {i} is not positive"
        )));
    }
    let total = compensated_sum(probs.iter().copied());
    if (total - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::BadProbabilities(format!(
            "probabilities sum to {total}"
        )));
    }
    Ok(())
}

/// Outcomes of a scalar random value with positive probabilities.
///
/// Values need not be distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                got: probs.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::BadParameter(format!(
                "outcome value {v} is not finite"
            )));
        }
        check_probs(&probs)?;
        Ok(Self { values, probs })
    }

    /// Equal weight `1/N` on each value (the empirical distribution of a
    /// sample).
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::BadProbabilities("no outcomes".into()));
        }
        let p = 1.0 / values.len() as f64;
        let probs = vec![p; values.len()];
        Self::new(values, probs)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.iter().map(|(v, p)| v * p))
    }

    /// Largest absolute outcome value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The distribution of `c · value`, same probabilities.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
            probs: self.probs.clone(),
        }
    }
}

/// Outcome vectors `ξ^i ∈ ℝ^m` of the random vector with their
/// probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    scenarios: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl ScenarioSet {
    pub fn new(scenarios: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if scenarios.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: scenarios.len(),
                got: probs.len(),
            });
        }
        check_probs(&probs)?;
        let m = scenarios[0].len();
        if let Some(s) = scenarios.iter().find(|s| s.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: s.len(),
            });
        }
        Ok(Self { scenarios, probs })
    }

    pub fn scenarios(&self) -> &[Vec<f64>] {
        &self.scenarios
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Dimension `m` of each outcome vector.
    pub fn dim(&self) -> usize {
        self.scenarios[0].len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.scenarios
            .iter()
            .map(Vec::as_slice)
            .zip(self.probs.iter().copied())
    }
}

/// The quantity of interest `g(ξ, x)` and its gradient in `x`.
pub trait PerformanceModel: Send + Sync {
    /// Decision dimension `n`.
    fn dim(&self) -> usize;

    /// Required outcome dimension `m`, if the model checks it.
    fn scenario_dim(&self) -> Option<usize> {
        None
    }

    fn eval(&self, xi: &[f64], x: &[f64]) -> f64;

    fn grad(&self, xi: &[f64], x: &[f64]) -> Vec<f64>;
}

/// Affine in `x` per scenario: the outcome vector carries its own
/// coefficients as `ξ = (b, a_1, …, a_n)` and `g(ξ, x) = a·x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AffineModel {
    dim: usize,
}

impl AffineModel {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    /// Outcome vector encoding `(b, a)`.
    pub fn encode(b: f64, a: &[f64]) -> Vec<f64> {
        let mut xi = Vec::with_capacity(a.len() + 1);
        xi.push(b);
        xi.extend_from_slice(a);
        xi
    }
}

impl PerformanceModel for AffineModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn scenario_dim(&self) -> Option<usize> {
        Some(self.dim + 1)
    }

    fn eval(&self, xi: &[f64], x: &[f64]) -> f64 {
        xi[0] + xi[1..].iter().zip(x).map(|(a, x)| a * x).sum::<f64>()
    }

    fn grad(&self, xi: &[f64], _x: &[f64]) -> Vec<f64> {
        xi[1..].to_vec()
    }
}

/// Flow shortfall of the four-component network: components 1 and 2 carry
/// `2x`, components 3 and 4 carry `x`, and the outcome `ξ ∈ {0,1}^4` marks
/// survivors with 1.
///
/// `g = 1 − 2x` if every component survives, `1 − x` if exactly one of
/// components 3 and 4 fails while 1 and 2 survive, and `1` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NetworkFlowModel;

impl NetworkFlowModel {
    /// Affine coefficients `(b, a)` of the outcome.
    pub fn coefficients(&self, xi: &[f64]) -> (f64, f64) {
        let up = |j: usize| xi[j] == 1.0;
        let slope = if up(0) && up(1) {
            match (up(2), up(3)) {
                (true, true) => -2.0,
                (false, true) | (true, false) => -1.0,
                (false, false) => 0.0,
            }
        } else {
            0.0
        };
        (1.0, slope)
    }
}

impl PerformanceModel for NetworkFlowModel {
    fn dim(&self) -> usize {
        1
    }

    fn scenario_dim(&self) -> Option<usize> {
        Some(4)
    }

    fn eval(&self, xi: &[f64], x: &[f64]) -> f64 {
        let (b, a) = self.coefficients(xi);
        b + a * x[0]
    }

    fn grad(&self, xi: &[f64], _x: &[f64]) -> Vec<f64> {
        vec![self.coefficients(xi).1]
    }
}

/// `g(ξ, x) = x·ξ − 1` for scalar `ξ` and `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScalarLinearModel;

impl PerformanceModel for ScalarLinearModel {
    fn dim(&self) -> usize {
        1
    }

    fn scenario_dim(&self) -> Option<usize> {
        Some(1)
    }

    fn eval(&self, xi: &[f64], x: &[f64]) -> f64 {
        x[0] * xi[0] - 1.0
    }

    fn grad(&self, xi: &[f64], _x: &[f64]) -> Vec<f64> {
        vec![xi[0]]
    }
}

/// Newsvendor-style loss `g(ξ, x) = max{0, β(x − ξ)} − threshold`.
///
/// Nonsmooth in `x` at `x = ξ`; the gradient there is taken from the flat
/// side. The plain loss (threshold 0) is nonnegative and so always in the
/// `p̄ = 1` regime; a positive threshold shifts it into the interior regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewsvendorModel {
    pub beta: f64,
    pub threshold: f64,
}

impl PerformanceModel for NewsvendorModel {
    fn dim(&self) -> usize {
        1
    }

    fn scenario_dim(&self) -> Option<usize> {
        Some(1)
    }

    fn eval(&self, xi: &[f64], x: &[f64]) -> f64 {
        (self.beta * (x[0] - xi[0])).max(0.0) - self.threshold
    }

    fn grad(&self, xi: &[f64], x: &[f64]) -> Vec<f64> {
        if self.beta * (x[0] - xi[0]) > 0.0 {
            vec![self.beta]
        } else {
            vec![0.0]
        }
    }
}

/// The 16 product-Bernoulli outcomes of the network, each component failing
/// independently with probability `rho`, paired with the flow-shortfall
/// model.
pub fn network_flow_model(rho: f64) -> Result<(ScenarioSet, NetworkFlowModel)> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::BadParameter(format!(
            "rho = {rho} must lie in (0, 1)"
        )));
    }
    let mut scenarios = Vec::with_capacity(16);
    let mut probs = Vec::with_capacity(16);
    for mask in 0..16u32 {
        // Bit j set means component j+1 failed; mask 0 is all-up.
        let xi: Vec<f64> = (0..4)
            .map(|j| if mask & (1 << j) == 0 { 1.0 } else { 0.0 })
            .collect();
        let p = xi
            .iter()
            .map(|&s| if s == 1.0 { 1.0 - rho } else { rho })
            .product();
        scenarios.push(xi);
        probs.push(p);
    }
    Ok((ScenarioSet::new(scenarios, probs)?, NetworkFlowModel))
}

/// Bernoulli outcomes `{0, 1}` with equal probabilities, for use with
/// [`ScalarLinearModel`].
pub fn bernoulli_scenarios() -> ScenarioSet {
    ScenarioSet {
        scenarios: vec![vec![0.0], vec![1.0]],
        probs: vec![0.5, 0.5],
    }
}

/// Law of `g(ξ, x)` over the scenarios: one value per scenario, in order,
/// with the scenario probabilities. Ties are kept.
pub fn push_forward(
    model: &dyn PerformanceModel,
    scenarios: &ScenarioSet,
    x: &[f64],
) -> Result<FiniteDistribution> {
    check_dims(model, scenarios, x)?;
    let values = scenarios.iter().map(|(xi, _)| model.eval(xi, x)).collect();
    FiniteDistribution::new(values, scenarios.probs.clone())
}

pub(crate) fn check_dims(
    model: &dyn PerformanceModel,
    scenarios: &ScenarioSet,
    x: &[f64],
) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    if let Some(m) = model.scenario_dim() {
        if scenarios.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: scenarios.dim(),
            });
        }
    }
    Ok(())
}

/// Gradients `∇_x g(ξ^i, x)` for every scenario, in order.
pub(crate) fn scenario_gradients(
    model: &dyn PerformanceModel,
    scenarios: &ScenarioSet,
    x: &[f64],
) -> Vec<Vec<f64>> {
    scenarios.iter().map(|(xi, _)| model.grad(xi, x)).collect()
}

/// On-disk scenario formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioFormat {
    Csv,
    Json,
}

impl ScenarioFormat {
    /// `.json` files are JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

#[derive(Debug, Deserialize)]
struct JsonScenario {
    prob: f64,
    b: f64,
    a: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct JsonScenarioFile {
    scenarios: Vec<JsonScenario>,
}

/// Reads affine scenarios from `prob,b,a1,...,an` CSV or the equivalent
/// JSON document.
pub fn load_scenarios(path: &Path, format: ScenarioFormat) -> Result<(ScenarioSet, AffineModel)> {
    let text = fs::read_to_string(path)?;
    match format {
        ScenarioFormat::Csv => parse_csv(&text),
        ScenarioFormat::Json => parse_json(&text),
    }
}

/// Parses the CSV scenario format.
pub fn parse_csv(text: &str) -> Result<(ScenarioSet, AffineModel)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let malformed = |line: usize, reason: String| Error::MalformedFile { line, reason };

    let header = reader
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let n = header.len().checked_sub(2).filter(|&n| n > 0);
    let header_ok = n.is_some_and(|n| {
        header.get(0) == Some("prob")
            && header.get(1) == Some("b")
            && (1..=n).all(|j| header.get(j + 1) == Some(format!("a{j}").as_str()))
    });
    let n = match n {
        Some(n) if header_ok => n,
        _ => {
            return Err(malformed(
                1,
                format!(
                    "expected header prob,b,a1,...,an, got {:?}",
                    header.iter().collect::<Vec<_>>()
                ),
            ))
        }
    };

    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| malformed(line, e.to_string()))?;
        if record.len() != n + 2 {
            return Err(malformed(
                line,
                format!("expected {} fields, got {}", n + 2, record.len()),
            ));
        }
        let fields = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| malformed(line, format!("cannot parse {f:?} as a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((fields[0], fields[1], fields[2..].to_vec()));
    }
    build_affine(rows, n)
}

/// Parses the JSON scenario format `{"scenarios":[{"prob":…,"b":…,"a":[…]}]}`.
pub fn parse_json(text: &str) -> Result<(ScenarioSet, AffineModel)> {
    let file: JsonScenarioFile = serde_json::from_str(text)?;
    let n = file
        .scenarios
        .first()
        .map(|s| s.a.len())
        .ok_or_else(|| Error::MalformedFile {
            line: 1,
            reason: "no scenarios".into(),
        })?;
    let mut rows = Vec::with_capacity(file.scenarios.len());
    for (k, s) in file.scenarios.into_iter().enumerate() {
        if s.a.len() != n || n == 0 {
            return Err(Error::MalformedFile {
                line: 1,
                reason: format!("scenario {k} has {} coefficients, expected {n}", s.a.len()),
            });
        }
        rows.push((s.prob, s.b, s.a));
    }
    build_affine(rows, n)
}

fn build_affine(rows: Vec<(f64, f64, Vec<f64>)>, n: usize) -> Result<(ScenarioSet, AffineModel)> {
    if rows.is_empty() {
        return Err(Error::MalformedFile {
            line: 2,
            reason: "no scenario rows".into(),
        });
    }
    if let Some((i, (p, _, _))) = rows.iter().enumerate().find(|(_, r)| !(r.0 > 0.0)) {
        return Err(Error::BadProbabilities(format!(
            "probability {p} in scenario {i} is not positive"
        )));
    }
    let total = compensated_sum(rows.iter().map(|r| r.0));
    if (total - 1.0).abs() > RENORMALIZE_TOL {
        return Err(Error::BadProbabilities(format!(
            "probabilities sum to {total}"
        )));
    }
    let (probs, scenarios) = rows
        .into_iter()
        .map(|(p, b, a)| (p / total, AffineModel::encode(b, &a)))
        .unzip();
    Ok((ScenarioSet::new(scenarios, probs)?, AffineModel::new(n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_example_one() {
        let (set, model) = parse_csv("prob,b,a1\n0.5,-1,0\n0.5,-1,1\n").unwrap();
        assert_eq!(model.dim(), 1);
        let dist = push_forward(&model, &set, &[1.5]).unwrap();
        assert_eq!(dist.values(), &[-1.0, 0.5]);
        assert_eq!(dist.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn csv_single_row_constant() {
        let (set, model) = parse_csv("prob,b,a1\n1.0,5,0\n").unwrap();
        for x in [-3.0, 0.0, 7.5] {
            let dist = push_forward(&model, &set, &[x]).unwrap();
            assert_eq!(dist.values(), &[5.0]);
            assert_eq!(dist.probs(), &[1.0]);
        }
    }

    #[test]
    fn csv_bad_probability_sum() {
        let err = parse_csv("prob,b,a1\n0.5,-1,0\n0.4,-1,1\n").unwrap_err();
        assert!(matches!(err, Error::BadProbabilities(_)), "{err}");
    }

    #[test]
    fn csv_nonpositive_probability() {
        let err = parse_csv("prob,b,a1\n1.0,-1,0\n0.0,-1,1\n").unwrap_err();
        assert!(matches!(err, Error::BadProbabilities(_)), "{err}");
    }

    #[test]
    fn csv_renormalizes_small_drift() {
        let (set, _) =
            parse_csv("prob,b,a1\n0.3333333333,1,0\n0.3333333333,2,0\n0.3333333333,3,0\n").unwrap();
        let total: f64 = set.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_bad_header_and_arity() {
        assert!(matches!(
            parse_csv("p,b,a1\n1,0,0\n").unwrap_err(),
            Error::MalformedFile { line: 1, .. }
        ));
        assert!(matches!(
            parse_csv("prob,b,a2\n1,0,0\n").unwrap_err(),
            Error::MalformedFile { line: 1, .. }
        ));
        assert!(matches!(
            parse_csv("prob,b,a1,a2\n1,0,0\n").unwrap_err(),
            Error::MalformedFile { line: 2, .. }
        ));
        assert!(matches!(
            parse_csv("prob,b,a1\n1,zero,0\n").unwrap_err(),
            Error::MalformedFile { line: 2, .. }
        ));
    }

    #[test]
    fn json_mirror_matches_csv() {
        let json = r#"{"scenarios":[{"prob":0.5,"b":-1,"a":[0]},{"prob":0.5,"b":-1,"a":[1]}]}"#;
        let from_json = parse_json(json).unwrap();
        let from_csv = parse_csv("prob,b,a1\n0.5,-1,0\n0.5,-1,1\n").unwrap();
        assert_eq!(from_json, from_csv);
        assert!(parse_json(
            r#"{"scenarios":[{"prob":0.5,"b":-1,"a":[0]},{"prob":0.5,"b":-1,"a":[1,2]}]}"#
        )
        .is_err());
    }

    #[test]
    fn load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        fs::write(&path, "prob,b,a1,a2\n0.25,1,2,3\n0.75,-1,0,1\n").unwrap();
        let (set, model) = load_scenarios(&path, ScenarioFormat::from_path(&path)).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(model.eval(&set.scenarios()[0], &[1.0, 1.0]), 6.0);
        assert_eq!(model.grad(&set.scenarios()[1], &[9.0, 9.0]), vec![0.0, 1.0]);
        assert!(matches!(
            load_scenarios(&dir.path().join("missing.csv"), ScenarioFormat::Csv),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn network_outcomes() {
        let (set, model) = network_flow_model(0.1).unwrap();
        assert_eq!(set.len(), 16);
        let all_up = [1.0, 1.0, 1.0, 1.0];
        let idx = set.scenarios().iter().position(|s| s == &all_up).unwrap();
        assert!((set.probs()[idx] - 0.6561).abs() < 1e-15);
        for x in [0.3, 2.3587, 10.0] {
            assert_eq!(model.eval(&all_up, &[x]), 1.0 - 2.0 * x);
            assert_eq!(model.eval(&[1.0, 1.0, 0.0, 1.0], &[x]), 1.0 - x);
            assert_eq!(model.eval(&[1.0, 1.0, 1.0, 0.0], &[x]), 1.0 - x);
            assert_eq!(model.eval(&[0.0, 1.0, 1.0, 1.0], &[x]), 1.0);
            assert_eq!(model.eval(&[1.0, 1.0, 0.0, 0.0], &[x]), 1.0);
        }
        let total: f64 = set.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(network_flow_model(0.0).is_err());
        assert!(network_flow_model(1.0).is_err());
    }

    #[test]
    fn network_pushforward_has_three_levels() {
        let (set, model) = network_flow_model(0.1).unwrap();
        let x = 2.3587;
        let dist = push_forward(&model, &set, &[x]).unwrap();
        assert_eq!(dist.len(), 16);
        for v in dist.values() {
            assert!([1.0 - 2.0 * x, 1.0 - x, 1.0].contains(v));
        }
    }

    #[test]
    fn pushforward_dimension_mismatch() {
        let (set, model) = network_flow_model(0.1).unwrap();
        assert!(matches!(
            push_forward(&model, &set, &[1.0, 2.0]),
            Err(Error::DimensionMismatch {
                expected: 1,
                got: 2
            })
        ));
        assert!(matches!(
            push_forward(&ScalarLinearModel, &set, &[1.0]),
            Err(Error::DimensionMismatch {
                expected: 1,
                got: 4
            })
        ));
    }

    #[test]
    fn example_one_pushforward() {
        let dist = push_forward(&ScalarLinearModel, &bernoulli_scenarios(), &[1.5]).unwrap();
        assert_eq!(dist.values(), &[-1.0, 0.5]);
        assert_eq!(dist.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn distribution_validation() {
        assert!(FiniteDistribution::new(vec![], vec![]).is_err());
        assert!(FiniteDistribution::new(vec![1.0], vec![0.9]).is_err());
        assert!(FiniteDistribution::new(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
        assert!(FiniteDistribution::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(FiniteDistribution::uniform((0..1_000_000).map(f64::from).collect()).is_ok());
    }

    #[test]
    fn newsvendor_kink() {
        let m = NewsvendorModel {
            beta: 2.0,
            threshold: 0.5,
        };
        assert_eq!(m.eval(&[1.0], &[2.0]), 1.5);
        assert_eq!(m.grad(&[1.0], &[2.0]), vec![2.0]);
        assert_eq!(m.eval(&[3.0], &[2.0]), -0.5);
        assert_eq!(m.grad(&[2.0], &[2.0]), vec![0.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn affine_gradient_is_coefficients(
                b in -10.0..10.0f64,
                a in prop::collection::vec(-10.0..10.0f64, 1..6),
                x in prop::collection::vec(-10.0..10.0f64, 6),
            ) {
                let m = AffineModel::new(a.len());
                let xi = AffineModel::encode(b, &a);
                prop_assert_eq!(m.grad(&xi, &x[..a.len()]), a);
            }

            #[test]
            fn network_probs_sum_to_one(rho in 1e-6..(1.0 - 1e-6f64)) {
                let (set, _) = network_flow_model(rho).unwrap();
                let total = compensated_sum(set.probs().iter().copied());
                prop_assert!((total - 1.0).abs() <= 1e-12);
            }

            #[test]
            fn pushforward_preserves_order_and_probs(
                rows in prop::collection::vec((0.01..1.0f64, -5.0..5.0f64, -5.0..5.0f64), 1..20),
                x in -3.0..3.0f64,
            ) {
                let total: f64 = rows.iter().map(|r| r.0).sum();
                let probs: Vec<f64> = rows.iter().map(|r| r.0 / total).collect();
                let probs_ok = FiniteDistribution::new(vec![0.0; probs.len()], probs.clone()).is_ok();
                prop_assume!(probs_ok);
                let scen: Vec<Vec<f64>> = rows.iter().map(|r| AffineModel::encode(r.1, &[r.2])).collect();
                let set = ScenarioSet::new(scen, probs.clone()).unwrap();
                let dist = push_forward(&AffineModel::new(1), &set, &[x]).unwrap();
                prop_assert_eq!(dist.probs(), &probs[..]);
                for (v, r) in dist.values().iter().zip(&rows) {
                    prop_assert_eq!(*v, r.1 + r.2 * x);
                }
            }
        }
    }
}
