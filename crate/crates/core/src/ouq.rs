//! Lower estimates of the optimal upper bound
//! `P̄(x) = sup_μ P_μ[g(Ξ) ≤ x]` over product measures with box supports and
//! moment constraints.
//!
//! With `m` moment constraints each marginal can be restricted to `m + 1`
//! Dirac masses, which turns the supremum into a finite-dimensional search.
//! That search is done by DE/rand/1/bin over a unit-cube gene vector. Every
//! reported value is the exact objective of a candidate whose constraint
//! violation is within tolerance, never a penalised score.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Domain;
use crate::oracles::{Evaluation, Oracle, OracleError, Truth};

#[derive(Debug, Error, PartialEq)]
pub enum OuqError {
    #[error("invalid admissible set: {0}")]
    Spec(String),
    #[error("invalid DE config: {0}")]
    Config(String),
    #[error("wrong gene count: expected {expected}, got {got}")]
    Genes { expected: usize, got: usize },
}

/// Registry of performance functions `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PerformanceFn {
    /// `g(z) = z_0`; one input only.
    Identity,
    Sum,
    Product,
    /// `Σ_k c_k s^k` with `s` the sum of the inputs.
    Polynomial(Vec<f64>),
}

impl PerformanceFn {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            PerformanceFn::Identity => z[0],
            PerformanceFn::Sum => z.iter().sum(),
            PerformanceFn::Product => z.iter().product(),
            PerformanceFn::Polynomial(c) => {
                let s: f64 = z.iter().sum();
                c.iter().rev().fold(0.0, |acc, &ck| acc * s + ck)
            }
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), String> {
        match self {
            PerformanceFn::Identity if dim != 1 => {
                Err(format!("identity needs exactly one input, got {dim}"))
            }
            PerformanceFn::Polynomial(c) if c.is_empty() => {
                Err("polynomial needs at least one coefficient".into())
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PerformanceFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerformanceFn::Identity => write!(f, "identity"),
            PerformanceFn::Sum => write!(f, "sum"),
            PerformanceFn::Product => write!(f, "product"),
            PerformanceFn::Polynomial(c) => {
                let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                write!(f, "poly({})", parts.join(","))
            }
        }
    }
}

impl FromStr for PerformanceFn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "identity" => Ok(PerformanceFn::Identity),
            "sum" => Ok(PerformanceFn::Sum),
            "product" => Ok(PerformanceFn::Product),
            other => {
                let args = other
                    .strip_prefix("poly(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| format!("unknown performance function `{other}`"))?;
                let coeffs = args
                    .split(',')
                    .map(|c| c.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| format!("bad polynomial coefficients in `{other}`"))?;
                Ok(PerformanceFn::Polynomial(coeffs))
            }
        }
    }
}

impl TryFrom<String> for PerformanceFn {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PerformanceFn> for String {
    fn from(g: PerformanceFn) -> Self {
        g.to_string()
    }
}

/// Function whose expectation is constrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TestFunction {
    /// The performance function itself.
    Performance,
    /// One input coordinate.
    Input { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentConstraint {
    pub test: TestFunction,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSpec {
    pub boxes: Vec<(f64, f64)>,
    pub g: PerformanceFn,
    pub constraints: Vec<MomentConstraint>,
    pub constraint_tolerance: f64,
}

impl AdmissibleSpec {
    /// Independent inputs on `boxes` with `E[g] = mean` as the only
    /// constraint.
    pub fn with_mean(boxes: Vec<(f64, f64)>, g: PerformanceFn, mean: f64, tolerance: f64) -> Self {
        Self {
            boxes,
            g,
            constraints: vec![MomentConstraint {
                test: TestFunction::Performance,
                target: mean,
            }],
            constraint_tolerance: tolerance,
        }
    }

    pub fn dim(&self) -> usize {
        self.boxes.len()
    }

    pub fn atoms_per_input(&self) -> usize {
        self.constraints.len() + 1
    }

    pub fn gene_len(&self) -> usize {
        2 * self.dim() * self.atoms_per_input()
    }

    /// Range of `g` over the boxes, bracketed by evaluating box corners.
    /// Exact for monotone registry functions on non-negative boxes.
    pub fn corner_range(&self) -> (f64, f64) {
        let d = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut z = vec![0.0; d];
        for mask in 0..(1usize << d) {
            for (i, zi) in z.iter_mut().enumerate() {
                let (a, b) = self.boxes[i];
                *zi = if mask >> i & 1 == 1 { b } else { a };
            }
            let v = self.g.eval(&z);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn validate(&self) -> Result<(), OuqError> {
        let bad = |m: String| Err(OuqError::Spec(m));
        if self.boxes.is_empty() {
            return bad("at least one input is required".into());
        }
        for &(lo, hi) in &self.boxes {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("invalid box [{lo}, {hi}]"));
            }
        }
        self.g.validate(self.dim()).map_err(OuqError::Spec)?;
        for c in &self.constraints {
            if let TestFunction::Input { index } = c.test {
                if index >= self.dim() {
                    return bad(format!("constraint on input {index} of {}", self.dim()));
                }
            }
            if !c.target.is_finite() {
                return bad("constraint target must be finite".into());
            }
        }
        if !(self.constraint_tolerance > 0.0) {
            return bad("constraint tolerance must be positive".into());
        }
        Ok(())
    }
}

/// One marginal: `m + 1` support points and simplex weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Product of discrete marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedMeasure {
    pub marginals: Vec<Marginal>,
}

impl ReducedMeasure {
    pub fn validate(&self, spec: &AdmissibleSpec) -> Result<(), OuqError> {
        if self.marginals.len() != spec.dim() {
            return Err(OuqError::Spec(format!(
                "measure has {} marginals for {} inputs",
                self.marginals.len(),
                spec.dim()
            )));
        }
        for (m, &(lo, hi)) in self.marginals.iter().zip(&spec.boxes) {
            if m.points.len() != m.weights.len() || m.points.is_empty() {
                return Err(OuqError::Spec("points and weights differ in length".into()));
            }
            if m.points.iter().any(|&z| z < lo || z > hi) {
                return Err(OuqError::Spec("support point outside its box".into()));
            }
            if m.weights.iter().any(|&w| !(w >= 0.0)) {
                return Err(OuqError::Spec("negative weight".into()));
            }
            let total: f64 = m.weights.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(OuqError::Spec(format!("weights sum to {total}")));
            }
        }
        Ok(())
    }

    /// Calls `f(point, weight)` for every product atom.
    pub fn for_each_atom<F: FnMut(&[f64], f64)>(&self, mut f: F) {
        let d = self.marginals.len();
        let mut idx = vec![0usize; d];
        let mut point = vec![0.0; d];
        loop {
            let mut w = 1.0;
            for (i, m) in self.marginals.iter().enumerate() {
                point[i] = m.points[idx[i]];
                w *= m.weights[idx[i]];
            }
            f(&point, w);
            // Odometer increment.
            let mut k = 0;
            loop {
                if k == d {
                    return;
                }
                idx[k] += 1;
                if idx[k] < self.marginals[k].points.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

/// `P_μ[g(Ξ) ≤ x]` by enumerating the product atoms.
pub fn objective(measure: &ReducedMeasure, spec: &AdmissibleSpec, x: f64) -> f64 {
    let mut p = 0.0;
    measure.for_each_atom(|z, w| {
        if spec.g.eval(z) <= x {
            p += w;
        }
    });
    p
}

/// Sum over constraints of `|E_μ[test] − target|`.
pub fn constraint_violation(measure: &ReducedMeasure, spec: &AdmissibleSpec) -> f64 {
    let mut means = vec![0.0; spec.constraints.len()];
    measure.for_each_atom(|z, w| {
        for (mean, c) in means.iter_mut().zip(&spec.constraints) {
            let v = match c.test {
                TestFunction::Performance => spec.g.eval(z),
                TestFunction::Input { index } => z[index],
            };
            *mean += w * v;
        }
    });
    means
        .iter()
        .zip(&spec.constraints)
        .map(|(m, c)| (m - c.target).abs())
        .sum()
}

/// Maps a unit-cube gene vector to a measure. Per input, the first `m + 1`
/// genes place the support points inside the box and the next `m + 1` are
/// normalised into weights.
pub fn decode(genes: &[f64], spec: &AdmissibleSpec) -> Result<ReducedMeasure, OuqError> {
    if genes.len() != spec.gene_len() {
        return Err(OuqError::Genes {
            expected: spec.gene_len(),
            got: genes.len(),
        });
    }
    let k = spec.atoms_per_input();
    let marginals = spec
        .boxes
        .iter()
        .zip(genes.chunks(2 * k))
        .map(|(&(lo, hi), chunk)| {
            let points = chunk[..k]
                .iter()
                .map(|&u| lo + u.clamp(0.0, 1.0) * (hi - lo))
                .collect();
            let raw: Vec<f64> = chunk[k..].iter().map(|&u| u.clamp(0.0, 1.0)).collect();
            let total: f64 = raw.iter().sum();
            let weights = if total > 0.0 {
                raw.iter().map(|w| w / total).collect()
            } else {
                vec![1.0 / k as f64; k]
            };
            Marginal { points, weights }
        })
        .collect();
    Ok(ReducedMeasure { marginals })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DEConfig {
    pub population: usize,
    pub generations: usize,
    pub differential_weight: f64,
    pub crossover: f64,
    pub penalty: f64,
    pub seed: u64,
}

impl Default for DEConfig {
    fn default() -> Self {
        Self {
            population: 40,
            generations: 200,
            differential_weight: 0.8,
            crossover: 0.9,
            penalty: 100.0,
            seed: 0,
        }
    }
}

impl DEConfig {
    pub fn validate(&self) -> Result<(), OuqError> {
        let bad = |m: String| Err(OuqError::Config(m));
        if self.population < 4 {
            return bad(format!(
                "population must be at least 4, got {}",
                self.population
            ));
        }
        if self.generations < 1 {
            return bad("generations must be at least 1".into());
        }
        if !(self.differential_weight > 0.0 && self.differential_weight < 2.0) {
            return bad(format!(
                "differential weight must lie in (0, 2), got {}",
                self.differential_weight
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return bad(format!(
                "crossover must lie in [0, 1], got {}",
                self.crossover
            ));
        }
        if !(self.penalty >= 0.0) {
            return bad("penalty must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeResult {
    /// Exact objective of the best feasible candidate, `0` if none.
    pub value: f64,
    pub feasible: bool,
    pub violation: f64,
    pub measure: Option<ReducedMeasure>,
    pub genes: Option<Vec<f64>>,
    /// `population × generations`; the initial population counts as the
    /// first generation.
    pub evals: usize,
}

struct Scored {
    fitness: f64,
    objective: f64,
    violation: f64,
}

/// With every other marginal fixed, each moment constraint is linear in the
/// weights of marginal `i`. Together with `Σ w = 1` that gives an
/// `(m + 1) × (m + 1)` system. Tries the marginals from last to first and
/// keeps the first non-negative solution. Returns whether one was found;
/// otherwise the measure is left unchanged.
pub fn repair_weights(measure: &mut ReducedMeasure, spec: &AdmissibleSpec) -> bool {
    let m = spec.constraints.len();
    if m == 0 {
        return true;
    }
    for i in (0..measure.marginals.len()).rev() {
        let k = measure.marginals[i].points.len();
        if k != m + 1 {
            continue;
        }
        // cond[j][a]: E[test_j | Ξ_i = z_ia]. Unit weights on marginal i make
        // the product weight equal the weight of the other marginals.
        let mut probe = measure.clone();
        let mut cond = vec![vec![0.0; k]; m];
        #[allow(clippy::needless_range_loop)]
        for a in 0..k {
            probe.marginals[i].weights = (0..k).map(|b| if a == b { 1.0 } else { 0.0 }).collect();
            probe.for_each_atom(|z, w| {
                if w == 0.0 {
                    return;
                }
                for (j, c) in spec.constraints.iter().enumerate() {
                    let v = match c.test {
                        TestFunction::Performance => spec.g.eval(z),
                        TestFunction::Input { index } => z[index],
                    };
                    cond[j][a] += w * v;
                }
            });
        }
        let mut rows = vec![vec![1.0; k]];
        rows.extend(cond);
        let mut rhs = vec![1.0];
        rhs.extend(spec.constraints.iter().map(|c| c.target));
        if let Some(w) = solve(rows, rhs) {
            if w.iter().all(|&v| v >= -1e-12) {
                let w: Vec<f64> = w.iter().map(|v| v.max(0.0)).collect();
                let total: f64 = w.iter().sum();
                measure.marginals[i].weights = w.iter().map(|v| v / total).collect();
                return true;
            }
        }
    }
    false
}

/// LU with partial pivoting; `None` when a pivot is negligible against the
/// largest entry.
fn solve(rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    let a = DMatrix::from_fn(n, n, |r, c| rows[r][c]);
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let lu = a.lu();
    if lu.u().diagonal().iter().any(|p| p.abs() <= 1e-12 * scale) {
        return None;
    }
    lu.solve(&DVector::from_vec(rhs))
        .map(|x| x.iter().copied().collect())
}

/// [`decode`] followed by [`repair_weights`].
pub fn decode_repaired(genes: &[f64], spec: &AdmissibleSpec) -> Result<ReducedMeasure, OuqError> {
    let mut measure = decode(genes, spec)?;
    repair_weights(&mut measure, spec);
    Ok(measure)
}

fn score(genes: &[f64], spec: &AdmissibleSpec, x: f64, penalty: f64) -> Scored {
    let measure = decode_repaired(genes, spec).expect("gene length fixed by caller");
    let objective = objective(&measure, spec, x);
    let violation = constraint_violation(&measure, spec);
    Scored {
        fitness: objective - penalty * violation,
        objective,
        violation,
    }
}

struct Incumbent {
    objective: f64,
    violation: f64,
    genes: Vec<f64>,
}

impl Incumbent {
    fn offer(slot: &mut Option<Incumbent>, s: &Scored, genes: &[f64], tol: f64) {
        if s.violation > tol {
            return;
        }
        let better = match slot {
            None => true,
            Some(b) => {
                s.objective > b.objective
                    || (s.objective == b.objective && s.violation < b.violation)
            }
        };
        if better {
            *slot = Some(Incumbent {
                objective: s.objective,
                violation: s.violation,
                genes: genes.to_vec(),
            });
        }
    }
}

/// Maximises `P_μ[g ≤ x]` over the reduced measures with DE/rand/1/bin and
/// penalised fitness. `warm_start` (a previous best gene vector) replaces the
/// first member of the random initial population.
pub fn de_maximize(
    x: f64,
    spec: &AdmissibleSpec,
    cfg: &DEConfig,
    rng: &mut dyn RngCore,
    warm_start: Option<&[f64]>,
) -> Result<DeResult, OuqError> {
    spec.validate()?;
    cfg.validate()?;
    let dim = spec.gene_len();
    let np = cfg.population;
    let tol = spec.constraint_tolerance;

    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    if let Some(w) = warm_start {
        if w.len() != dim {
            return Err(OuqError::Genes {
                expected: dim,
                got: w.len(),
            });
        }
        pop[0] = w.to_vec();
    }

    let mut best: Option<Incumbent> = None;
    let mut scores: Vec<Scored> = pop
        .iter()
        .map(|g| {
            let s = score(g, spec, x, cfg.penalty);
            Incumbent::offer(&mut best, &s, g, tol);
            s
        })
        .collect();

    let mut trial = vec![0.0; dim];
    for _ in 1..cfg.generations {
        let mut next = pop.clone();
        for i in 0..np {
            let (r1, r2, r3) = distinct_three(np, i, rng);
            let j_rand = rng.random_range(0..dim);
            for j in 0..dim {
                trial[j] = if j == j_rand || rng.random::<f64>() < cfg.crossover {
                    (pop[r1][j] + cfg.differential_weight * (pop[r2][j] - pop[r3][j]))
                        .clamp(0.0, 1.0)
                } else {
                    pop[i][j]
                };
            }
            let s = score(&trial, spec, x, cfg.penalty);
            Incumbent::offer(&mut best, &s, &trial, tol);
            if s.fitness >= scores[i].fitness {
                next[i].copy_from_slice(&trial);
                scores[i] = s;
            }
        }
        pop = next;
    }

    let evals = np * cfg.generations;
    Ok(match best {
        Some(b) => DeResult {
            value: b.objective,
            feasible: true,
            violation: b.violation,
            measure: Some(decode_repaired(&b.genes, spec)?),
            genes: Some(b.genes),
            evals,
        },
        None => DeResult {
            value: 0.0,
            feasible: false,
            violation: f64::NAN,
            measure: None,
            genes: None,
            evals,
        },
    })
}

/// [`de_maximize`] on a fresh ChaCha8 stream seeded by `cfg.seed`.
pub fn de_maximize_seeded(
    x: f64,
    spec: &AdmissibleSpec,
    cfg: &DEConfig,
) -> Result<DeResult, OuqError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    de_maximize(x, spec, cfg, &mut rng, None)
}

fn distinct_three(n: usize, exclude: usize, rng: &mut dyn RngCore) -> (usize, usize, usize) {
    let mut pick = |taken: &[usize]| loop {
        let r = rng.random_range(0..n);
        if r != exclude && !taken.contains(&r) {
            return r;
        }
    };
    let a = pick(&[]);
    let b = pick(&[a]);
    let c = pick(&[a, b]);
    (a, b, c)
}

/// Engine-facing oracle: `effort` scales the generation count, and the best
/// candidate found at each `x` warm-starts the next call there.
#[derive(Debug, Clone)]
pub struct OuqOracle {
    pub spec: AdmissibleSpec,
    /// `generations` here is the count at unit effort.
    pub base: DEConfig,
    pub domain: Domain,
    incumbents: BTreeMap<u64, Vec<f64>>,
    infeasible_calls: u64,
}

#[derive(Serialize, Deserialize)]
struct OuqState {
    incumbents: BTreeMap<String, Vec<f64>>,
    infeasible_calls: u64,
}

impl OuqOracle {
    pub fn new(spec: AdmissibleSpec, base: DEConfig, domain: Domain) -> Result<Self, OuqError> {
        spec.validate()?;
        base.validate()?;
        Ok(Self {
            spec,
            base,
            domain,
            incumbents: BTreeMap::new(),
            infeasible_calls: 0,
        })
    }

    pub fn infeasible_calls(&self) -> u64 {
        self.infeasible_calls
    }

    pub fn config_for(&self, effort: f64) -> DEConfig {
        DEConfig {
            generations: ((self.base.generations as f64 * effort).round() as usize).max(1),
            ..self.base.clone()
        }
    }

    pub fn maximize(
        &mut self,
        x: f64,
        effort: f64,
        rng: &mut dyn RngCore,
    ) -> Result<DeResult, OuqError> {
        let cfg = self.config_for(effort);
        let key = x.to_bits();
        let warm = self.incumbents.get(&key).cloned();
        let result = de_maximize(x, &self.spec, &cfg, rng, warm.as_deref())?;
        match &result.genes {
            Some(g) => {
                self.incumbents.insert(key, g.clone());
            }
            None => self.infeasible_calls += 1,
        }
        Ok(result)
    }
}

impl Oracle for OuqOracle {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn evaluate(
        &mut self,
        x: f64,
        effort: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Evaluation, OracleError> {
        if !self.domain.contains(x) {
            return Err(OracleError::OutOfDomain {
                x,
                lo: self.domain.lo,
                hi: self.domain.hi,
            });
        }
        if !(effort >= 1.0 && effort.is_finite()) {
            return Err(OracleError::InvalidEffort(effort));
        }
        let r = self
            .maximize(x, effort, rng)
            .map_err(|e| OracleError::Sampler(e.to_string()))?;
        Ok(Evaluation {
            y: r.value,
            reliability: r.evals as f64,
        })
    }

    fn snapshot(&self) -> serde_json::Value {
        let state = OuqState {
            incumbents: self
                .incumbents
                .iter()
                .map(|(k, v)| (format!("{k:016x}"), v.clone()))
                .collect(),
            infeasible_calls: self.infeasible_calls,
        };
        serde_json::to_value(state).expect("plain data")
    }

    fn restore(&mut self, state: &serde_json::Value) -> Result<(), OracleError> {
        let s: OuqState =
            serde_json::from_value(state.clone()).map_err(|e| OracleError::State(e.to_string()))?;
        let mut incumbents = BTreeMap::new();
        for (k, v) in s.incumbents {
            let bits =
                u64::from_str_radix(&k, 16).map_err(|e| OracleError::State(e.to_string()))?;
            if v.len() != self.spec.gene_len() {
                return Err(OracleError::State("incumbent gene length mismatch".into()));
            }
            incumbents.insert(bits, v);
        }
        self.incumbents = incumbents;
        self.infeasible_calls = s.infeasible_calls;
        Ok(())
    }
}

/// Closed form for one input on `[0, 1]`, `g` the identity and `E[Ξ] = mean`:
/// `0` below 0, `min(1, (1 − mean)/(1 − x))` above.
pub fn toy_upper_bound(x: f64, mean: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if x >= mean {
        1.0
    } else {
        (1.0 - mean) / (1.0 - x)
    }
}

/// [`toy_upper_bound`] as a [`Truth`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyUpperBound {
    pub mean: f64,
    pub domain: Domain,
}

impl Truth for ToyUpperBound {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn value(&self, x: f64) -> f64 {
        toy_upper_bound(x, self.mean)
    }

    fn left_limit(&self, x: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else {
            self.value(x)
        }
    }

    fn jumps(&self) -> Vec<f64> {
        vec![0.0, self.mean]
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        // Antiderivative, continuous on [0, 1).
        let m = self.mean;
        let anti = |x: f64| {
            if x < 0.0 {
                0.0
            } else if x < m {
                -(1.0 - m) * (1.0 - x).ln()
            } else {
                -(1.0 - m) * (1.0 - m).ln() + (x - m)
            }
        };
        anti(hi) - anti(lo)
    }
}
