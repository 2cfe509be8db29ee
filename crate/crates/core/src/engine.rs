//! The area-minimisation loop.
//!
//! Each iteration compares the weighted area `WA = q_min * A` with the
//! exchange rate `E`. Below `E` the worst-quality point is re-evaluated with
//! escalating effort until its value strictly improves; at or above `E` the
//! cell with the largest area is split at its midpoint. A left-to-right
//! repair sweep then restores monotonicity before the next iteration.
//!
//! The redo and repair loops are capped at `max_escalations` oracle calls per
//! site. Hitting the cap is a *stall*: redo keeps the best value seen, repair
//! clamps the point to its left neighbour. Stalls are recorded in the trace.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, Domain, Observation};
use crate::oracles::{Oracle, OracleError};
use crate::rng::StreamRng;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    Config(String),
    #[error("initial dataset is inconsistent at point {0}")]
    InconsistentStart(usize),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("oracle failed: {source}")]
    Oracle {
        #[source]
        source: OracleError,
        /// Completed iterations up to the failure (filled in by [`run`]).
        partial: Option<Box<RunTrace>>,
    },
}

impl From<OracleError> for EngineError {
    fn from(source: OracleError) -> Self {
        EngineError::Oracle {
            source,
            partial: None,
        }
    }
}

/// Effort used by retry `r` (1-based) of an escalation that starts from
/// `current`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EffortSchedule {
    Geometric { ratio: f64 },
    Linear { step: f64 },
}

impl Default for EffortSchedule {
    fn default() -> Self {
        EffortSchedule::Geometric { ratio: 2.0 }
    }
}

impl EffortSchedule {
    pub fn effort(&self, current: f64, retry: u32) -> f64 {
        match *self {
            EffortSchedule::Geometric { ratio } => current * ratio.powi(retry as i32),
            EffortSchedule::Linear { step } => current + step * retry as f64,
        }
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            EffortSchedule::Geometric { ratio } if !(ratio > 1.0 && ratio.is_finite()) => {
                Err(format!("geometric ratio must exceed 1, got {ratio}"))
            }
            EffortSchedule::Linear { step } if !(step > 0.0 && step.is_finite()) => {
                Err(format!("linear step must be positive, got {step}"))
            }
            _ => Ok(()),
        }
    }
}

/// Effort given to a freshly split point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FreshEffort {
    /// Median of the efforts currently stored in the dataset.
    #[default]
    Median,
    Fixed {
        effort: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub exchange_rate: f64,
    pub max_iterations: usize,
    #[serde(default)]
    pub stop_area: Option<f64>,
    pub max_escalations: u32,
    #[serde(default)]
    pub effort_schedule: EffortSchedule,
    #[serde(default)]
    pub fresh_effort: FreshEffort,
}

impl EngineConfig {
    pub fn new(exchange_rate: f64, max_iterations: usize) -> Self {
        Self {
            exchange_rate,
            max_iterations,
            stop_area: None,
            max_escalations: 40,
            effort_schedule: EffortSchedule::default(),
            fresh_effort: FreshEffort::default(),
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::Config(msg));
        if !(self.exchange_rate > 0.0) || self.exchange_rate.is_nan() {
            return bad(format!(
                "exchange rate must be positive, got {}",
                self.exchange_rate
            ));
        }
        if self.max_escalations < 1 {
            return bad("max_escalations must be at least 1".into());
        }
        if let Some(a) = self.stop_area {
            if !(a >= 0.0) {
                return bad(format!("stop_area must be non-negative, got {a}"));
            }
        }
        if let FreshEffort::Fixed { effort } = self.fresh_effort {
            if !(effort > 0.0 && effort.is_finite()) {
                return bad(format!("fresh effort must be positive, got {effort}"));
            }
        }
        self.effort_schedule.validate().map_err(EngineError::Config)
    }

    fn fresh_effort_for(&self, ds: &Dataset) -> f64 {
        match self.fresh_effort {
            FreshEffort::Median => ds.median_effort(),
            FreshEffort::Fixed { effort } => effort,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Redo,
    Split,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Redo => "redo",
            Branch::Split => "split",
        }
    }
}

/// Redo iff `WA < E`; the boundary goes to split.
pub fn select_branch(weighted_area: f64, exchange_rate: f64) -> Branch {
    if weighted_area < exchange_rate {
        Branch::Redo
    } else {
        Branch::Split
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedoOutcome {
    pub index: usize,
    pub calls: u64,
    pub improved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOutcome {
    pub index: usize,
    pub x_new: f64,
    pub calls: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RepairOutcome {
    pub calls: u64,
    pub repaired: usize,
    pub stalls: usize,
}

/// Best draw at one site: highest value, then highest reliability.
#[derive(Clone, Copy)]
struct Best {
    y: f64,
    reliability: f64,
    effort: f64,
}

impl Best {
    fn of(p: &Observation) -> Self {
        Self {
            y: p.y,
            reliability: p.reliability,
            effort: p.effort,
        }
    }

    fn offer(&mut self, y: f64, reliability: f64, effort: f64) {
        if y > self.y || (y == self.y && reliability > self.reliability) {
            *self = Self {
                y,
                reliability,
                effort,
            };
        }
    }
}

/// Re-evaluates the worst-quality point until its value strictly exceeds the
/// old one, or the escalation cap is reached.
///
/// On a stall the best draw is kept: the value never drops, and a draw that
/// ties the old value at a higher reliability replaces it.
pub fn redo_worst(
    ds: &mut Dataset,
    oracle: &mut dyn Oracle,
    cfg: &EngineConfig,
    rng: &mut StreamRng,
) -> Result<RedoOutcome, EngineError> {
    let index = ds.worst_quality_index();
    let old = ds.points()[index].clone();
    let mut best = Best::of(&old);
    let mut calls = 0;
    for retry in 1..=cfg.max_escalations {
        let effort = cfg.effort_schedule.effort(old.effort, retry);
        let ev = oracle.evaluate(old.x, effort, rng)?;
        calls += 1;
        best.offer(ev.y, ev.reliability, effort);
        if ev.y > old.y {
            ds.replace(index, best.y, best.reliability, best.effort)?;
            return Ok(RedoOutcome {
                index,
                calls,
                improved: true,
            });
        }
    }
    if best.reliability != old.reliability || best.effort != old.effort {
        ds.replace(index, best.y, best.reliability, best.effort)?;
    }
    Ok(RedoOutcome {
        index,
        calls,
        improved: false,
    })
}

/// Evaluates one new point at the midpoint of the largest cell.
pub fn split_biggest(
    ds: &mut Dataset,
    oracle: &mut dyn Oracle,
    cfg: &EngineConfig,
    rng: &mut StreamRng,
) -> Result<SplitOutcome, EngineError> {
    let (cell, _) = ds.biggest_cell()?;
    let p = ds.points();
    let x_new = 0.5 * (p[cell].x + p[cell + 1].x);
    let effort = cfg.fresh_effort_for(ds);
    let ev = oracle.evaluate(x_new, effort, rng)?;
    let index = ds.insert(Observation::new(x_new, ev.y, ev.reliability, effort))?;
    Ok(SplitOutcome {
        index,
        x_new,
        calls: 1,
    })
}

/// Single left-to-right sweep. Repairs only raise values, so every point left
/// of the cursor stays consistent.
pub fn repair_consistency(
    ds: &mut Dataset,
    oracle: &mut dyn Oracle,
    cfg: &EngineConfig,
    rng: &mut StreamRng,
) -> Result<RepairOutcome, EngineError> {
    let mut out = RepairOutcome::default();
    for i in 1..ds.len() {
        let floor = ds.points()[i - 1].y;
        let site = ds.points()[i].clone();
        if site.y >= floor {
            continue;
        }
        let mut best = Best::of(&site);
        let mut fixed = false;
        let mut last_effort = site.effort;
        for retry in 1..=cfg.max_escalations {
            last_effort = cfg.effort_schedule.effort(site.effort, retry);
            let ev = oracle.evaluate(site.x, last_effort, rng)?;
            out.calls += 1;
            best.offer(ev.y, ev.reliability, last_effort);
            if ev.y >= floor {
                fixed = true;
                break;
            }
        }
        if fixed {
            ds.replace(i, best.y, best.reliability, best.effort)?;
            out.repaired += 1;
        } else {
            let reliability = ds.min_reliability();
            ds.replace(i, floor, reliability, last_effort)?;
            out.stalls += 1;
        }
    }
    debug_assert!(ds.is_consistent());
    Ok(out)
}

/// One iteration of the loop, with derived quantities taken after the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    pub branch: Branch,
    /// Point that was redone or inserted.
    pub site: usize,
    pub site_x: f64,
    pub calls: u64,
    pub q_min: f64,
    pub i_min: usize,
    pub a_plus: f64,
    pub i_plus: usize,
    pub total_area: f64,
    pub weighted_area: f64,
    pub points: usize,
    pub redo_stalled: bool,
    pub repair_stalls: usize,
}

impl IterationRecord {
    pub fn stalled(&self) -> bool {
        self.redo_stalled || self.repair_stalls > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub config: EngineConfig,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    pub domain: Domain,
    pub final_points: Vec<Observation>,
    pub total_calls: u64,
}

#[derive(Serialize)]
struct TraceRow {
    n: usize,
    branch: &'static str,
    calls: u64,
    #[serde(rename = "I")]
    points: usize,
    q_min: f64,
    #[serde(rename = "A")]
    total_area: f64,
    #[serde(rename = "WA")]
    weighted_area: f64,
}

impl RunTrace {
    pub fn final_dataset(&self) -> Result<Dataset, DatasetError> {
        Dataset::new(self.domain, self.final_points.clone())
    }

    /// Flat `n,branch,calls,I,q_min,A,WA` table.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        w.write_record(["n", "branch", "calls", "I", "q_min", "A", "WA"])
            .expect("in-memory write");
        for r in &self.records {
            w.serialize(TraceRow {
                n: r.n,
                branch: r.branch.as_str(),
                calls: r.calls,
                points: r.points,
                q_min: r.q_min,
                total_area: r.total_area,
                weighted_area: r.weighted_area,
            })
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn split_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.branch == Branch::Split)
            .count()
    }
}

/// Stepwise driver, so callers can snapshot or checkpoint between
/// iterations.
#[derive(Debug, Clone)]
pub struct Engine {
    dataset: Dataset,
    config: EngineConfig,
    records: Vec<IterationRecord>,
    total_calls: u64,
}

impl Engine {
    pub fn new(initial: Dataset, config: EngineConfig) -> Result<Self, EngineError> {
        Self::resume(initial, config, Vec::new())
    }

    /// Continues from a dataset and the records produced so far.
    pub fn resume(
        dataset: Dataset,
        config: EngineConfig,
        records: Vec<IterationRecord>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        if let Some(i) = dataset.first_inconsistency() {
            return Err(EngineError::InconsistentStart(i));
        }
        let total_calls = records.iter().map(|r| r.calls).sum();
        Ok(Self {
            dataset,
            config,
            records,
            total_calls,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn total_calls(&self) -> u64 {
        self.total_calls
    }

    pub fn iterations_done(&self) -> usize {
        self.records.len()
    }

    pub fn is_finished(&self) -> bool {
        if self.records.len() >= self.config.max_iterations {
            return true;
        }
        match (self.config.stop_area, self.dataset.total_area()) {
            (Some(limit), Ok(area)) => area <= limit,
            _ => false,
        }
    }

    /// Runs one iteration. Returns `None` once a stopping rule holds.
    pub fn step(
        &mut self,
        oracle: &mut dyn Oracle,
        rng: &mut StreamRng,
    ) -> Result<Option<&IterationRecord>, EngineError> {
        if self.is_finished() {
            return Ok(None);
        }
        let wa = self.dataset.weighted_area();
        let branch = select_branch(wa, self.config.exchange_rate);
        let (site, mut calls, redo_stalled) = match branch {
            Branch::Redo => {
                let r = redo_worst(&mut self.dataset, oracle, &self.config, rng)?;
                (r.index, r.calls, !r.improved)
            }
            Branch::Split => {
                let s = split_biggest(&mut self.dataset, oracle, &self.config, rng)?;
                (s.index, s.calls, false)
            }
        };
        let site_x = self.dataset.points()[site].x;
        let repair = repair_consistency(&mut self.dataset, oracle, &self.config, rng)?;
        calls += repair.calls;

        let ds = &self.dataset;
        let qualities = ds.qualities();
        let i_min = crate::dataset::argmin_first(&qualities).unwrap_or(0);
        let (i_plus, a_plus) = ds.biggest_cell()?;
        let record = IterationRecord {
            n: self.records.len() + 1,
            branch,
            site,
            site_x,
            calls,
            q_min: qualities[i_min],
            i_min,
            a_plus,
            i_plus,
            total_area: ds.total_area()?,
            weighted_area: ds.weighted_area(),
            points: ds.len(),
            redo_stalled,
            repair_stalls: repair.stalls,
        };
        self.total_calls += calls;
        self.records.push(record);
        Ok(self.records.last())
    }

    pub fn into_trace(self, seed: u64) -> RunTrace {
        RunTrace {
            config: self.config,
            seed,
            records: self.records,
            domain: self.dataset.domain(),
            final_points: self.dataset.points().to_vec(),
            total_calls: self.total_calls,
        }
    }
}

/// Runs the loop to completion. An oracle failure returns the iterations
/// completed so far inside the error.
pub fn run(
    initial: Dataset,
    oracle: &mut dyn Oracle,
    cfg: &EngineConfig,
    rng: &mut StreamRng,
) -> Result<RunTrace, EngineError> {
    let mut engine = Engine::new(initial, cfg.clone())?;
    loop {
        match engine.step(oracle, rng) {
            Ok(Some(_)) => {}
            Ok(None) => break,
            Err(EngineError::Oracle { source, .. }) => {
                return Err(EngineError::Oracle {
                    source,
                    partial: Some(Box::new(engine.into_trace(rng.seed()))),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(engine.into_trace(rng.seed()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{Evaluation, ExactOracle, Linear};
    use rand::RngCore;
    use std::collections::VecDeque;

    /// Replays a fixed list of values, one per call.
    struct Scripted {
        domain: Domain,
        values: VecDeque<f64>,
        calls: Vec<(f64, f64)>,
    }

    impl Scripted {
        fn new(values: &[f64]) -> Self {
            Self {
                domain: Domain::new(0.0, 10.0).unwrap(),
                values: values.iter().copied().collect(),
                calls: Vec::new(),
            }
        }
    }

    impl Oracle for Scripted {
        fn domain(&self) -> Domain {
            self.domain
        }

        fn evaluate(
            &mut self,
            x: f64,
            effort: f64,
            _rng: &mut dyn RngCore,
        ) -> Result<Evaluation, OracleError> {
            self.calls.push((x, effort));
            let y = self
                .values
                .pop_front()
                .ok_or_else(|| OracleError::Sampler("script exhausted".into()))?;
            Ok(Evaluation {
                y,
                reliability: effort,
            })
        }
    }

    /// Piecewise-linear target through given knots, evaluated exactly.
    fn knots_oracle(knots: &[(f64, f64)]) -> impl Oracle {
        struct Knots(Vec<(f64, f64)>);
        impl Oracle for Knots {
            fn domain(&self) -> Domain {
                Domain::new(self.0[0].0, self.0.last().unwrap().0).unwrap()
            }
            fn evaluate(
                &mut self,
                x: f64,
                effort: f64,
                _rng: &mut dyn RngCore,
            ) -> Result<Evaluation, OracleError> {
                for w in self.0.windows(2) {
                    let ((x0, y0), (x1, y1)) = (w[0], w[1]);
                    if x >= x0 && x <= x1 {
                        return Ok(Evaluation {
                            y: y0 + (y1 - y0) * (x - x0) / (x1 - x0),
                            reliability: effort,
                        });
                    }
                }
                Err(OracleError::OutOfDomain {
                    x,
                    lo: 0.0,
                    hi: 0.0,
                })
            }
        }
        Knots(knots.to_vec())
    }

    fn rng() -> StreamRng {
        StreamRng::new(0, "oracle")
    }

    fn obs(x: f64, y: f64) -> Observation {
        Observation::new(x, y, 1.0, 1.0)
    }

    #[test]
    fn branch_selection() {
        assert_eq!(select_branch(10.0, 15.0), Branch::Redo);
        assert_eq!(select_branch(15.0, 15.0), Branch::Split);
        assert_eq!(select_branch(0.0, 1e-4), Branch::Redo);
    }

    #[test]
    fn redo_stops_on_first_strict_improvement() {
        let d = Domain::new(0.0, 10.0).unwrap();
        let mut ds = Dataset::new(
            d,
            vec![
                Observation::new(1.0, 1.4, 1.0, 1.0),
                Observation::new(2.0, 2.0, 5.0, 1.0),
            ],
        )
        .unwrap();
        let mut oracle = Scripted::new(&[1.38, 1.43, 9.0]);
        let cfg = EngineConfig::new(1.0, 1);
        let out = redo_worst(&mut ds, &mut oracle, &cfg, &mut rng()).unwrap();
        assert_eq!(
            out,
            RedoOutcome {
                index: 0,
                calls: 2,
                improved: true
            }
        );
        assert_eq!(ds.points()[0].y, 1.43);
        // Effort doubles per retry.
        assert_eq!(oracle.calls, vec![(1.0, 2.0), (1.0, 4.0)]);
        assert_eq!(ds.points()[0].effort, 4.0);
    }

    #[test]
    fn redo_on_exact_value_stalls_at_cap() {
        let truth = Linear {
            slope: 1.0,
            intercept: 0.0,
            domain: Domain::new(1.0, 2.0).unwrap(),
        };
        let mut oracle = ExactOracle { truth };
        let mut ds = Dataset::from_xy(truth.domain, &[(1.0, 1.0), (2.0, 2.0)]).unwrap();
        let mut cfg = EngineConfig::new(1.0, 1);
        cfg.max_escalations = 5;
        let out = redo_worst(&mut ds, &mut oracle, &cfg, &mut rng()).unwrap();
        assert_eq!(out.calls, 5);
        assert!(!out.improved);
        assert_eq!(ds.points()[0].y, 1.0);
        // Tied draws at higher effort are adopted.
        assert_eq!(ds.points()[0].reliability, 32.0);
    }

    #[test]
    fn split_examples() {
        let truth = Linear {
            slope: 1.0,
            intercept: 0.0,
            domain: Domain::new(1.0, 2.0).unwrap(),
        };
        let mut oracle = ExactOracle { truth };
        let cfg = EngineConfig::new(1.0, 1);
        let mut ds = Dataset::from_xy(truth.domain, &[(1.0, 1.0), (2.0, 2.0)]).unwrap();
        let s = split_biggest(&mut ds, &mut oracle, &cfg, &mut rng()).unwrap();
        assert_eq!((s.x_new, s.index, s.calls), (1.5, 1, 1));

        let mut ds = Dataset::from_xy(truth.domain, &[(1.0, 1.0), (1.5, 1.2), (2.0, 2.0)]).unwrap();
        let s = split_biggest(&mut ds, &mut oracle, &cfg, &mut rng()).unwrap();
        assert_eq!(s.x_new, 1.75);

        let mut ds = Dataset::from_xy(truth.domain, &[(1.0, 1.0), (1.5, 1.5), (2.0, 2.0)]).unwrap();
        let s = split_biggest(&mut ds, &mut oracle, &cfg, &mut rng()).unwrap();
        assert_eq!(s.x_new, 1.25);
    }

    #[test]
    fn split_uses_median_effort() {
        let mut oracle = Scripted::new(&[1.5]);
        let d = Domain::new(0.0, 10.0).unwrap();
        let mut ds = Dataset::new(
            d,
            vec![
                Observation::new(1.0, 1.0, 1.0, 2.0),
                Observation::new(2.0, 2.0, 1.0, 6.0),
            ],
        )
        .unwrap();
        split_biggest(&mut ds, &mut oracle, &EngineConfig::new(1.0, 1), &mut rng()).unwrap();
        assert_eq!(oracle.calls, vec![(1.5, 4.0)]);
    }

    #[test]
    fn repair_single_point() {
        let mut oracle = knots_oracle(&[(1.0, 1.0), (2.0, 2.0)]);
        let d = Domain::new(1.0, 2.0).unwrap();
        let mut ds = Dataset::new(d, vec![obs(1.0, 1.0), obs(1.5, 0.9), obs(2.0, 2.0)]).unwrap();
        let out = repair_consistency(&mut ds, &mut oracle, &EngineConfig::new(1.0, 1), &mut rng())
            .unwrap();
        assert_eq!(out.calls, 1);
        assert_eq!(ds.points()[1].y, 1.5);
        assert!(ds.is_consistent());
    }

    #[test]
    fn repair_noop_on_consistent() {
        let mut oracle = knots_oracle(&[(1.0, 1.0), (2.0, 2.0)]);
        let d = Domain::new(1.0, 2.0).unwrap();
        let mut ds = Dataset::new(d, vec![obs(1.0, 1.0), obs(1.5, 1.2), obs(2.0, 2.0)]).unwrap();
        let before = ds.clone();
        let out = repair_consistency(&mut ds, &mut oracle, &EngineConfig::new(1.0, 1), &mut rng())
            .unwrap();
        assert_eq!(out, RepairOutcome::default());
        assert_eq!(ds, before);
    }

    #[test]
    fn repair_cascades_left_to_right() {
        // Exact values 1, 1.5, 1.6 at x = 1, 1.5, 2.
        let mut oracle = knots_oracle(&[(1.0, 1.0), (1.5, 1.5), (2.0, 1.6)]);
        let d = Domain::new(1.0, 2.0).unwrap();
        let mut ds = Dataset::new(d, vec![obs(1.0, 1.0), obs(1.5, 0.9), obs(2.0, 1.0)]).unwrap();
        // Only point 1 is flagged before the sweep.
        assert!(ds.points()[2].consistent);
        let out = repair_consistency(&mut ds, &mut oracle, &EngineConfig::new(1.0, 1), &mut rng())
            .unwrap();
        assert_eq!(out.repaired, 2);
        let ys: Vec<f64> = ds.points().iter().map(|p| p.y).collect();
        assert_eq!(ys, vec![1.0, 1.5, 1.6]);
    }

    #[test]
    fn repair_clamps_on_stall() {
        let mut oracle = Scripted::new(&[0.1, 0.2, 0.3]);
        let d = Domain::new(0.0, 10.0).unwrap();
        let mut ds = Dataset::new(
            d,
            vec![
                Observation::new(1.0, 1.0, 7.0, 1.0),
                Observation::new(2.0, 0.5, 3.0, 1.0),
                Observation::new(3.0, 2.0, 9.0, 1.0),
            ],
        )
        .unwrap();
        let mut cfg = EngineConfig::new(1.0, 1);
        cfg.max_escalations = 3;
        let out = repair_consistency(&mut ds, &mut oracle, &cfg, &mut rng()).unwrap();
        assert_eq!(out.stalls, 1);
        assert_eq!(out.calls, 3);
        assert_eq!(ds.points()[1].y, 1.0);
        assert_eq!(ds.points()[1].reliability, 3.0);
        assert!(ds.is_consistent());
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig::new(0.0, 1).validate().is_err());
        let mut c = EngineConfig::new(1.0, 1);
        c.max_escalations = 0;
        assert!(c.validate().is_err());
        let mut c = EngineConfig::new(1.0, 1);
        c.effort_schedule = EffortSchedule::Geometric { ratio: 1.0 };
        assert!(c.validate().is_err());
        assert!(EngineConfig::new(15.0, 300).validate().is_ok());
    }

    #[test]
    fn linear_schedule() {
        let s = EffortSchedule::Linear { step: 3.0 };
        assert_eq!(s.effort(2.0, 2), 8.0);
    }

    #[test]
    fn inconsistent_start_is_rejected() {
        let d = Domain::new(1.0, 2.0).unwrap();
        let ds = Dataset::new(d, vec![obs(1.0, 1.0), obs(2.0, 0.5)]).unwrap();
        assert!(matches!(
            Engine::new(ds, EngineConfig::new(1.0, 1)),
            Err(EngineError::InconsistentStart(1))
        ));
    }

    #[test]
    fn oracle_failure_carries_partial_trace() {
        let d = Domain::new(0.0, 10.0).unwrap();
        let ds = Dataset::new(d, vec![obs(1.0, 1.0), obs(2.0, 2.0)]).unwrap();
        // Two splits succeed, the third call runs dry.
        let mut oracle = Scripted::new(&[1.5, 1.25]);
        let cfg = EngineConfig::new(1e-9, 10);
        let err = run(ds, &mut oracle, &cfg, &mut rng()).unwrap_err();
        match err {
            EngineError::Oracle {
                partial: Some(t), ..
            } => {
                assert_eq!(t.records.len(), 2);
                assert_eq!(t.final_points.len(), 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn noise_free_splits_shrink_area_exactly() {
        // Exact replay: with exact values the new total area is the old one
        // minus half the biggest cell.
        let truth = Linear {
            slope: 2.0,
            intercept: -1.0,
            domain: Domain::new(1.0, 2.0).unwrap(),
        };
        let mut oracle = ExactOracle { truth };
        let ds = Dataset::from_xy(truth.domain, &[(1.0, 1.0), (2.0, 3.0)]).unwrap();
        let mut engine = Engine::new(ds, EngineConfig::new(1e-12, 40)).unwrap();
        let mut r = rng();
        let mut prev_area = engine.dataset().total_area().unwrap();
        let mut prev_biggest = engine.dataset().biggest_cell().unwrap().1;
        while let Some(rec) = engine.step(&mut oracle, &mut r).unwrap() {
            assert_eq!(rec.branch, Branch::Split);
            let expected = prev_area - prev_biggest / 2.0;
            assert!((rec.total_area - expected).abs() < 1e-14);
            assert!(rec.total_area < prev_area);
            prev_area = rec.total_area;
            prev_biggest = rec.a_plus;
        }
        assert_eq!(engine.records().len(), 40);
    }

    #[test]
    fn stop_area_halts_early() {
        let truth = Linear {
            slope: 1.0,
            intercept: 0.0,
            domain: Domain::new(1.0, 2.0).unwrap(),
        };
        let mut oracle = ExactOracle { truth };
        let ds = Dataset::from_xy(truth.domain, &[(1.0, 1.0), (2.0, 2.0)]).unwrap();
        let mut cfg = EngineConfig::new(1e-12, 1000);
        cfg.stop_area = Some(0.1);
        let trace = run(ds, &mut oracle, &cfg, &mut rng()).unwrap();
        let last = trace.records.last().unwrap();
        assert!(last.total_area <= 0.1);
        assert!(trace.records[trace.records.len() - 2].total_area > 0.1);
    }

    #[test]
    fn trace_csv_header_and_sums() {
        let truth = Linear {
            slope: 1.0,
            intercept: 0.0,
            domain: Domain::new(1.0, 2.0).unwrap(),
        };
        let mut oracle = ExactOracle { truth };
        let ds = Dataset::from_xy(truth.domain, &[(1.0, 1.0), (2.0, 2.0)]).unwrap();
        let trace = run(ds, &mut oracle, &EngineConfig::new(1.0, 5), &mut rng()).unwrap();
        let csv = trace.to_csv();
        assert!(csv.starts_with("n,branch,calls,I,q_min,A,WA\n"));
        let sum: u64 = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().parse::<u64>().unwrap())
            .sum();
        assert_eq!(sum, trace.total_calls);
    }
}
