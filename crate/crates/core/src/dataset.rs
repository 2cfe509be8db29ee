//! Observation set, consistency bookkeeping, cell areas and the step-function
//! reconstruction.
//!
//! Indices are 0-based throughout. Point `0` is the leftmost observation and
//! carries no consistency constraint; cell `i` spans points `i` and `i + 1`.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("abscissae must be strictly increasing (point {0})")]
    Unsorted(usize),
    #[error("abscissa {x} already present")]
    DuplicateAbscissa { x: f64 },
    #[error("abscissa {x} outside domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("invalid observation at x = {x}: {reason}")]
    InvalidObservation { x: f64, reason: &'static str },
    #[error("dataset is inconsistent at point {0}; repair it first")]
    Inconsistent(usize),
    #[error("invalid domain [{0}, {1}]")]
    InvalidDomain(f64, f64),
    #[error("point index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Result<Self, DatasetError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(DatasetError::InvalidDomain(lo, hi));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// `count` equispaced abscissae including both endpoints.
    pub fn equispaced(&self, count: usize) -> Vec<f64> {
        match count {
            0 => Vec::new(),
            1 => vec![self.lo],
            _ => {
                let step = self.width() / (count - 1) as f64;
                let mut xs: Vec<f64> = (0..count).map(|k| self.lo + k as f64 * step).collect();
                xs[count - 1] = self.hi;
                xs
            }
        }
    }
}

/// One evaluated site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
    pub reliability: f64,
    pub consistent: bool,
    pub effort: f64,
}

impl Observation {
    /// New observation, provisionally consistent; the owning dataset
    /// recomputes the flag on insertion.
    pub fn new(x: f64, y: f64, reliability: f64, effort: f64) -> Self {
        Self {
            x,
            y,
            reliability,
            consistent: true,
            effort,
        }
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |reason| DatasetError::InvalidObservation { x: self.x, reason };
        if !self.x.is_finite() {
            return Err(bad("x is not finite"));
        }
        if !self.y.is_finite() {
            return Err(bad("y is not finite"));
        }
        if !(self.reliability > 0.0) {
            return Err(bad("reliability must be positive"));
        }
        if !(self.effort > 0.0 && self.effort.is_finite()) {
            return Err(bad("effort must be positive and finite"));
        }
        Ok(())
    }
}

/// Index of the first minimum. Ties go to the smallest index.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if !(v < values[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Index of the first maximum. Ties go to the smallest index.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if !(v > values[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// `min(qualities) * sum(areas)`; `0` if any quality is zero.
pub fn weighted_area_of(areas: &[f64], qualities: &[f64]) -> f64 {
    let q_min = qualities.iter().copied().fold(f64::INFINITY, f64::min);
    if !(q_min > 0.0) {
        return 0.0;
    }
    q_min * areas.iter().sum::<f64>()
}

/// x-ordered observation set on a fixed domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<Observation>,
    domain: Domain,
}

impl Dataset {
    /// Builds a dataset from points already sorted by strictly increasing x.
    /// Consistency flags are recomputed; incoming flags are ignored.
    pub fn new(domain: Domain, points: Vec<Observation>) -> Result<Self, DatasetError> {
        if points.len() < 2 {
            return Err(DatasetError::TooFewPoints(points.len()));
        }
        for (i, p) in points.iter().enumerate() {
            p.validate()?;
            if !domain.contains(p.x) {
                return Err(DatasetError::OutOfDomain {
                    x: p.x,
                    lo: domain.lo,
                    hi: domain.hi,
                });
            }
            if i > 0 && !(p.x > points[i - 1].x) {
                return Err(DatasetError::Unsorted(i));
            }
        }
        let mut ds = Self { points, domain };
        ds.refresh_flags();
        Ok(ds)
    }

    /// Convenience constructor from `(x, y)` pairs with unit reliability and
    /// effort.
    pub fn from_xy(domain: Domain, pairs: &[(f64, f64)]) -> Result<Self, DatasetError> {
        let points = pairs
            .iter()
            .map(|&(x, y)| Observation::new(x, y, 1.0, 1.0))
            .collect();
        Self::new(domain, points)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn points(&self) -> &[Observation] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Observation> {
        self.points.get(i)
    }

    fn refresh_flags(&mut self) {
        if let Some(first) = self.points.first_mut() {
            first.consistent = true;
        }
        for i in 1..self.points.len() {
            self.points[i].consistent = self.points[i].y >= self.points[i - 1].y;
        }
    }

    /// First inconsistent point, if any.
    pub fn first_inconsistency(&self) -> Option<usize> {
        self.points.iter().position(|p| !p.consistent)
    }

    pub fn is_consistent(&self) -> bool {
        self.first_inconsistency().is_none()
    }

    /// Reliability for the leftmost point, reliability times consistency
    /// elsewhere.
    pub fn quality(&self, i: usize) -> f64 {
        let p = &self.points[i];
        if i == 0 || p.consistent {
            p.reliability
        } else {
            0.0
        }
    }

    pub fn qualities(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.quality(i)).collect()
    }

    pub fn min_quality(&self) -> f64 {
        self.qualities().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn min_reliability(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.reliability)
            .fold(f64::INFINITY, f64::min)
    }

    /// Argmin of quality, ties to the leftmost point.
    pub fn worst_quality_index(&self) -> usize {
        argmin_first(&self.qualities()).unwrap_or(0)
    }

    /// `(x_{i+1} - x_i)(y_{i+1} - y_i)` for every cell.
    pub fn cell_areas(&self) -> Result<Vec<f64>, DatasetError> {
        if let Some(i) = self.first_inconsistency() {
            return Err(DatasetError::Inconsistent(i));
        }
        Ok(self
            .points
            .windows(2)
            .map(|w| (w[1].x - w[0].x) * (w[1].y - w[0].y))
            .collect())
    }

    pub fn total_area(&self) -> Result<f64, DatasetError> {
        Ok(self.cell_areas()?.iter().sum())
    }

    /// Minimum quality times total area. An inconsistent dataset has a zero
    /// quality somewhere and reports `0`, which always selects a redo.
    pub fn weighted_area(&self) -> f64 {
        match self.cell_areas() {
            Ok(areas) => weighted_area_of(&areas, &self.qualities()),
            Err(_) => 0.0,
        }
    }

    /// `(i_+, a_+)`: the largest cell, ties to the leftmost.
    pub fn biggest_cell(&self) -> Result<(usize, f64), DatasetError> {
        let areas = self.cell_areas()?;
        let i = argmax_first(&areas).ok_or(DatasetError::TooFewPoints(self.len()))?;
        Ok((i, areas[i]))
    }

    /// Median of the stored efforts (mean of the two middle values for an
    /// even count).
    pub fn median_effort(&self) -> f64 {
        let mut efforts: Vec<f64> = self.points.iter().map(|p| p.effort).collect();
        efforts.sort_by(f64::total_cmp);
        let n = efforts.len();
        if n % 2 == 1 {
            efforts[n / 2]
        } else {
            0.5 * (efforts[n / 2 - 1] + efforts[n / 2])
        }
    }

    /// Inserts a new site, keeping x order, and returns its index.
    pub fn insert(&mut self, obs: Observation) -> Result<usize, DatasetError> {
        obs.validate()?;
        if !self.domain.contains(obs.x) {
            return Err(DatasetError::OutOfDomain {
                x: obs.x,
                lo: self.domain.lo,
                hi: self.domain.hi,
            });
        }
        let idx = self.points.partition_point(|p| p.x < obs.x);
        if self.points.get(idx).is_some_and(|p| p.x == obs.x) {
            return Err(DatasetError::DuplicateAbscissa { x: obs.x });
        }
        self.points.insert(idx, obs);
        self.refresh_flags();
        Ok(idx)
    }

    /// Replaces the measurement at point `i` in place (x is kept).
    pub fn replace(
        &mut self,
        i: usize,
        y: f64,
        reliability: f64,
        effort: f64,
    ) -> Result<(), DatasetError> {
        let x = self
            .points
            .get(i)
            .ok_or(DatasetError::IndexOutOfRange(i))?
            .x;
        let obs = Observation::new(x, y, reliability, effort);
        obs.validate()?;
        self.points[i] = obs;
        self.refresh_flags();
        Ok(())
    }

    pub fn reconstruct(&self) -> Result<StepFunction, DatasetError> {
        if let Some(i) = self.first_inconsistency() {
            return Err(DatasetError::Inconsistent(i));
        }
        Ok(StepFunction {
            breakpoints: self.points.iter().map(|p| p.x).collect(),
            levels: self.points.iter().map(|p| p.y).collect(),
            right_end: self.domain.hi,
        })
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing csv into memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Reads a dataset written by [`Dataset::write_csv`]. Consistency flags
    /// in the file are checked against the recomputed ones.
    pub fn read_csv<R: io::Read>(domain: Domain, reader: R) -> Result<Self, DatasetError> {
        let mut r = csv::Reader::from_reader(reader);
        let mut points = Vec::new();
        for row in r.deserialize() {
            let obs: Observation = row?;
            points.push(obs);
        }
        let stored: Vec<bool> = points.iter().map(|p| p.consistent).collect();
        let ds = Self::new(domain, points)?;
        if let Some(i) = ds
            .points
            .iter()
            .zip(&stored)
            .position(|(p, &flag)| p.consistent != flag)
        {
            return Err(DatasetError::InvalidObservation {
                x: ds.points[i].x,
                reason: "stored consistency flag disagrees with the data",
            });
        }
        Ok(ds)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("x = {x} lies below the first breakpoint {first}")]
    BelowFirstBreakpoint { x: f64, first: f64 },
    #[error("x = {x} lies beyond the right end {end}")]
    BeyondRightEnd { x: f64, end: f64 },
}

/// Right-continuous piecewise-constant reconstruction: `levels[i]` on
/// `[breakpoints[i], breakpoints[i + 1])`, and the last level on
/// `[breakpoints[I-1], right_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub breakpoints: Vec<f64>,
    pub levels: Vec<f64>,
    pub right_end: f64,
}

impl StepFunction {
    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        let first = self.breakpoints[0];
        if !(x >= first) {
            return Err(EvalError::BelowFirstBreakpoint { x, first });
        }
        if x > self.right_end {
            return Err(EvalError::BeyondRightEnd {
                x,
                end: self.right_end,
            });
        }
        let i = self.breakpoints.partition_point(|&b| b <= x) - 1;
        Ok(self.levels[i])
    }

    /// Level used just left of `x` (for `x` strictly above the first
    /// breakpoint).
    pub fn left_limit(&self, x: f64) -> Result<f64, EvalError> {
        let first = self.breakpoints[0];
        if !(x > first) {
            return Err(EvalError::BelowFirstBreakpoint { x, first });
        }
        if x > self.right_end {
            return Err(EvalError::BeyondRightEnd {
                x,
                end: self.right_end,
            });
        }
        let i = self.breakpoints.partition_point(|&b| b < x) - 1;
        Ok(self.levels[i])
    }

    /// `(lo, hi, level)` for every constant piece, including the closing
    /// piece `[x_I, right_end]` when it has positive width.
    pub fn pieces(&self) -> Vec<(f64, f64, f64)> {
        let n = self.breakpoints.len();
        let mut out: Vec<(f64, f64, f64)> = (0..n - 1)
            .map(|i| (self.breakpoints[i], self.breakpoints[i + 1], self.levels[i]))
            .collect();
        if self.right_end > self.breakpoints[n - 1] {
            out.push((self.breakpoints[n - 1], self.right_end, self.levels[n - 1]));
        }
        out
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.levels.windows(2).all(|w| w[0] <= w[1])
    }
}
