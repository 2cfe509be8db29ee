//! Evaluators `G(x, effort)` that return underestimates of the target.
//!
//! Every oracle here promises `y <= F(x)`. The exact and synthetic oracles
//! keep that promise on every call; the Monte-Carlo CDF oracle keeps it with
//! probability at least `1 - delta` per call.

mod mc;
pub mod truth;

pub use mc::{dkw_margin, InputLaw, McCdfOracle, Sampler};
pub use truth::{Beta22Cdf, GroundTruth, Linear, Truth, UniformCdf};

use rand::{Rng, RngCore};
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Domain;

/// `Φ⁻¹(0.9)`.
pub const Z_90: f64 = 1.281_551_565_544_600_5;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("x = {x} outside oracle domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("invalid effort {0}")]
    InvalidEffort(f64),
    #[error("sampler failed: {0}")]
    Sampler(String),
    #[error("bad oracle state: {0}")]
    State(String),
    /// Raised by an evaluator implemented outside this crate.
    #[error("evaluator failed: {0}")]
    External(String),
}

/// How an oracle turns a draw into a reliability score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityMode {
    /// Inverse relative error `F / (F - y)`; needs the ground truth.
    #[default]
    Validation,
    /// The effort spent.
    Effort,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub y: f64,
    pub reliability: f64,
}

/// Largest reliability handed out. Keeps weighted areas finite when a draw
/// hits the target exactly.
pub const MAX_RELIABILITY: f64 = 1e300;

pub trait Oracle {
    fn domain(&self) -> Domain;

    fn evaluate(
        &mut self,
        x: f64,
        effort: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Evaluation, OracleError>;

    /// Internal state that must survive a checkpoint. Stateless oracles keep
    /// the default.
    fn snapshot(&self) -> serde_json::Value {
        serde_json::Value::Null
    }

    fn restore(&mut self, _state: &serde_json::Value) -> Result<(), OracleError> {
        Ok(())
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn domain(&self) -> Domain {
        (**self).domain()
    }

    fn evaluate(
        &mut self,
        x: f64,
        effort: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Evaluation, OracleError> {
        (**self).evaluate(x, effort, rng)
    }

    fn snapshot(&self) -> serde_json::Value {
        (**self).snapshot()
    }

    fn restore(&mut self, state: &serde_json::Value) -> Result<(), OracleError> {
        (**self).restore(state)
    }
}

fn check_domain(domain: Domain, x: f64) -> Result<(), OracleError> {
    if domain.contains(x) {
        Ok(())
    } else {
        Err(OracleError::OutOfDomain {
            x,
            lo: domain.lo,
            hi: domain.hi,
        })
    }
}

fn check_effort(effort: f64) -> Result<(), OracleError> {
    if effort >= 1.0 && effort.is_finite() {
        Ok(())
    } else {
        Err(OracleError::InvalidEffort(effort))
    }
}

/// Inverse relative error of `y` as an estimate of `truth`.
pub fn inverse_relative_error(truth: f64, y: f64) -> f64 {
    let gap = truth - y;
    if gap > 0.0 {
        (truth / gap).abs().min(MAX_RELIABILITY)
    } else {
        MAX_RELIABILITY
    }
}

/// Noise-free oracle: returns the target exactly, reliability = effort.
#[derive(Debug, Clone)]
pub struct ExactOracle<T> {
    pub truth: T,
}

impl<T: Truth> Oracle for ExactOracle<T> {
    fn domain(&self) -> Domain {
        self.truth.domain()
    }

    fn evaluate(
        &mut self,
        x: f64,
        effort: f64,
        _rng: &mut dyn RngCore,
    ) -> Result<Evaluation, OracleError> {
        check_domain(self.truth.domain(), x)?;
        if !(effort > 0.0 && effort.is_finite()) {
            return Err(OracleError::InvalidEffort(effort));
        }
        Ok(Evaluation {
            y: self.truth.value(x),
            reliability: effort,
        })
    }
}

/// Log-normal error model calibrated so that `P[ε ≤ 0.1 F(x)] = 0.9` at
/// unit effort; the drawn error is divided by `effort^effort_exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    /// Relative error threshold met with probability [`NoiseModel::coverage_z`].
    pub relative_threshold: f64,
    /// Standard normal quantile of the calibration probability.
    pub coverage_z: f64,
    /// `1` makes the error inversely proportional to effort; `0` makes every
    /// call an independent redraw from the unit-effort law.
    pub effort_exponent: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            relative_threshold: 0.1,
            coverage_z: Z_90,
            effort_exponent: 1.0,
        }
    }
}

impl NoiseModel {
    /// Log-location `μ(x)` for a target value `F(x) > 0`.
    pub fn mu(&self, target: f64) -> f64 {
        (self.relative_threshold * target).ln() - self.coverage_z * self.sigma
    }

    pub fn draw_error(&self, target: f64, rng: &mut dyn RngCore) -> Result<f64, OracleError> {
        let law = LogNormal::new(self.mu(target), self.sigma)
            .map_err(|e| OracleError::State(format!("noise model: {e}")))?;
        Ok(rng.sample(law))
    }

    /// Error of one call at `effort`.
    pub fn draw_scaled(
        &self,
        target: f64,
        effort: f64,
        rng: &mut dyn RngCore,
    ) -> Result<f64, OracleError> {
        let eps = self.draw_error(target, rng)?;
        Ok(if self.effort_exponent == 0.0 {
            eps
        } else if self.effort_exponent == 1.0 {
            eps / effort
        } else {
            eps / effort.powf(self.effort_exponent)
        })
    }
}

/// The validation oracle: `y = F(x) - ε / effort` under the default noise
/// model.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    pub truth: GroundTruth,
    pub noise: NoiseModel,
    pub mode: QualityMode,
}

impl SyntheticOracle {
    pub fn new(truth: GroundTruth, mode: QualityMode) -> Self {
        Self {
            truth,
            noise: NoiseModel::default(),
            mode,
        }
    }
}

impl Oracle for SyntheticOracle {
    fn domain(&self) -> Domain {
        self.truth.domain()
    }

    fn evaluate(
        &mut self,
        x: f64,
        effort: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Evaluation, OracleError> {
        check_domain(self.truth.domain(), x)?;
        check_effort(effort)?;
        let target = self.truth.value(x);
        let y = target - self.noise.draw_scaled(target, effort, rng)?;
        let reliability = match self.mode {
            QualityMode::Validation => inverse_relative_error(target, y),
            QualityMode::Effort => effort,
        };
        Ok(Evaluation { y, reliability })
    }
}
