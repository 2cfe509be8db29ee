//! Adaptive reconstruction of monotone functions from underestimating,
//! variable-quality evaluations.
//!
//! A [`dataset::Dataset`] holds observations with reliability scores. The
//! [`engine`] repeatedly either re-evaluates the worst point with more effort
//! or splits the largest bounding rectangle, depending on how the weighted
//! area compares with an exchange rate. [`oracles`] supplies synthetic and
//! Monte-Carlo evaluators, and [`ouq`] an evaluator for optimal upper bounds
//! on a probability of failure.

// Negated float comparisons are deliberate: they reject NaN together with
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod engine;
pub mod metrics;
pub mod oracles;
pub mod ouq;
pub mod quadrature;
pub mod rng;

pub use dataset::{Dataset, Domain, Observation, StepFunction};
pub use engine::{run, Branch, Engine, EngineConfig, EngineError, IterationRecord, RunTrace};
pub use oracles::{Oracle, OracleError, QualityMode};
pub use rng::StreamRng;
