use std::fmt;
use std::str::FromStr;

use rand::distr::Distribution;
use rand::{Rng, RngCore};
use rand_distr::Beta;
use serde::{Deserialize, Serialize};

use super::{check_domain, check_effort, Evaluation, Oracle, OracleError};
use crate::dataset::Domain;
use crate::ouq::PerformanceFn;

/// Marginal law of one input, rescaled onto its box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InputLaw {
    Uniform,
    Beta { alpha: f64, beta: f64 },
}

impl InputLaw {
    /// Draw on `[0, 1]`.
    pub fn sample_unit(&self, rng: &mut dyn RngCore) -> Result<f64, OracleError> {
        match *self {
            InputLaw::Uniform => Ok(rng.random::<f64>()),
            InputLaw::Beta { alpha, beta } => {
                let dist = Beta::new(alpha, beta)
                    .map_err(|e| OracleError::Sampler(format!("beta({alpha},{beta}): {e}")))?;
                Ok(dist.sample(rng))
            }
        }
    }
}

impl fmt::Display for InputLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputLaw::Uniform => write!(f, "uniform"),
            InputLaw::Beta { alpha, beta } => write!(f, "beta({alpha},{beta})"),
        }
    }
}

impl FromStr for InputLaw {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "uniform" {
            return Ok(InputLaw::Uniform);
        }
        let args = s
            .strip_prefix("beta(")
            .and_then(|rest| rest.strip_suffix(')'))
            .ok_or_else(|| format!("unknown input law `{s}`"))?;
        let (a, b) = args
            .split_once(',')
            .ok_or_else(|| format!("beta law needs two parameters: `{s}`"))?;
        let alpha: f64 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad alpha in `{s}`"))?;
        let beta: f64 = b.trim().parse().map_err(|_| format!("bad beta in `{s}`"))?;
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(format!("beta parameters must be positive: `{s}`"));
        }
        Ok(InputLaw::Beta { alpha, beta })
    }
}

impl TryFrom<String> for InputLaw {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<InputLaw> for String {
    fn from(law: InputLaw) -> Self {
        law.to_string()
    }
}

/// Draws `g(Ξ)` with independent inputs `Ξ_i ~ laws[i]` scaled onto
/// `boxes[i]`. A single law is reused for every input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampler {
    pub laws: Vec<InputLaw>,
    pub boxes: Vec<(f64, f64)>,
    pub g: PerformanceFn,
}

impl Sampler {
    pub fn dim(&self) -> usize {
        self.boxes.len()
    }

    fn law(&self, i: usize) -> InputLaw {
        if self.laws.len() == 1 {
            self.laws[0]
        } else {
            self.laws[i]
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.boxes.is_empty() {
            return Err("sampler needs at least one input".into());
        }
        if self.laws.len() != 1 && self.laws.len() != self.boxes.len() {
            return Err(format!(
                "{} laws for {} inputs",
                self.laws.len(),
                self.boxes.len()
            ));
        }
        for &(lo, hi) in &self.boxes {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(format!("invalid box [{lo}, {hi}]"));
            }
        }
        self.g.validate(self.dim())
    }

    pub fn draw_inputs(
        &self,
        rng: &mut dyn RngCore,
        out: &mut Vec<f64>,
    ) -> Result<(), OracleError> {
        out.clear();
        for (i, &(lo, hi)) in self.boxes.iter().enumerate() {
            let u = self.law(i).sample_unit(rng)?;
            out.push(lo + u * (hi - lo));
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut dyn RngCore) -> Result<f64, OracleError> {
        let mut xi = Vec::with_capacity(self.dim());
        self.draw_inputs(rng, &mut xi)?;
        let v = self.g.eval(&xi);
        if v.is_nan() {
            return Err(OracleError::Sampler(
                "performance function returned NaN".into(),
            ));
        }
        Ok(v)
    }

    /// Seeded Monte-Carlo mean of `g(Ξ)`.
    pub fn mean(&self, samples: usize, rng: &mut dyn RngCore) -> Result<f64, OracleError> {
        let mut sum = 0.0;
        for _ in 0..samples {
            sum += self.draw(rng)?;
        }
        Ok(sum / samples as f64)
    }
}

/// One-sided DKW margin `sqrt(ln(1/δ) / (2n))`.
pub fn dkw_margin(n: usize, delta: f64) -> f64 {
    ((1.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// Lower confidence bound on the CDF of `g(Ξ)`: the empirical CDF minus the
/// one-sided DKW margin, clamped at zero.
///
/// This oracle underestimates with probability at least `1 - delta` per call,
/// not surely.
#[derive(Debug, Clone)]
pub struct McCdfOracle {
    pub sampler: Sampler,
    pub domain: Domain,
    /// Samples drawn at unit effort.
    pub base_samples: usize,
    pub delta: f64,
}

impl McCdfOracle {
    pub fn samples_for(&self, effort: f64) -> usize {
        ((self.base_samples as f64 * effort).round() as usize).max(1)
    }

    /// The raw evaluation: `n` samples at threshold `x`.
    pub fn eval_with_samples(
        &self,
        x: f64,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Evaluation, OracleError> {
        let n = n.max(1);
        let mut below = 0usize;
        for _ in 0..n {
            if self.sampler.draw(rng)? <= x {
                below += 1;
            }
        }
        let ecdf = below as f64 / n as f64;
        Ok(Evaluation {
            y: (ecdf - dkw_margin(n, self.delta)).max(0.0),
            reliability: n as f64,
        })
    }
}

impl Oracle for McCdfOracle {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn evaluate(
        &mut self,
        x: f64,
        effort: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Evaluation, OracleError> {
        check_domain(self.domain, x)?;
        check_effort(effort)?;
        self.eval_with_samples(x, self.samples_for(effort), rng)
    }
}
