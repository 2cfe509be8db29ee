//! Run configuration: a TOML document plus flag overrides, resolved into a
//! fully explicit [`RunConfig`] before any oracle call.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use monorecon::engine::{EffortSchedule, EngineConfig, FreshEffort};
use monorecon::oracles::{GroundTruth, InputLaw, QualityMode};
use monorecon::ouq::PerformanceFn;
use monorecon::Domain;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Synthetic,
    Cdf,
    Ouq,
}

/// File and flag layer: everything optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub exchange_rate: Option<f64>,
    pub iterations: Option<usize>,
    pub stop_area: Option<f64>,
    pub quality_mode: Option<QualityMode>,
    #[serde(default)]
    pub initial: RawInitial,
    #[serde(default)]
    pub effort: RawEffort,
    pub synthetic: Option<RawSynthetic>,
    pub cdf: Option<RawCdf>,
    pub ouq: Option<RawOuq>,
    #[serde(default)]
    pub metrics: RawMetrics,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInitial {
    pub count: Option<usize>,
    pub points: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEffort {
    pub initial: Option<f64>,
    pub max_escalations: Option<u32>,
    pub schedule: Option<EffortSchedule>,
    pub fresh: Option<FreshEffort>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSynthetic {
    pub variant: Option<GroundTruth>,
    pub effort_exponent: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCdf {
    pub laws: Option<Vec<InputLaw>>,
    pub boxes: Option<Vec<(f64, f64)>>,
    pub g: Option<PerformanceFn>,
    pub domain: Option<(f64, f64)>,
    pub base_samples: Option<usize>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOuq {
    pub boxes: Option<Vec<(f64, f64)>>,
    pub g: Option<PerformanceFn>,
    pub mean: Option<f64>,
    pub mean_estimate: Option<MeanEstimate>,
    pub tolerance: Option<f64>,
    pub domain: Option<(f64, f64)>,
    pub population: Option<usize>,
    pub generations: Option<usize>,
    pub differential_weight: Option<f64>,
    pub crossover: Option<f64>,
    pub penalty: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMetrics {
    pub grid_size: Option<usize>,
    pub fit_from: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub variant: GroundTruth,
    /// Error law `ε / effort^p`. `0` redraws independently on every call.
    pub effort_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdfConfig {
    pub laws: Vec<InputLaw>,
    pub boxes: Vec<(f64, f64)>,
    pub g: PerformanceFn,
    pub domain: (f64, f64),
    pub base_samples: usize,
    pub delta: f64,
}

/// Monte-Carlo estimate of the mean constraint from a reference law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanEstimate {
    pub laws: Vec<InputLaw>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuqConfig {
    pub boxes: Vec<(f64, f64)>,
    pub g: PerformanceFn,
    /// Target of `E[g]`; exactly one of this and `mean_estimate` is set.
    pub mean: Option<f64>,
    pub mean_estimate: Option<MeanEstimate>,
    pub tolerance: f64,
    pub domain: (f64, f64),
    pub population: usize,
    /// Generations at unit effort.
    pub generations: usize,
    pub differential_weight: f64,
    pub crossover: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub grid_size: usize,
    /// First iteration included in the rate fits.
    pub fit_from: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffortConfig {
    pub initial: f64,
    pub max_escalations: u32,
    pub schedule: EffortSchedule,
    pub fresh: FreshEffort,
}

/// Fully resolved configuration, echoed into every trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub study: Study,
    pub seed: u64,
    pub exchange_rate: f64,
    pub iterations: usize,
    pub stop_area: Option<f64>,
    pub quality_mode: QualityMode,
    pub initial_points: Vec<f64>,
    pub effort: EffortConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cdf: Option<CdfConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ouq: Option<OuqConfig>,
    pub metrics: MetricsConfig,
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))
    }

    pub fn resolve(self, study: Study) -> Result<RunConfig, CliError> {
        let (synthetic, cdf, ouq) = match study {
            Study::Synthetic => {
                let raw = self.synthetic.clone().unwrap_or_default();
                let s = SyntheticConfig {
                    variant: raw.variant.unwrap_or(GroundTruth::Continuous),
                    effort_exponent: raw.effort_exponent.unwrap_or(0.0),
                };
                (Some(s), None, None)
            }
            Study::Cdf => (
                None,
                Some(resolve_cdf(self.cdf.clone().unwrap_or_default())),
                None,
            ),
            Study::Ouq => (
                None,
                None,
                Some(resolve_ouq(self.ouq.clone().unwrap_or_default())),
            ),
        };
        let (er, iters, escalations, schedule) = match study {
            // Effort-free noise only needs effort as a retry counter.
            Study::Synthetic if synthetic.as_ref().is_some_and(|s| s.effort_exponent == 0.0) => {
                (15.0, 300, 40, EffortSchedule::Linear { step: 1.0 })
            }
            Study::Synthetic => (15.0, 300, 40, EffortSchedule::default()),
            // Sample counts scale with effort and a stalled redo keeps its
            // effort, so geometric growth would compound across iterations.
            Study::Cdf => (15.0, 300, 8, EffortSchedule::Linear { step: 1.0 }),
            // Optimiser calls are expensive; escalate additively and stop early.
            Study::Ouq => (1e4, 10, 3, EffortSchedule::Linear { step: 1.0 }),
        };
        let effort = EffortConfig {
            initial: self.effort.initial.unwrap_or(1.0),
            max_escalations: self.effort.max_escalations.unwrap_or(escalations),
            schedule: self.effort.schedule.unwrap_or(schedule),
            fresh: self.effort.fresh.unwrap_or_default(),
        };
        let mut cfg = RunConfig {
            study,
            seed: self.seed.unwrap_or(0),
            exchange_rate: self.exchange_rate.unwrap_or(er),
            iterations: self.iterations.unwrap_or(iters),
            stop_area: self.stop_area,
            quality_mode: self.quality_mode.unwrap_or_default(),
            initial_points: Vec::new(),
            effort,
            synthetic,
            cdf,
            ouq,
            metrics: MetricsConfig {
                grid_size: self.metrics.grid_size.unwrap_or(2000),
                fit_from: self.metrics.fit_from.unwrap_or(10),
            },
        };
        let domain = cfg.domain()?;
        cfg.initial_points = match (self.initial.points, self.initial.count) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give either initial.points or initial.count, not both".into(),
                ))
            }
            (Some(p), None) => p,
            (None, c) => domain.equispaced(c.unwrap_or(2)),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn resolve_cdf(raw: RawCdf) -> CdfConfig {
    CdfConfig {
        laws: raw.laws.unwrap_or_else(|| vec![InputLaw::Uniform]),
        boxes: raw.boxes.unwrap_or_else(|| vec![(0.0, 1.0)]),
        g: raw.g.unwrap_or(PerformanceFn::Identity),
        domain: raw.domain.unwrap_or((0.0, 1.0)),
        base_samples: raw.base_samples.unwrap_or(200),
        delta: raw.delta.unwrap_or(0.05),
    }
}

fn resolve_ouq(raw: RawOuq) -> OuqConfig {
    let mean = match (&raw.mean, &raw.mean_estimate) {
        (None, None) => Some(0.5),
        _ => raw.mean,
    };
    OuqConfig {
        boxes: raw.boxes.unwrap_or_else(|| vec![(0.0, 1.0)]),
        g: raw.g.unwrap_or(PerformanceFn::Identity),
        mean,
        mean_estimate: raw.mean_estimate,
        tolerance: raw.tolerance.unwrap_or(1e-7),
        domain: raw.domain.unwrap_or((0.0, 0.9)),
        population: raw.population.unwrap_or(40),
        generations: raw.generations.unwrap_or(20),
        differential_weight: raw.differential_weight.unwrap_or(0.8),
        crossover: raw.crossover.unwrap_or(0.9),
        penalty: raw.penalty.unwrap_or(100.0),
    }
}

impl RunConfig {
    pub fn domain(&self) -> Result<Domain, CliError> {
        let (lo, hi) = match self.study {
            Study::Synthetic => (1.0, 2.0),
            Study::Cdf => self.cdf.as_ref().expect("resolved").domain,
            Study::Ouq => self.ouq.as_ref().expect("resolved").domain,
        };
        Domain::new(lo, hi).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            exchange_rate: self.exchange_rate,
            max_iterations: self.iterations,
            stop_area: self.stop_area,
            max_escalations: self.effort.max_escalations,
            effort_schedule: self.effort.schedule,
            fresh_effort: self.effort.fresh,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.engine_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.effort.initial >= 1.0 && self.effort.initial.is_finite()) {
            return bad(format!(
                "initial effort must be at least 1, got {}",
                self.effort.initial
            ));
        }
        let domain = self.domain()?;
        if self.initial_points.len() < 2 {
            return bad("at least two initial points are required".into());
        }
        if self
            .initial_points
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return bad("initial points must be strictly increasing".into());
        }
        if let Some(x) = self.initial_points.iter().find(|&&x| !domain.contains(x)) {
            return bad(format!(
                "initial point {x} outside [{}, {}]",
                domain.lo, domain.hi
            ));
        }
        if self.metrics.grid_size < monorecon::metrics::MIN_GRID {
            return bad(format!(
                "metrics.grid_size must be at least {}",
                monorecon::metrics::MIN_GRID
            ));
        }
        if let Some(s) = &self.synthetic {
            if !(s.effort_exponent >= 0.0 && s.effort_exponent.is_finite()) {
                return bad(format!(
                    "synthetic.effort_exponent must be non-negative, got {}",
                    s.effort_exponent
                ));
            }
        }
        if let Some(c) = &self.cdf {
            if c.base_samples == 0 {
                return bad("cdf.base_samples must be positive".into());
            }
            if !(c.delta > 0.0 && c.delta < 1.0) {
                return bad(format!("cdf.delta must lie in (0, 1), got {}", c.delta));
            }
            self.cdf_sampler().validate().map_err(CliError::Config)?;
        }
        if let Some(o) = &self.ouq {
            match (&o.mean, &o.mean_estimate) {
                (Some(m), None) if m.is_finite() => {}
                (None, Some(est)) => {
                    if est.samples == 0 {
                        return bad("ouq.mean_estimate.samples must be positive".into());
                    }
                    if est.laws.len() != 1 && est.laws.len() != o.boxes.len() {
                        return bad("ouq.mean_estimate.laws must match the inputs".into());
                    }
                }
                _ => return bad("set exactly one of ouq.mean and ouq.mean_estimate".into()),
            }
            let spec = monorecon::ouq::AdmissibleSpec::with_mean(
                o.boxes.clone(),
                o.g.clone(),
                o.mean.unwrap_or(0.0),
                o.tolerance,
            );
            spec.validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
            self.de_config()
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn cdf_sampler(&self) -> monorecon::oracles::Sampler {
        let c = self.cdf.as_ref().expect("cdf study");
        monorecon::oracles::Sampler {
            laws: c.laws.clone(),
            boxes: c.boxes.clone(),
            g: c.g.clone(),
        }
    }

    pub fn de_config(&self) -> monorecon::ouq::DEConfig {
        let o = self.ouq.as_ref().expect("ouq study");
        monorecon::ouq::DEConfig {
            population: o.population,
            generations: o.generations,
            differential_weight: o.differential_weight,
            crossover: o.crossover,
            penalty: o.penalty,
            seed: self.seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
