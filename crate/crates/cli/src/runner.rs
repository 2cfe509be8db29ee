//! Study execution: oracle construction, the consistent initial dataset, the
//! iteration loop with per-step error norms, checkpoints and resume.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use monorecon::engine::{repair_consistency, Engine, IterationRecord, RunTrace};
use monorecon::metrics::{error_norms, fit_rate_window, spearman, RateFit};
use monorecon::oracles::{
    Beta22Cdf, InputLaw, McCdfOracle, Oracle, Sampler, SyntheticOracle, Truth, UniformCdf,
};
use monorecon::ouq::{AdmissibleSpec, OuqOracle, PerformanceFn, TestFunction, ToyUpperBound};
use monorecon::rng::{RngState, StreamRng};
use monorecon::{Dataset, Observation};

use crate::config::{RunConfig, Study};
use crate::output;
use crate::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
const CHECKPOINT_VERSION: u32 = 1;
/// Attempts at a consistent synthetic start before giving up.
const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Write a checkpoint every `k` iterations.
    pub checkpoint_every: Option<usize>,
    /// Checkpoint and stop after this iteration without writing outputs.
    pub halt_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub n: usize,
    pub sup_err: f64,
    pub l1_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesFit {
    pub fit: Option<RateFit>,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config: RunConfig,
    pub trace: RunTrace,
    pub init_calls: u64,
    pub mean_constraint: Option<f64>,
    pub errors: Vec<ErrorRow>,
    /// Lowest `F − F_rec` over every error evaluation; negative means an
    /// overshoot was seen.
    pub min_signed_error: Option<f64>,
    pub sup: SeriesFit,
    pub l1: SeriesFit,
}

#[derive(Debug)]
pub enum Finish {
    Completed(Box<RunSummary>),
    Halted {
        iteration: usize,
        checkpoint: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub config: RunConfig,
    pub iteration: usize,
    pub rng: RngState,
    pub dataset_csv: String,
    pub records: Vec<IterationRecord>,
    pub oracle_state: serde_json::Value,
    pub init_calls: u64,
    pub mean_constraint: Option<f64>,
    pub errors: Vec<ErrorRow>,
    pub min_signed_error: Option<f64>,
}

struct Setup {
    oracle: Box<dyn Oracle>,
    truth: Option<Box<dyn Truth>>,
    mean_constraint: Option<f64>,
}

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let domain = cfg.domain()?;
    Ok(match cfg.study {
        Study::Synthetic => {
            let s = cfg.synthetic.as_ref().expect("resolved");
            let variant = s.variant;
            let mut oracle = SyntheticOracle::new(variant, cfg.quality_mode);
            oracle.noise.effort_exponent = s.effort_exponent;
            Setup {
                oracle: Box::new(oracle),
                truth: Some(Box::new(variant)),
                mean_constraint: None,
            }
        }
        Study::Cdf => {
            let c = cfg.cdf.as_ref().expect("resolved");
            let sampler = cfg.cdf_sampler();
            let truth = known_cdf(&sampler, domain);
            Setup {
                oracle: Box::new(McCdfOracle {
                    sampler,
                    domain,
                    base_samples: c.base_samples,
                    delta: c.delta,
                }),
                truth,
                mean_constraint: None,
            }
        }
        Study::Ouq => {
            let o = cfg.ouq.as_ref().expect("resolved");
            let mean = match (&o.mean, &o.mean_estimate) {
                (Some(m), _) => *m,
                (None, Some(est)) => {
                    let sampler = Sampler {
                        laws: est.laws.clone(),
                        boxes: o.boxes.clone(),
                        g: o.g.clone(),
                    };
                    let mut rng = StreamRng::new(cfg.seed, "mean");
                    sampler
                        .mean(est.samples, &mut rng)
                        .map_err(|e| CliError::Config(format!("mean estimate: {e}")))?
                }
                (None, None) => unreachable!("validated"),
            };
            let spec = AdmissibleSpec::with_mean(o.boxes.clone(), o.g.clone(), mean, o.tolerance);
            let truth = toy_bound(&spec, domain);
            let oracle = OuqOracle::new(spec, cfg.de_config(), domain)
                .map_err(|e| CliError::Config(e.to_string()))?;
            Setup {
                oracle: Box::new(oracle),
                truth,
                mean_constraint: Some(mean),
            }
        }
    })
}

/// Closed-form CDFs available for validation.
fn known_cdf(s: &Sampler, domain: monorecon::Domain) -> Option<Box<dyn Truth>> {
    if s.boxes != [(0.0, 1.0)] || s.g != PerformanceFn::Identity || s.laws.len() != 1 {
        return None;
    }
    match s.laws[0] {
        InputLaw::Uniform => Some(Box::new(UniformCdf { domain })),
        InputLaw::Beta { alpha, beta } if alpha == 2.0 && beta == 2.0 => {
            Some(Box::new(Beta22Cdf { domain }))
        }
        _ => None,
    }
}

/// The analytic optimum exists for one input on `[0, 1]` with `g` the
/// identity and only the mean constrained.
fn toy_bound(spec: &AdmissibleSpec, domain: monorecon::Domain) -> Option<Box<dyn Truth>> {
    let toy = spec.boxes == [(0.0, 1.0)]
        && spec.g == PerformanceFn::Identity
        && spec.constraints.len() == 1
        && spec.constraints[0].test == TestFunction::Performance;
    let mean = spec.constraints.first()?.target;
    (toy && domain.hi < 1.0).then(|| Box::new(ToyUpperBound { mean, domain }) as Box<dyn Truth>)
}

/// Builds the starting dataset. Synthetic studies redraw every point until
/// the set is consistent; the others escalate effort on offending points.
fn initial_dataset(
    cfg: &RunConfig,
    oracle: &mut dyn Oracle,
    rng: &mut StreamRng,
) -> Result<(Dataset, u64), CliError> {
    let mut calls = 0u64;
    match cfg.study {
        Study::Synthetic => {
            for _ in 0..MAX_REDRAWS {
                let ds = draw_initial(cfg, oracle, rng, &mut calls)?;
                if ds.is_consistent() {
                    return Ok((ds, calls));
                }
            }
            Err(CliError::Runtime(format!(
                "no consistent initial dataset after {MAX_REDRAWS} draws"
            )))
        }
        Study::Cdf | Study::Ouq => {
            let mut ds = draw_initial(cfg, oracle, rng, &mut calls)?;
            let fix =
                repair_consistency(&mut ds, oracle, &cfg.engine_config(), rng).map_err(runtime)?;
            Ok((ds, calls + fix.calls))
        }
    }
}

fn draw_initial(
    cfg: &RunConfig,
    oracle: &mut dyn Oracle,
    rng: &mut StreamRng,
    calls: &mut u64,
) -> Result<Dataset, CliError> {
    let effort = cfg.effort.initial;
    let mut pts = Vec::with_capacity(cfg.initial_points.len());
    for &x in &cfg.initial_points {
        let ev = oracle.evaluate(x, effort, rng).map_err(runtime)?;
        *calls += 1;
        pts.push(Observation::new(x, ev.y, ev.reliability, effort));
    }
    Dataset::new(cfg.domain()?, pts).map_err(runtime)
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn corrupt(e: impl std::fmt::Display) -> CliError {
    CliError::Checkpoint(e.to_string())
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
    engine: Engine,
    oracle: Box<dyn Oracle>,
    truth: Option<Box<dyn Truth>>,
    rng: StreamRng,
    init_calls: u64,
    mean_constraint: Option<f64>,
    errors: Vec<ErrorRow>,
    min_signed_error: Option<f64>,
}

impl Run {
    fn record_errors(&mut self) -> Result<(), CliError> {
        let Some(truth) = &self.truth else {
            return Ok(());
        };
        let rec = self.engine.dataset().reconstruct().map_err(runtime)?;
        let r = error_norms(&rec, truth.as_ref(), self.cfg.metrics.grid_size).map_err(runtime)?;
        self.errors.push(ErrorRow {
            n: self.engine.iterations_done(),
            sup_err: r.sup_norm,
            l1_err: r.l1_norm,
        });
        let m = self
            .min_signed_error
            .map_or(r.min_signed_error, |m| m.min(r.min_signed_error));
        self.min_signed_error = Some(m);
        Ok(())
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: self.cfg.hash(),
            config: self.cfg.clone(),
            iteration: self.engine.iterations_done(),
            rng: self.rng.state(),
            dataset_csv: self.engine.dataset().to_csv_string(),
            records: self.engine.records().to_vec(),
            oracle_state: self.oracle.snapshot(),
            init_calls: self.init_calls,
            mean_constraint: self.mean_constraint,
            errors: self.errors.clone(),
            min_signed_error: self.min_signed_error,
        }
    }

    fn write_checkpoint(&self) -> Result<PathBuf, CliError> {
        let path = self.out.join(CHECKPOINT_FILE);
        let text = serde_json::to_string_pretty(&self.checkpoint()).expect("plain data");
        output::write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    fn drive(mut self, opts: RunOptions) -> Result<Finish, CliError> {
        let halt_now = |n: usize| opts.halt_after == Some(n);
        if halt_now(self.engine.iterations_done()) && !self.engine.is_finished() {
            let checkpoint = self.write_checkpoint()?;
            return Ok(Finish::Halted {
                iteration: self.engine.iterations_done(),
                checkpoint,
            });
        }
        loop {
            let stepped = self
                .engine
                .step(self.oracle.as_mut(), &mut self.rng)
                .map_err(runtime)?
                .is_some();
            if !stepped {
                break;
            }
            self.record_errors()?;
            let n = self.engine.iterations_done();
            if opts
                .checkpoint_every
                .is_some_and(|k| k > 0 && n.is_multiple_of(k))
                || halt_now(n)
            {
                let checkpoint = self.write_checkpoint()?;
                if halt_now(n) && !self.engine.is_finished() {
                    return Ok(Finish::Halted {
                        iteration: n,
                        checkpoint,
                    });
                }
            }
        }
        self.finish()
    }

    fn finish(self) -> Result<Finish, CliError> {
        let fit_series = |pick: fn(&ErrorRow) -> f64| {
            let lo = self.cfg.metrics.fit_from;
            let rows: Vec<&ErrorRow> = self.errors.iter().filter(|r| r.n >= lo.max(1)).collect();
            let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
            let es: Vec<f64> = rows.iter().map(|r| pick(r)).collect();
            SeriesFit {
                fit: fit_rate_window(&ns, &es, lo as f64, f64::INFINITY).ok(),
                spearman: spearman(&ns, &es),
            }
        };
        let sup = fit_series(|r| r.sup_err);
        let l1 = fit_series(|r| r.l1_err);
        let summary = RunSummary {
            trace: self.engine.into_trace(self.cfg.seed),
            config: self.cfg,
            init_calls: self.init_calls,
            mean_constraint: self.mean_constraint,
            errors: self.errors,
            min_signed_error: self.min_signed_error,
            sup,
            l1,
        };
        output::write_outputs(&self.out, &summary)?;
        Ok(Finish::Completed(Box::new(summary)))
    }
}

/// Fresh run of `cfg`, writing into `out`.
pub fn run_study(cfg: RunConfig, out: &Path, opts: RunOptions) -> Result<Finish, CliError> {
    cfg.validate()?;
    output::prepare_dir(out)?;
    let Setup {
        mut oracle,
        truth,
        mean_constraint,
    } = setup(&cfg)?;
    let mut init_rng = StreamRng::new(cfg.seed, "init");
    let (ds, init_calls) = initial_dataset(&cfg, oracle.as_mut(), &mut init_rng)?;
    let engine = Engine::new(ds, cfg.engine_config()).map_err(runtime)?;
    let seed = cfg.seed;
    let mut run = Run {
        cfg,
        out: out.to_path_buf(),
        engine,
        oracle,
        truth,
        rng: StreamRng::new(seed, "oracle"),
        init_calls,
        mean_constraint,
        errors: Vec::new(),
        min_signed_error: None,
    };
    run.record_errors()?;
    run.drive(opts)
}

/// Reads and verifies a checkpoint.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    let cp: Checkpoint = serde_json::from_str(&text).map_err(corrupt)?;
    if cp.version != CHECKPOINT_VERSION {
        return Err(corrupt(format!(
            "unsupported checkpoint version {}",
            cp.version
        )));
    }
    if cp.config.hash() != cp.config_hash {
        return Err(corrupt("config hash mismatch"));
    }
    if cp.records.len() != cp.iteration {
        return Err(corrupt("record count disagrees with the iteration index"));
    }
    cp.config.validate().map_err(corrupt)?;
    Ok(cp)
}

/// Continues a checkpointed run. Outputs go to `out`, or next to the
/// checkpoint when `None`.
pub fn resume(path: &Path, out: Option<&Path>, opts: RunOptions) -> Result<Finish, CliError> {
    let cp = load_checkpoint(path)?;
    let out = match out {
        Some(o) => o.to_path_buf(),
        None => path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    output::prepare_dir(&out)?;
    let Setup {
        mut oracle,
        truth,
        mean_constraint,
    } = setup(&cp.config).map_err(corrupt)?;
    if mean_constraint != cp.mean_constraint {
        return Err(corrupt("mean constraint disagrees with the config"));
    }
    oracle.restore(&cp.oracle_state).map_err(corrupt)?;
    let domain = cp.config.domain()?;
    let ds = Dataset::read_csv(domain, cp.dataset_csv.as_bytes()).map_err(corrupt)?;
    let engine = Engine::resume(ds, cp.config.engine_config(), cp.records).map_err(corrupt)?;
    let rng = StreamRng::from_state(&cp.rng).ok_or_else(|| corrupt("bad rng state"))?;
    if rng.seed() != cp.config.seed || rng.name() != "oracle" {
        return Err(corrupt("rng stream does not belong to this run"));
    }
    let expected_rows = if truth.is_some() { cp.iteration + 1 } else { 0 };
    if cp.errors.len() != expected_rows {
        return Err(corrupt("error rows disagree with the iteration index"));
    }
    let run = Run {
        cfg: cp.config,
        out,
        engine,
        oracle,
        truth,
        rng,
        init_calls: cp.init_calls,
        mean_constraint,
        errors: cp.errors,
        min_signed_error: cp.min_signed_error,
    };
    run.drive(opts)
}
