//! Python bindings: datasets and step functions, the engine loop, the shipped
//! oracles, error norms, rate fits and the OUQ optimiser.
//!
//! `run` accepts the built-in oracle classes or any callable
//! `f(x, effort) -> (y, reliability)`.

use pyo3::exceptions::{PyRuntimeError, PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::RngCore;

use monorecon::engine::{EffortSchedule, FreshEffort};
use monorecon::metrics;
use monorecon::oracles::{
    Evaluation, GroundTruth, InputLaw, McCdfOracle, Sampler, SyntheticOracle,
};
use monorecon::ouq::{self, AdmissibleSpec, DEConfig, PerformanceFn};
use monorecon::{
    Dataset, Domain, EngineConfig, EngineError, Observation, Oracle, OracleError, QualityMode,
    RunTrace, StepFunction, StreamRng,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_variant(s: &str) -> PyResult<GroundTruth> {
    match s {
        "continuous" => Ok(GroundTruth::Continuous),
        "discontinuous" => Ok(GroundTruth::Discontinuous),
        _ => Err(value_err(format!("unknown variant `{s}`"))),
    }
}

fn parse_mode(s: &str) -> PyResult<QualityMode> {
    match s {
        "validation" => Ok(QualityMode::Validation),
        "effort" => Ok(QualityMode::Effort),
        _ => Err(value_err(format!("unknown quality mode `{s}`"))),
    }
}

fn build_config(
    exchange_rate: f64,
    max_iterations: usize,
    max_escalations: u32,
    schedule: &str,
    schedule_param: Option<f64>,
    fresh_effort: Option<f64>,
    stop_area: Option<f64>,
) -> Result<EngineConfig, String> {
    let effort_schedule = match schedule {
        "geometric" => EffortSchedule::Geometric {
            ratio: schedule_param.unwrap_or(2.0),
        },
        "linear" => EffortSchedule::Linear {
            step: schedule_param.unwrap_or(1.0),
        },
        other => return Err(format!("unknown schedule `{other}`")),
    };
    let cfg = EngineConfig {
        exchange_rate,
        max_iterations,
        stop_area,
        max_escalations,
        effort_schedule,
        fresh_effort: fresh_effort
            .map_or(FreshEffort::Median, |effort| FreshEffort::Fixed { effort }),
    };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

#[pyclass(name = "StepFunction", module = "pymonorecon", frozen)]
struct PyStepFunction {
    inner: StepFunction,
}

#[pymethods]
impl PyStepFunction {
    #[getter]
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints.clone()
    }

    #[getter]
    fn levels(&self) -> Vec<f64> {
        self.inner.levels.clone()
    }

    #[getter]
    fn right_end(&self) -> f64 {
        self.inner.right_end
    }

    /// Right-continuous value at `x`.
    fn __call__(&self, x: f64) -> PyResult<f64> {
        self.inner.eval(x).map_err(value_err)
    }

    fn left_limit(&self, x: f64) -> PyResult<f64> {
        self.inner.left_limit(x).map_err(value_err)
    }

    fn is_non_decreasing(&self) -> bool {
        self.inner.is_non_decreasing()
    }

    fn __repr__(&self) -> String {
        format!("StepFunction({} pieces)", self.inner.levels.len())
    }
}

#[pyclass(name = "Dataset", module = "pymonorecon")]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// `points` are `(x, y, reliability, effort)` tuples.
    #[new]
    fn new(lo: f64, hi: f64, points: Vec<(f64, f64, f64, f64)>) -> PyResult<Self> {
        let domain = Domain::new(lo, hi).map_err(value_err)?;
        let obs = points
            .into_iter()
            .map(|(x, y, r, e)| Observation::new(x, y, r, e))
            .collect();
        let inner = Dataset::new(domain, obs).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Exact observations: unit reliability and effort.
    #[staticmethod]
    fn from_xy(lo: f64, hi: f64, pairs: Vec<(f64, f64)>) -> PyResult<Self> {
        let domain = Domain::new(lo, hi).map_err(value_err)?;
        let inner = Dataset::from_xy(domain, &pairs).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_csv(lo: f64, hi: f64, text: &str) -> PyResult<Self> {
        let domain = Domain::new(lo, hi).map_err(value_err)?;
        let inner = Dataset::read_csv(domain, text.as_bytes()).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn domain(&self) -> (f64, f64) {
        let d = self.inner.domain();
        (d.lo, d.hi)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(x, y, reliability, consistent, effort)` per point.
    fn points(&self) -> Vec<(f64, f64, f64, bool, f64)> {
        self.inner
            .points()
            .iter()
            .map(|p| (p.x, p.y, p.reliability, p.consistent, p.effort))
            .collect()
    }

    fn is_consistent(&self) -> bool {
        self.inner.is_consistent()
    }

    fn qualities(&self) -> Vec<f64> {
        self.inner.qualities()
    }

    fn min_quality(&self) -> f64 {
        self.inner.min_quality()
    }

    fn cell_areas(&self) -> PyResult<Vec<f64>> {
        self.inner.cell_areas().map_err(value_err)
    }

    fn total_area(&self) -> PyResult<f64> {
        self.inner.total_area().map_err(value_err)
    }

    fn weighted_area(&self) -> f64 {
        self.inner.weighted_area()
    }

    /// `(cell index, area)`; ties go to the leftmost cell.
    fn biggest_cell(&self) -> PyResult<(usize, f64)> {
        self.inner.biggest_cell().map_err(value_err)
    }

    fn reconstruct(&self) -> PyResult<PyStepFunction> {
        let inner = self.inner.reconstruct().map_err(value_err)?;
        Ok(PyStepFunction { inner })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }

    fn __repr__(&self) -> String {
        let d = self.inner.domain();
        format!(
            "Dataset({} points on [{}, {}])",
            self.inner.len(),
            d.lo,
            d.hi
        )
    }
}

#[pyclass(name = "EngineConfig", module = "pymonorecon", frozen)]
struct PyEngineConfig {
    inner: EngineConfig,
}

#[pymethods]
impl PyEngineConfig {
    /// `schedule` is `"geometric"` (ratio, default 2) or `"linear"` (step,
    /// default 1); `fresh_effort=None` gives split points the median stored
    /// effort.
    #[new]
    #[pyo3(signature = (exchange_rate, max_iterations, *, max_escalations=40, schedule="geometric",
                        schedule_param=None, fresh_effort=None, stop_area=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        exchange_rate: f64,
        max_iterations: usize,
        max_escalations: u32,
        schedule: &str,
        schedule_param: Option<f64>,
        fresh_effort: Option<f64>,
        stop_area: Option<f64>,
    ) -> PyResult<Self> {
        build_config(
            exchange_rate,
            max_iterations,
            max_escalations,
            schedule,
            schedule_param,
            fresh_effort,
            stop_area,
        )
        .map(|inner| Self { inner })
        .map_err(value_err)
    }

    #[getter]
    fn exchange_rate(&self) -> f64 {
        self.inner.exchange_rate
    }

    #[getter]
    fn max_iterations(&self) -> usize {
        self.inner.max_iterations
    }

    #[getter]
    fn max_escalations(&self) -> u32 {
        self.inner.max_escalations
    }

    fn __repr__(&self) -> String {
        format!(
            "EngineConfig(exchange_rate={}, max_iterations={})",
            self.inner.exchange_rate, self.inner.max_iterations
        )
    }
}

/// The log-normal validation oracle. `evaluate` draws from the object's own
/// stream; `run` uses the stream named by its seed instead.
#[pyclass(name = "SyntheticOracle", module = "pymonorecon")]
struct PySyntheticOracle {
    inner: SyntheticOracle,
    rng: StreamRng,
}

#[pymethods]
impl PySyntheticOracle {
    #[new]
    #[pyo3(signature = (variant="continuous", quality_mode="validation", effort_exponent=1.0, seed=0))]
    fn new(variant: &str, quality_mode: &str, effort_exponent: f64, seed: u64) -> PyResult<Self> {
        if !(effort_exponent >= 0.0 && effort_exponent.is_finite()) {
            return Err(value_err(format!(
                "effort_exponent must be non-negative, got {effort_exponent}"
            )));
        }
        let mut inner = SyntheticOracle::new(parse_variant(variant)?, parse_mode(quality_mode)?);
        inner.noise.effort_exponent = effort_exponent;
        Ok(Self {
            inner,
            rng: StreamRng::new(seed, "oracle"),
        })
    }

    #[getter]
    fn domain(&self) -> (f64, f64) {
        let d = self.inner.domain();
        (d.lo, d.hi)
    }

    /// `(y, reliability)`.
    fn evaluate(&mut self, x: f64, effort: f64) -> PyResult<(f64, f64)> {
        let ev = self
            .inner
            .evaluate(x, effort, &mut self.rng)
            .map_err(value_err)?;
        Ok((ev.y, ev.reliability))
    }

    /// The noise-free target.
    fn truth(&self, x: f64) -> PyResult<f64> {
        self.inner
            .truth
            .evaluate(x)
            .ok_or_else(|| value_err(format!("x = {x} outside [1, 2]")))
    }
}

/// Lower confidence bound on the CDF of `g(Ξ)`.
#[pyclass(name = "McCdfOracle", module = "pymonorecon")]
struct PyMcCdfOracle {
    inner: McCdfOracle,
    rng: StreamRng,
}

#[pymethods]
impl PyMcCdfOracle {
    /// `laws` are `"uniform"` or `"beta(a, b)"`, one per input or a single
    /// shared one.
    #[new]
    #[pyo3(signature = (lo=0.0, hi=1.0, *, laws=vec!["uniform".to_owned()], boxes=vec![(0.0, 1.0)],
                        g="identity", base_samples=200, delta=0.05, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        lo: f64,
        hi: f64,
        laws: Vec<String>,
        boxes: Vec<(f64, f64)>,
        g: &str,
        base_samples: usize,
        delta: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let laws = laws
            .iter()
            .map(|s| s.parse::<InputLaw>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(value_err)?;
        let g: PerformanceFn = g.parse().map_err(value_err)?;
        let sampler = Sampler { laws, boxes, g };
        sampler.validate().map_err(value_err)?;
        if base_samples == 0 || !(delta > 0.0 && delta < 1.0) {
            return Err(value_err(
                "base_samples must be positive and delta in (0, 1)",
            ));
        }
        Ok(Self {
            inner: McCdfOracle {
                sampler,
                domain: Domain::new(lo, hi).map_err(value_err)?,
                base_samples,
                delta,
            },
            rng: StreamRng::new(seed, "oracle"),
        })
    }

    #[getter]
    fn domain(&self) -> (f64, f64) {
        (self.inner.domain.lo, self.inner.domain.hi)
    }

    /// `(y, reliability)`; reliability is the sample count.
    fn evaluate(&mut self, x: f64, effort: f64) -> PyResult<(f64, f64)> {
        let ev = self
            .inner
            .evaluate(x, effort, &mut self.rng)
            .map_err(value_err)?;
        Ok((ev.y, ev.reliability))
    }
}

#[pyclass(name = "RunTrace", module = "pymonorecon", frozen)]
struct PyRunTrace {
    inner: RunTrace,
}

#[pymethods]
impl PyRunTrace {
    /// One dict per iteration.
    fn records<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .records
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("n", r.n)?;
                d.set_item("branch", r.branch.as_str())?;
                d.set_item("site", r.site)?;
                d.set_item("site_x", r.site_x)?;
                d.set_item("calls", r.calls)?;
                d.set_item("q_min", r.q_min)?;
                d.set_item("i_min", r.i_min)?;
                d.set_item("a_plus", r.a_plus)?;
                d.set_item("i_plus", r.i_plus)?;
                d.set_item("total_area", r.total_area)?;
                d.set_item("weighted_area", r.weighted_area)?;
                d.set_item("points", r.points)?;
                d.set_item("redo_stalled", r.redo_stalled)?;
                d.set_item("repair_stalls", r.repair_stalls)?;
                Ok(d)
            })
            .collect()
    }

    #[getter]
    fn total_calls(&self) -> u64 {
        self.inner.total_calls
    }

    fn split_count(&self) -> usize {
        self.inner.split_count()
    }

    fn final_dataset(&self) -> PyResult<PyDataset> {
        let inner = self.inner.final_dataset().map_err(value_err)?;
        Ok(PyDataset { inner })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

/// Adapts `f(x, effort) -> (y, reliability)`. The first Python exception is
/// kept so `run` can re-raise it unchanged.
struct CallableOracle<'py> {
    f: Bound<'py, PyAny>,
    domain: Domain,
    error: Option<PyErr>,
}

impl Oracle for CallableOracle<'_> {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn evaluate(
        &mut self,
        x: f64,
        effort: f64,
        _rng: &mut dyn RngCore,
    ) -> Result<Evaluation, OracleError> {
        if !self.domain.contains(x) {
            return Err(OracleError::OutOfDomain {
                x,
                lo: self.domain.lo,
                hi: self.domain.hi,
            });
        }
        let out = self
            .f
            .call1((x, effort))
            .and_then(|v| v.extract::<(f64, f64)>());
        match out {
            Ok((y, reliability)) if y.is_finite() && reliability > 0.0 && !reliability.is_nan() => {
                Ok(Evaluation { y, reliability })
            }
            Ok((y, reliability)) => Err(OracleError::External(format!(
                "evaluator returned y = {y}, reliability = {reliability}"
            ))),
            Err(e) => {
                let msg = e.to_string();
                self.error.get_or_insert(e);
                Err(OracleError::External(msg))
            }
        }
    }
}

fn engine_err(e: EngineError) -> PyErr {
    match e {
        EngineError::Config(_) | EngineError::InconsistentStart(_) => value_err(e),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Runs the loop from `dataset` to completion. Oracle draws come from the
/// `"oracle"` stream of `seed`.
#[pyfunction]
#[pyo3(signature = (dataset, oracle, config, seed=0))]
fn run(
    dataset: &PyDataset,
    oracle: &Bound<'_, PyAny>,
    config: &PyEngineConfig,
    seed: u64,
) -> PyResult<PyRunTrace> {
    let mut rng = StreamRng::new(seed, "oracle");
    let initial = dataset.inner.clone();
    let cfg = &config.inner;
    let result = if let Ok(o) = oracle.cast::<PySyntheticOracle>() {
        monorecon::run(initial, &mut o.borrow_mut().inner, cfg, &mut rng)
    } else if let Ok(o) = oracle.cast::<PyMcCdfOracle>() {
        monorecon::run(initial, &mut o.borrow_mut().inner, cfg, &mut rng)
    } else if oracle.is_callable() {
        let mut adapter = CallableOracle {
            f: oracle.clone(),
            domain: initial.domain(),
            error: None,
        };
        let r = monorecon::run(initial, &mut adapter, cfg, &mut rng);
        if let Some(e) = adapter.error.take() {
            return Err(e);
        }
        r
    } else {
        return Err(PyTypeError::new_err(
            "oracle must be a built-in oracle or a callable",
        ));
    };
    result.map(|inner| PyRunTrace { inner }).map_err(engine_err)
}

/// Sup and 1-norm of `F† − step` for a synthetic target.
#[pyfunction]
#[pyo3(signature = (step, variant, grid_size=2000))]
fn error_norms<'py>(
    py: Python<'py>,
    step: &PyStepFunction,
    variant: &str,
    grid_size: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let truth = parse_variant(variant)?;
    let r = metrics::error_norms(&step.inner, &truth, grid_size).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("sup_norm", r.sup_norm)?;
    d.set_item("l1_norm", r.l1_norm)?;
    d.set_item("min_signed_error", r.min_signed_error)?;
    d.set_item("grid_size", r.grid_size)?;
    Ok(d)
}

/// Least-squares fit of `log e` on `log n`; non-positive errors are dropped.
#[pyfunction]
fn fit_rate<'py>(py: Python<'py>, ns: Vec<f64>, errors: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let f = metrics::fit_rate(&ns, &errors).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("slope", f.slope)?;
    d.set_item("intercept", f.intercept)?;
    d.set_item("r_squared", f.r_squared)?;
    d.set_item("used", f.used)?;
    d.set_item("excluded", f.excluded)?;
    Ok(d)
}

#[pyfunction]
fn ground_truth(variant: &str, x: f64) -> PyResult<f64> {
    parse_variant(variant)?
        .evaluate(x)
        .ok_or_else(|| value_err(format!("x = {x} outside [1, 2]")))
}

/// Analytic optimum for one input on `[0, 1]`, `g` the identity, mean fixed.
#[pyfunction]
fn toy_upper_bound(x: f64, mean: f64) -> f64 {
    ouq::toy_upper_bound(x, mean)
}

/// Maximises `P[g(Ξ) ≤ x]` over product measures on `boxes` with
/// `E[g(Ξ)] = mean`.
#[pyfunction]
#[pyo3(signature = (x, mean, *, boxes=vec![(0.0, 1.0)], g="identity", tolerance=1e-7, population=40,
                    generations=200, differential_weight=0.8, crossover=0.9, penalty=100.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn ouq_maximize<'py>(
    py: Python<'py>,
    x: f64,
    mean: f64,
    boxes: Vec<(f64, f64)>,
    g: &str,
    tolerance: f64,
    population: usize,
    generations: usize,
    differential_weight: f64,
    crossover: f64,
    penalty: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let g: PerformanceFn = g.parse().map_err(value_err)?;
    let spec = AdmissibleSpec::with_mean(boxes, g, mean, tolerance);
    let cfg = DEConfig {
        population,
        generations,
        differential_weight,
        crossover,
        penalty,
        seed,
    };
    let r = ouq::de_maximize_seeded(x, &spec, &cfg).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("value", r.value)?;
    d.set_item("feasible", r.feasible)?;
    d.set_item("violation", r.violation)?;
    d.set_item("evals", r.evals)?;
    let marginals: Vec<(Vec<f64>, Vec<f64>)> = r
        .measure
        .map(|m| {
            m.marginals
                .into_iter()
                .map(|mg| (mg.points, mg.weights))
                .collect()
        })
        .unwrap_or_default();
    d.set_item("marginals", marginals)?;
    Ok(d)
}

#[pymodule]
fn pymonorecon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyStepFunction>()?;
    m.add_class::<PyEngineConfig>()?;
    m.add_class::<PySyntheticOracle>()?;
    m.add_class::<PyMcCdfOracle>()?;
    m.add_class::<PyRunTrace>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(error_norms, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(ground_truth, m)?)?;
    m.add_function(wrap_pyfunction!(toy_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(ouq_maximize, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse() {
        assert_eq!(
            parse_variant("discontinuous").unwrap(),
            GroundTruth::Discontinuous
        );
        assert_eq!(parse_mode("effort").unwrap(), QualityMode::Effort);
    }

    #[test]
    fn config_defaults_and_rejections() {
        let cfg = build_config(15.0, 10, 40, "geometric", None, None, None).unwrap();
        assert_eq!(
            cfg.effort_schedule,
            EffortSchedule::Geometric { ratio: 2.0 }
        );
        assert_eq!(cfg.fresh_effort, FreshEffort::Median);
        let cfg = build_config(15.0, 10, 5, "linear", Some(0.5), Some(3.0), Some(0.1)).unwrap();
        assert_eq!(cfg.effort_schedule, EffortSchedule::Linear { step: 0.5 });
        assert_eq!(cfg.fresh_effort, FreshEffort::Fixed { effort: 3.0 });
        assert!(build_config(15.0, 10, 40, "cubic", None, None, None).is_err());
        assert!(build_config(-1.0, 10, 40, "linear", None, None, None).is_err());
    }
}
