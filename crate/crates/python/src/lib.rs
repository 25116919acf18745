//! Python bindings. Structured results (matrices, reports) cross the boundary
//! as plain dicts and lists; the estimator's core types get thin wrappers.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use conjure::estimator::{
    conjure_distance_with_trace, estimate, read_trace, read_trace_file, write_trace, write_trace_file,
    TRACE_RECORD_SCHEMA,
};
use conjure::eval::{
    ablate as ablate_sweep, evaluate_traces as eval_traces, evaluate_world as eval_world, gen_semantic_world,
    load_pairs_tsv, pairwise_matrix, resolve_world, SemanticWorld, Sweep, WorldConfig,
};
use conjure::oracle::{gaussian_conjure_closed_form, gaussian_suite, gmm_suite};
use conjure::score::{
    load_checkpoint, save_checkpoint, train_toy, AnalyticModel, GaussianConditionSpec, Guided, ToyScoreNet,
    TrainConfig,
};
use conjure::{
    estimate_from_trace, DiffusionSchedule, DistanceEstimate, EstimatorConfig, Method, ScoreDifferenceTrace,
    ScoreModel, TimestepPrior,
};

fn py_err(e: conjure::Error) -> PyErr {
    use conjure::Error as E;
    match e {
        E::Io(io) => PyOSError::new_err(io.to_string()),
        E::InvalidArgument(_) | E::Parse { .. } | E::ScheduleMismatch { .. } | E::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for conjure::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Serialize through JSON into native Python objects.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_prior(s: &str) -> PyResult<TimestepPrior> {
    s.parse().py()
}

fn parse_method(s: &str) -> PyResult<Method> {
    s.parse().py()
}

#[pyclass(name = "Schedule", module = "conjure", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySchedule {
    inner: DiffusionSchedule,
}

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (steps = 10, beta_min = 0.1, beta_max = 20.0))]
    fn new(steps: usize, beta_min: f64, beta_max: f64) -> PyResult<Self> {
        Ok(Self { inner: DiffusionSchedule::new(steps, beta_min, beta_max).py()? })
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    fn beta_min(&self) -> f64 {
        self.inner.beta_min()
    }

    #[getter]
    fn beta_max(&self) -> f64 {
        self.inner.beta_max()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    #[getter]
    fn alphas(&self) -> Vec<f64> {
        self.inner.alphas().to_vec()
    }

    #[getter]
    fn sigmas(&self) -> Vec<f64> {
        self.inner.sigmas().to_vec()
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id()
    }

    fn __repr__(&self) -> String {
        format!("Schedule({})", self.inner.id())
    }
}

fn schedule_or_default(s: Option<PyRef<'_, PySchedule>>) -> PyResult<DiffusionSchedule> {
    match s {
        Some(s) => Ok(s.inner.clone()),
        None => DiffusionSchedule::with_steps(10).py(),
    }
}

/// Hierarchical Gaussian world; also usable as an exact score model.
#[pyclass(name = "World", module = "conjure", frozen)]
struct PyWorld {
    world: SemanticWorld,
    model: AnalyticModel,
}

impl PyWorld {
    fn wrap(world: SemanticWorld) -> Self {
        let model = world.model();
        Self { world, model }
    }
}

#[pymethods]
impl PyWorld {
    /// Eight leaves in two clusters of four.
    #[staticmethod]
    #[pyo3(signature = (seed = 0))]
    fn default8(seed: u64) -> PyResult<Self> {
        Ok(Self::wrap(resolve_world("default8", seed).py()?))
    }

    #[staticmethod]
    #[pyo3(signature = (tree, seed = 0, dim = 2, separation = 4.0, radius_ratio = 0.3, leaf_scale = 0.5, angle_jitter = 0.3))]
    fn generate(
        tree: &str,
        seed: u64,
        dim: usize,
        separation: f64,
        radius_ratio: f64,
        leaf_scale: f64,
        angle_jitter: f64,
    ) -> PyResult<Self> {
        let config = WorldConfig { dim, separation, radius_ratio, leaf_scale, angle_jitter };
        Ok(Self::wrap(gen_semantic_world(tree, config, seed).py()?))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self::wrap(SemanticWorld::load(path).py()?))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.world.save(path).py()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.world).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.world.labels.clone()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.world.config.dim
    }

    #[getter]
    fn tree(&self) -> String {
        self.world.tree.to_string()
    }

    /// Pairwise 2-Wasserstein distances between leaves.
    #[getter]
    fn ground_truth(&self) -> Vec<Vec<f64>> {
        self.world.ground_truth.clone()
    }

    fn tree_distance(&self, a: &str, b: &str) -> PyResult<usize> {
        let (i, j) = (self.world.index_of(a).py()?, self.world.index_of(b).py()?);
        Ok(self.world.tree_distance(i, j))
    }

    /// Labeled clean samples, interleaved by leaf.
    #[pyo3(signature = (per_leaf, seed = 0))]
    fn sample_dataset(&self, per_leaf: usize, seed: u64) -> Vec<(Vec<f64>, String)> {
        self.world
            .sample_dataset(per_leaf, seed)
            .into_iter()
            .map(|s| (s.x, s.y.display))
            .collect()
    }

    /// Exact score at grid step `step` of `schedule`.
    #[pyo3(signature = (x, step, label, schedule = None))]
    fn score(&self, x: Vec<f64>, step: usize, label: &str, schedule: Option<PyRef<'_, PySchedule>>) -> PyResult<Vec<f64>> {
        score_with(&self.model, &x, step, label, schedule)
    }

    fn __len__(&self) -> usize {
        self.world.len()
    }

    fn __repr__(&self) -> String {
        format!("World({}, dim={}, seed={})", self.world.tree, self.world.config.dim, self.world.seed)
    }
}

fn score_with(
    model: &dyn ScoreModel,
    x: &[f64],
    step: usize,
    label: &str,
    schedule: Option<PyRef<'_, PySchedule>>,
) -> PyResult<Vec<f64>> {
    let s = schedule_or_default(schedule)?;
    let at = s.at(step).py()?;
    let y = model.vocabulary().by_label(label).py()?;
    model.score(x, &at, y).py()
}

/// The small trained conditional score network.
#[pyclass(name = "ToyNet", module = "conjure", frozen)]
struct PyToyNet {
    net: ToyScoreNet,
}

#[pymethods]
impl PyToyNet {
    /// Train on samples drawn from `world`. Deterministic given the seeds.
    #[staticmethod]
    #[pyo3(signature = (world, schedule = None, per_leaf = 1500, data_seed = 1, epochs = None, seed = 0))]
    fn train(
        py: Python<'_>,
        world: PyRef<'_, PyWorld>,
        schedule: Option<PyRef<'_, PySchedule>>,
        per_leaf: usize,
        data_seed: u64,
        epochs: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let s = schedule_or_default(schedule)?;
        let defaults = TrainConfig::default();
        let config = TrainConfig { epochs: epochs.unwrap_or(defaults.epochs), seed, ..defaults };
        let world = &world.world;
        let net = py.detach(|| {
            let data = world.sample_dataset(per_leaf, data_seed);
            train_toy(&data, &world.vocabulary(), &s, &config)
        });
        Ok(Self { net: net.py()? })
    }

    /// Load a checkpoint; refuses a schedule from another family.
    #[staticmethod]
    #[pyo3(signature = (path, schedule = None))]
    fn load(path: &str, schedule: Option<PyRef<'_, PySchedule>>) -> PyResult<Self> {
        let s = schedule_or_default(schedule)?;
        Ok(Self { net: load_checkpoint(path, &s).py()? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_checkpoint(&self.net, path).py()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.net.vocabulary().iter().map(|c| c.display.clone()).collect()
    }

    #[getter]
    fn loss_curve(&self) -> Vec<f64> {
        self.net.report().loss_curve.clone()
    }

    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.net.report())
    }

    #[pyo3(signature = (x, step, label, schedule = None))]
    fn score(&self, x: Vec<f64>, step: usize, label: &str, schedule: Option<PyRef<'_, PySchedule>>) -> PyResult<Vec<f64>> {
        score_with(&self.net, &x, step, label, schedule)
    }

    fn __repr__(&self) -> String {
        format!("ToyNet({})", self.net.name())
    }
}

#[derive(FromPyObject)]
enum ModelArg<'py> {
    World(PyRef<'py, PyWorld>),
    Net(PyRef<'py, PyToyNet>),
}

impl ModelArg<'_> {
    fn base(&self) -> &dyn ScoreModel {
        match self {
            ModelArg::World(w) => &w.model,
            ModelArg::Net(n) => &n.net,
        }
    }

    fn run<R: Send>(&self, py: Python<'_>, guidance: f64, f: impl FnOnce(&dyn ScoreModel) -> R + Send) -> R {
        run_guided(py, self.base(), guidance, f)
    }
}

/// Run `f` on `base` with guidance applied, outside the GIL.
fn run_guided<R: Send>(
    py: Python<'_>,
    base: &dyn ScoreModel,
    guidance: f64,
    f: impl FnOnce(&dyn ScoreModel) -> R + Send,
) -> R {
    py.detach(|| {
        if guidance == 1.0 {
            f(base)
        } else {
            f(&Guided::new(base, guidance))
        }
    })
}

#[pyclass(name = "Estimate", module = "conjure", frozen)]
struct PyEstimate {
    inner: DistanceEstimate,
}

#[pymethods]
impl PyEstimate {
    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.as_str()
    }

    #[getter]
    fn pair(&self) -> (String, String) {
        self.inner.pair.clone()
    }

    #[getter]
    fn value(&self) -> f64 {
        self.inner.value
    }

    #[getter]
    fn std_error(&self) -> Option<f64> {
        self.inner.std_error
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn per_iteration(&self) -> Vec<f64> {
        self.inner.per_iteration.clone()
    }

    #[getter]
    fn prior(&self) -> Option<String> {
        self.inner.prior.map(|p| p.to_string())
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __float__(&self) -> f64 {
        self.inner.value
    }

    fn __repr__(&self) -> String {
        let se = self.inner.std_error.map_or(String::new(), |s| format!(" +/- {s:.3e}"));
        let (a, b) = &self.inner.pair;
        format!("Estimate({}({a}, {b}) = {}{se}, k={})", self.inner.method, self.inner.value, self.inner.k)
    }
}

/// Per-step squared score gaps behind a path estimate.
#[pyclass(name = "Trace", module = "conjure", frozen)]
struct PyTrace {
    inner: ScoreDifferenceTrace,
}

#[pymethods]
impl PyTrace {
    /// Read and validate a JSON-lines trace file.
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self { inner: read_trace_file(path).py()? })
    }

    /// Parse and validate JSON-lines text.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: read_trace(text.as_bytes()).py()? })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        write_trace_file(&self.inner, path).py()
    }

    fn to_jsonl(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_trace(&self.inner, &mut buf).py()?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[getter]
    fn pair(&self) -> (String, String) {
        self.inner.pair.clone()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.meta.steps
    }

    #[getter]
    fn model(&self) -> String {
        self.inner.meta.model.clone()
    }

    #[getter]
    fn guidance(&self) -> f64 {
        self.inner.meta.guidance
    }

    #[getter]
    fn schedule(&self) -> String {
        self.inner.meta.schedule.clone()
    }

    /// Full metadata, producer-specific keys included.
    #[getter]
    fn meta<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.meta)
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.iterations.iter().map(|it| it.seed).collect()
    }

    /// Gaps per iteration along paths denoised under `"y1"` or `"y2"`.
    fn gaps(&self, direction: &str) -> PyResult<Vec<Vec<f64>>> {
        let pick = match direction {
            "y1" => |it: &conjure::estimator::TraceIteration| it.y1.clone(),
            "y2" => |it: &conjure::estimator::TraceIteration| it.y2.clone(),
            other => return Err(PyValueError::new_err(format!("direction must be 'y1' or 'y2', got {other:?}"))),
        };
        Ok(self.inner.iterations.iter().map(pick).collect())
    }

    fn warnings(&self) -> Vec<String> {
        self.inner.warnings()
    }

    #[pyo3(signature = (prior = "uniform"))]
    fn estimate(&self, prior: &str) -> PyResult<PyEstimate> {
        Ok(PyEstimate { inner: estimate_from_trace(&self.inner, parse_prior(prior)?).py()? })
    }

    fn __repr__(&self) -> String {
        format!("Trace({:?}, k={}, T={})", self.inner.pair, self.inner.k(), self.inner.meta.steps)
    }
}

/// Distance between prompts `a` and `b` under `model` (a World or ToyNet).
#[pyfunction]
#[pyo3(signature = (model, a, b, method = "conjure", k = 5, schedule = None, prior = "uniform", seed = 0, guidance = 1.0))]
#[allow(clippy::too_many_arguments)]
fn distance(
    py: Python<'_>,
    model: ModelArg<'_>,
    a: &str,
    b: &str,
    method: &str,
    k: usize,
    schedule: Option<PyRef<'_, PySchedule>>,
    prior: &str,
    seed: u64,
    guidance: f64,
) -> PyResult<PyEstimate> {
    let s = schedule_or_default(schedule)?;
    let config = EstimatorConfig { k, prior: parse_prior(prior)?, seed };
    let method = parse_method(method)?;
    let vocab = model.base().vocabulary();
    let (y1, y2) = (vocab.by_label(a).py()?.clone(), vocab.by_label(b).py()?.clone());
    let est = model.run(py, guidance, |m| estimate(method, m, &y1, &y2, &s, &config));
    Ok(PyEstimate { inner: est.py()? })
}

/// Path distance together with its gap trace.
#[pyfunction]
#[pyo3(signature = (model, a, b, k = 5, schedule = None, prior = "uniform", seed = 0, guidance = 1.0))]
#[allow(clippy::too_many_arguments)]
fn distance_with_trace(
    py: Python<'_>,
    model: ModelArg<'_>,
    a: &str,
    b: &str,
    k: usize,
    schedule: Option<PyRef<'_, PySchedule>>,
    prior: &str,
    seed: u64,
    guidance: f64,
) -> PyResult<(PyEstimate, PyTrace)> {
    let s = schedule_or_default(schedule)?;
    let prior = parse_prior(prior)?;
    let vocab = model.base().vocabulary();
    let (y1, y2) = (vocab.by_label(a).py()?.clone(), vocab.by_label(b).py()?.clone());
    let (est, trace) = model.run(py, guidance, |m| conjure_distance_with_trace(m, &y1, &y2, k, &s, prior, seed)).py()?;
    Ok((PyEstimate { inner: est }, PyTrace { inner: trace }))
}

/// All pairwise distances as `{"labels": [...], "values": [[...]], ...}`.
#[pyfunction]
#[pyo3(signature = (model, method = "conjure", k = 5, schedule = None, prior = "uniform", seed = 0, guidance = 1.0))]
#[allow(clippy::too_many_arguments)]
fn matrix<'py>(
    py: Python<'py>,
    model: ModelArg<'_>,
    method: &str,
    k: usize,
    schedule: Option<PyRef<'_, PySchedule>>,
    prior: &str,
    seed: u64,
    guidance: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let s = schedule_or_default(schedule)?;
    let config = EstimatorConfig { k, prior: parse_prior(prior)?, seed };
    let method = parse_method(method)?;
    let m = model.run(py, guidance, |m| pairwise_matrix(m, m.vocabulary(), method, &s, &config)).py()?;
    to_py(py, &m)
}

/// Rank alignment of a model's distances with the world's ground truth.
/// Without `model` the world's exact scores are used.
#[pyfunction]
#[pyo3(signature = (world, model = None, method = "conjure", k = 5, schedule = None, prior = "uniform", seed = 0, guidance = 1.0))]
#[allow(clippy::too_many_arguments)]
fn evaluate_world<'py>(
    py: Python<'py>,
    world: PyRef<'_, PyWorld>,
    model: Option<ModelArg<'_>>,
    method: &str,
    k: usize,
    schedule: Option<PyRef<'_, PySchedule>>,
    prior: &str,
    seed: u64,
    guidance: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let s = schedule_or_default(schedule)?;
    let config = EstimatorConfig { k, prior: parse_prior(prior)?, seed };
    let method = parse_method(method)?;
    let w = &world.world;
    let result = match &model {
        Some(m) => m.run(py, guidance, |m| eval_world(w, m, method, &s, &config)),
        None => run_guided(py, &world.model, guidance, |m| eval_world(w, m, method, &s, &config)),
    };
    to_py(py, &result.py()?)
}

/// Alignment of trace-derived distances with an annotated pairs TSV.
#[pyfunction]
#[pyo3(signature = (dataset, traces, prior = "uniform"))]
fn evaluate_traces<'py>(
    py: Python<'py>,
    dataset: &str,
    traces: Vec<PyRef<'_, PyTrace>>,
    prior: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let data = load_pairs_tsv(dataset).py()?;
    let owned: Vec<ScoreDifferenceTrace> = traces.iter().map(|t| t.inner.clone()).collect();
    to_py(py, &eval_traces(&data, &owned, parse_prior(prior)?).py()?)
}

/// Sweep `parameter` ("prior", "k" or "T") over comma-separated `values`.
/// Wall-clock times are left out so results are reproducible.
#[pyfunction]
#[pyo3(signature = (world, parameter, values, model = None, method = "conjure", k = 5, schedule = None, prior = "uniform", seed = 0))]
#[allow(clippy::too_many_arguments)]
fn ablate<'py>(
    py: Python<'py>,
    world: PyRef<'_, PyWorld>,
    parameter: &str,
    values: &str,
    model: Option<ModelArg<'_>>,
    method: &str,
    k: usize,
    schedule: Option<PyRef<'_, PySchedule>>,
    prior: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let s = schedule_or_default(schedule)?;
    let config = EstimatorConfig { k, prior: parse_prior(prior)?, seed };
    let method = parse_method(method)?;
    let sweep = Sweep::parse(parameter, values).py()?;
    let w = &world.world;
    let run = |m: &dyn ScoreModel| ablate_sweep(w, m, method, s.params(), &config, &sweep);
    let mut report = match &model {
        Some(m) => m.run(py, 1.0, run),
        None => run_guided(py, &world.model, 1.0, run),
    }
    .py()?;
    report.runtimes_secs.clear();
    to_py(py, &report)
}

/// Estimator against analytic oracles: `suite` is "gaussian" or "gmm".
#[pyfunction]
#[pyo3(signature = (suite, cases = 20, k = None, seed = 0))]
fn oracle_check<'py>(
    py: Python<'py>,
    suite: &str,
    cases: usize,
    k: Option<usize>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let reports = py.detach(|| -> conjure::Result<Vec<_>> {
        match suite {
            "gaussian" => gaussian_suite(cases, seed).iter().map(|c| c.run(k.unwrap_or(5), seed).map(|r| r.0)).collect(),
            "gmm" => gmm_suite().iter().map(|c| c.run(k.unwrap_or(200), seed).map(|r| r.0)).collect(),
            other => Err(conjure::Error::InvalidArgument(format!("unknown suite {other:?}; expected gaussian or gmm"))),
        }
    });
    to_py(py, &reports.py()?)
}

/// Exact path distance between two equal-scale isotropic Gaussians.
#[pyfunction]
#[pyo3(signature = (mean_a, mean_b, scale, schedule = None, prior = "uniform"))]
fn gaussian_closed_form(
    mean_a: Vec<f64>,
    mean_b: Vec<f64>,
    scale: f64,
    schedule: Option<PyRef<'_, PySchedule>>,
    prior: &str,
) -> PyResult<f64> {
    let s = schedule_or_default(schedule)?;
    let a = GaussianConditionSpec::new(mean_a, scale).py()?;
    let b = GaussianConditionSpec::new(mean_b, scale).py()?;
    gaussian_conjure_closed_form(&a, &b, &s, parse_prior(prior)?).py()
}

#[pyfunction]
fn spearman(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    conjure::eval::spearman(&a, &b).py()
}

/// Validate JSON-lines trace text. Raises ValueError on a schema or
/// consistency error; returns the list of warnings otherwise.
#[pyfunction]
fn validate_trace(text: &str) -> PyResult<Vec<String>> {
    Ok(read_trace(text.as_bytes()).py()?.warnings())
}

#[pymodule]
#[pyo3(name = "conjure")]
pub fn conjure_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchedule>()?;
    m.add_class::<PyWorld>()?;
    m.add_class::<PyToyNet>()?;
    m.add_class::<PyEstimate>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(distance_with_trace, m)?)?;
    m.add_function(wrap_pyfunction!(matrix, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_world, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_traces, m)?)?;
    m.add_function(wrap_pyfunction!(ablate, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(validate_trace, m)?)?;
    m.add("TRACE_RECORD_SCHEMA", TRACE_RECORD_SCHEMA)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
