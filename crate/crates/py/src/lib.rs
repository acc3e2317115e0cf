//! Python bindings: configs, training runs, losses and diagnostics. Matrices
//! cross the boundary as lists of rows of floats.

use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use moca::data::{load_mnist_dir, Dataset};
use moca::diagnostics::{self, SWD_METRIC_PROJECTIONS};
use moca::losses::{self, KernelKind, KernelSpec, SINKHORN_DEFAULT_ITERS};
use moca::metrics::{to_csv_string, CSV_COLUMNS};
use moca::nn::Checkpoint;
use moca::prior;
use moca::rng::Rng;
use moca::train::{
    self, config_from_checkpoint, load_datasets, state_from_checkpoint, Experiment, MomentumSchedule,
    Trainer,
};
use moca::{Error, Tensor};

create_exception!(pymoca, FormatError, PyException, "Malformed file or data.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Contract(_) | Error::Shape(_) => PyValueError::new_err(e.to_string()),
        Error::Format { .. } | Error::UnsupportedVersion(_) => FormatError::new_err(e.to_string()),
        Error::NonFinite(_) | Error::Degenerate(_) => PyArithmeticError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
    }
}

fn tensor(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("expected at least one row"));
    }
    Tensor::from_rows(&rows).map_err(to_py)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

/// Round-trips a serializable value through JSON into Python objects.
fn to_object<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_experiment(name: &str) -> PyResult<Experiment> {
    serde_json::from_value(serde_json::Value::String(name.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown experiment {name:?}")))
}

/// Training configuration; every field of the JSON form can be overridden by keyword.
#[pyclass(name = "TrainConfig", module = "pymoca", from_py_object)]
#[derive(Clone)]
pub struct PyTrainConfig {
    inner: train::TrainConfig,
}

#[pymethods]
impl PyTrainConfig {
    #[new]
    #[pyo3(signature = (experiment = "train", **overrides))]
    fn new(py: Python<'_>, experiment: &str, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let base = train::TrainConfig::defaults_for(parse_experiment(experiment)?);
        let mut merged = serde_json::to_value(base).map_err(|e| PyValueError::new_err(e.to_string()))?;
        if let Some(kw) = overrides {
            let text: String = py.import("json")?.call_method1("dumps", (kw,))?.extract()?;
            let extra: serde_json::Map<String, serde_json::Value> =
                serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
            merged.as_object_mut().unwrap().extend(extra);
        }
        let inner: train::TrainConfig =
            serde_json::from_value(merged).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: train::TrainConfig =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_object(py, &self.inner)
    }

    #[getter]
    fn run_id(&self) -> String {
        self.inner.run_id()
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainConfig(experiment={}, objective={}, seed={}, epochs={})",
            self.inner.experiment, self.inner.objective, self.inner.seed, self.inner.epochs
        )
    }
}

/// A training run advanced epoch by epoch. The run is held as a checkpoint
/// between calls, so it can be saved and reloaded at any point.
#[pyclass(module = "pymoca")]
pub struct Run {
    train: Dataset,
    test: Option<Dataset>,
    checkpoint: Checkpoint,
}

impl Run {
    fn step<T>(&mut self, f: impl FnOnce(&mut Trainer<'_>) -> moca::Result<T>) -> PyResult<T> {
        let mut t = Trainer::resume(&self.checkpoint, &self.train, self.test.as_ref()).map_err(to_py)?;
        let out = f(&mut t).map_err(to_py)?;
        self.checkpoint = t.checkpoint().map_err(to_py)?;
        Ok(out)
    }

    fn config(&self) -> PyResult<train::TrainConfig> {
        config_from_checkpoint(&self.checkpoint).map_err(to_py)
    }

    fn state(&self) -> PyResult<train::MocaState> {
        state_from_checkpoint(&self.checkpoint, &self.config()?).map_err(to_py)
    }

    fn trace(&self) -> PyResult<Vec<moca::metrics::MetricRecord>> {
        let t = Trainer::resume(&self.checkpoint, &self.train, self.test.as_ref()).map_err(to_py)?;
        Ok(t.trace().to_vec())
    }
}

#[pymethods]
impl Run {
    /// Loads the datasets named by `config` and initializes the networks.
    #[new]
    fn new(config: &PyTrainConfig) -> PyResult<Self> {
        let (train, test) = load_datasets(&config.inner).map_err(to_py)?;
        let checkpoint = Trainer::new(config.inner.clone(), &train, test.as_ref())
            .and_then(|t| t.checkpoint())
            .map_err(to_py)?;
        Ok(Self { train, test, checkpoint })
    }

    /// Reopens a run from a checkpoint file written by `save` or the CLI.
    #[staticmethod]
    #[pyo3(signature = (path, data_dir = None))]
    fn load(path: &str, data_dir: Option<String>) -> PyResult<Self> {
        let checkpoint = Checkpoint::load(path).map_err(to_py)?;
        let mut config = config_from_checkpoint(&checkpoint).map_err(to_py)?;
        if let Some(d) = data_dir {
            config.data_dir = d;
        }
        let (train, test) = load_datasets(&config).map_err(to_py)?;
        Trainer::resume(&checkpoint, &train, test.as_ref()).map_err(to_py)?;
        Ok(Self { train, test, checkpoint })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.checkpoint.save(path).map_err(to_py)
    }

    #[getter]
    fn config_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.config()?).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn epoch(&self) -> PyResult<u64> {
        Ok(self.state()?.epoch)
    }

    #[getter]
    fn is_done(&self) -> PyResult<bool> {
        Ok(self.state()?.epoch >= self.config()?.epochs as u64)
    }

    /// Records the untrained epoch-0 metrics row; only valid before training.
    fn record_initial<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let rec = self.step(|t| t.record_initial())?;
        to_object(py, &rec)
    }

    /// Trains one epoch and returns its metrics row.
    fn run_epoch<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let rec = py.detach(|| self.step(|t| t.run_epoch()))?;
        to_object(py, &rec)
    }

    /// Metrics rows recorded so far.
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_object(py, &self.trace()?)
    }

    fn metrics_csv(&self) -> PyResult<String> {
        to_csv_string(&self.trace()?).map_err(to_py)
    }

    /// Unit-norm latent codes of `x`.
    fn encode(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.state()?.encode(&tensor(x)?).map_err(to_py)?))
    }

    fn decode(&self, z: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let state = self.state()?;
        let dec = state.dec.as_ref().ok_or_else(|| PyValueError::new_err("run has no decoder"))?;
        Ok(rows(&dec.forward(&tensor(z)?).map_err(to_py)?))
    }

    /// Decodes `count` fresh prior samples drawn with `seed`.
    #[pyo3(signature = (count, seed = 0))]
    fn generate(&self, count: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let state = self.state()?;
        let dec = state.dec.as_ref().ok_or_else(|| PyValueError::new_err("run has no decoder"))?;
        if count == 0 {
            return Ok(Vec::new());
        }
        Ok(rows(&prior::generate(dec, count, &mut Rng::new(seed)).map_err(to_py)?))
    }
}

/// `count` points drawn uniformly from the unit sphere in `d` dimensions.
#[pyfunction]
#[pyo3(signature = (d, count, seed = 0))]
fn sample_prior(d: usize, count: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&prior::sample_prior(d, count, &mut Rng::new(seed)).map_err(to_py)?))
}

#[pyfunction]
fn momentum_at(m0: f64, total_steps: u64, step: u64) -> PyResult<f64> {
    MomentumSchedule::new(m0, total_steps)
        .and_then(|s| s.at(step))
        .map_err(to_py)
}

#[pyfunction]
fn moco_contrastive(z_q: Vec<Vec<f64>>, z_k: Vec<Vec<f64>>, queue: Vec<Vec<f64>>, tau: f64) -> PyResult<f64> {
    losses::moco_contrastive_value(&tensor(z_q)?, &tensor(z_k)?, &tensor(queue)?, tau).map_err(to_py)
}

#[pyfunction]
fn l_neg_mc(z: Vec<Vec<f64>>, pool: Vec<Vec<f64>>, tau: f64) -> PyResult<f64> {
    losses::l_neg_mc_value(&tensor(z)?, &tensor(pool)?, tau).map_err(to_py)
}

/// MMD V-statistic; `kernel` is "imq" (scale defaults to 2·d) or "rbf" (σ², default 1).
#[pyfunction]
#[pyo3(signature = (x, y, kernel = "imq", scale = None))]
fn mmd(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, kernel: &str, scale: Option<f64>) -> PyResult<f64> {
    let x = tensor(x)?;
    let kind = match kernel {
        "imq" => KernelKind::Imq,
        "rbf" => KernelKind::Rbf,
        other => return Err(PyValueError::new_err(format!("unknown kernel {other:?}"))),
    };
    let spec = match (kind, scale) {
        (kind, Some(scale)) => KernelSpec { kind, scale },
        (KernelKind::Imq, None) => KernelSpec::imq_for_dim(x.cols()),
        (KernelKind::Rbf, None) => KernelSpec::rbf(1.0),
    };
    losses::mmd_value(&x, &tensor(y)?, &spec).map_err(to_py)
}

/// Sliced squared-W₂ distance over `n_proj` random directions.
#[pyfunction]
#[pyo3(signature = (x, y, n_proj = SWD_METRIC_PROJECTIONS, seed = 0))]
fn swd(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, n_proj: usize, seed: u64) -> PyResult<f64> {
    diagnostics::swd_metric(&tensor(x)?, &tensor(y)?, n_proj, &mut Rng::new(seed)).map_err(to_py)
}

/// Debiased Sinkhorn divergence; `eps` defaults to a tenth of the mean squared distance.
#[pyfunction]
#[pyo3(signature = (x, y, eps = None, n_iter = SINKHORN_DEFAULT_ITERS))]
fn sinkhorn_divergence(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, eps: Option<f64>, n_iter: usize) -> PyResult<f64> {
    let (x, y) = (tensor(x)?, tensor(y)?);
    let eps = match eps {
        Some(e) => e,
        None => losses::default_epsilon(&x, &y).map_err(to_py)?,
    };
    losses::sinkhorn_divergence_value(&x, &y, eps, n_iter).map_err(to_py)
}

/// Singular-value spectrum and dispersion of a latent matrix, as a dict.
#[pyfunction]
fn svd_spectrum<'py>(py: Python<'py>, z: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
    to_object(py, &diagnostics::svd_spectrum(&tensor(z)?).map_err(to_py)?)
}

#[pyfunction]
fn entropy_estimate(z: Vec<Vec<f64>>, tau: f64) -> PyResult<f64> {
    diagnostics::entropy_estimate(&tensor(z)?, tau).map_err(to_py)
}

/// `(features, labels)` of an IDX dataset split, pixels scaled to [0, 1].
#[pyfunction]
fn load_mnist(dir: &str, split: &str) -> PyResult<(Vec<Vec<f64>>, Option<Vec<u8>>)> {
    let ds = load_mnist_dir(dir, split).map_err(to_py)?;
    Ok((rows(&ds.features), ds.labels))
}

#[pymodule]
fn pymoca(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("CSV_COLUMNS", CSV_COLUMNS.to_vec())?;
    m.add("FormatError", m.py().get_type::<FormatError>())?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<Run>()?;
    m.add_function(wrap_pyfunction!(sample_prior, m)?)?;
    m.add_function(wrap_pyfunction!(momentum_at, m)?)?;
    m.add_function(wrap_pyfunction!(moco_contrastive, m)?)?;
    m.add_function(wrap_pyfunction!(l_neg_mc, m)?)?;
    m.add_function(wrap_pyfunction!(mmd, m)?)?;
    m.add_function(wrap_pyfunction!(swd, m)?)?;
    m.add_function(wrap_pyfunction!(sinkhorn_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(svd_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(load_mnist, m)?)?;
    Ok(())
}
