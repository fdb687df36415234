//! Python bindings: model specs and networks, windowed datasets, training,
//! spectral clustering and the supporting numerics.

use std::fmt::Display;

use gcnn_core::model::{build_model, Checkpoint, Family, Model, ModelSpec, Preset, StageSpec};
use gcnn_core::spectral::{self, GroupAssignment, SimilarityGraph};
use gcnn_core::tensor::Tensor;
use gcnn_core::trainer::{self, TrainConfig};
use gcnn_core::tsdata::{self, TimeSeriesDataset, WindowedRegressionSet, DEFAULT_MAX_GAP};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts any serializable value into plain Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Parses a lowercase enum name such as `"explicit"`.
fn parse_enum<T: DeserializeOwned>(field: &str, name: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("{field}: unknown value `{name}`")))
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    let cols = t.shape().get(1).copied().unwrap_or(1);
    t.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Tensor> {
    Tensor::from_rows(rows).map_err(err)
}

fn graph(weights: &[Vec<f64>]) -> PyResult<SimilarityGraph> {
    SimilarityGraph::from_rows(weights).map_err(err)
}

#[pyclass(name = "ModelSpec", module = "gcnn", from_py_object)]
#[derive(Clone)]
struct PyModelSpec {
    inner: ModelSpec,
}

#[pymethods]
impl PyModelSpec {
    /// One stage per entry of `pools`, each max-pooling by that factor
    /// first; `channels` is per group when grouped.
    #[new]
    #[pyo3(signature = (
        input_channels, window, grouping = "none", k = 1, channels = 100, dense = vec![100],
        family = "cnn", pools = vec![1, 4, 4, 4]
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        input_channels: usize,
        window: usize,
        grouping: &str,
        k: usize,
        channels: usize,
        dense: Vec<usize>,
        family: &str,
        pools: Vec<usize>,
    ) -> PyResult<Self> {
        let mut inner = ModelSpec::new(
            input_channels,
            window,
            parse_enum("grouping", grouping)?,
            k,
            channels,
            dense,
        );
        inner.family = parse_enum::<Family>("family", family)?;
        inner.stages = pools.into_iter().map(|pool| StageSpec { channels, pool }).collect();
        inner.validate().map_err(err)?;
        Ok(PyModelSpec { inner })
    }

    /// Published layer plan for `"water"` or `"drone"`.
    #[staticmethod]
    #[pyo3(signature = (name, family = "cnn", grouping = "none"))]
    fn preset(name: &str, family: &str, grouping: &str) -> PyResult<Self> {
        let p = match name {
            "water" => Preset::Water,
            "drone" => Preset::Drone,
            _ => return Err(PyValueError::new_err(format!("preset: unknown value `{name}`"))),
        };
        Ok(PyModelSpec {
            inner: ModelSpec::preset(p, parse_enum("family", family)?, parse_enum("grouping", grouping)?),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: ModelSpec = serde_json::from_str(text).map_err(err)?;
        inner.validate().map_err(err)?;
        Ok(PyModelSpec { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    /// Output channels, width and groups after every layer.
    fn geometry<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.geometry().map_err(err)?)
    }

    #[getter]
    fn input_channels(&self) -> usize {
        self.inner.input_channels
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn grouping(&self) -> PyResult<String> {
        serde_json::to_value(self.inner.grouping)
            .map(|v| v.as_str().unwrap_or_default().to_string())
            .map_err(err)
    }

    fn __repr__(&self) -> PyResult<String> {
        Ok(format!("ModelSpec({})", self.to_json()?))
    }
}

#[pyclass(name = "WindowedSet", module = "gcnn", from_py_object)]
#[derive(Clone)]
struct PyWindowedSet {
    inner: WindowedRegressionSet,
}

#[pymethods]
impl PyWindowedSet {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn target_name(&self) -> String {
        self.inner.target_name().to_string()
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window()
    }

    #[getter]
    fn channel_names(&self) -> Vec<String> {
        self.inner.channel_names().to_vec()
    }

    fn targets(&self) -> Vec<f64> {
        self.inner.targets()
    }

    /// Sample `i` as `[channels][window]`.
    fn input(&self, i: usize) -> PyResult<Vec<Vec<f64>>> {
        if i >= self.inner.len() {
            return Err(PyValueError::new_err(format!("sample {i} of {}", self.inner.len())));
        }
        Ok(rows(&self.inner.input(i)))
    }

    /// Chronological split at `round(len · train_fraction)`.
    #[pyo3(signature = (train_fraction = 0.9))]
    fn split(&self, train_fraction: f64) -> PyResult<(Self, Self)> {
        let spec = tsdata::SplitSpec {
            train_fraction,
            ..Default::default()
        };
        let (a, b) = tsdata::split(&self.inner, &spec).map_err(err)?;
        Ok((PyWindowedSet { inner: a }, PyWindowedSet { inner: b }))
    }
}

#[pyclass(name = "Model", module = "gcnn", from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    /// `assignment` gives each input channel's 0-based group for explicit grouping.
    #[new]
    #[pyo3(signature = (spec, assignment = None, seed = 0))]
    fn new(spec: &PyModelSpec, assignment: Option<Vec<usize>>, seed: u64) -> PyResult<Self> {
        let a = assignment
            .map(|labels| GroupAssignment::new(labels, spec.inner.k))
            .transpose()
            .map_err(err)?;
        Ok(PyModel {
            inner: build_model(&spec.inner, a.as_ref(), seed).map_err(err)?,
        })
    }

    #[getter]
    fn spec(&self) -> PyModelSpec {
        PyModelSpec {
            inner: self.inner.spec.clone(),
        }
    }

    fn param_count(&self) -> usize {
        self.inner.count_params()
    }

    fn param_names(&self) -> Vec<String> {
        self.inner.param_names()
    }

    /// Membership matrix `U` [N×K] of a coeff-mode model.
    fn coefficients(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.coefficients().as_ref().map(rows)
    }

    /// Prediction for one `[channels][window]` sample.
    fn predict(&self, window: Vec<Vec<f64>>) -> PyResult<f64> {
        self.inner.predict(&matrix(&window)?).map_err(err)
    }

    fn predict_set(&self, set: &PyWindowedSet) -> PyResult<Vec<f64>> {
        let inputs: Vec<Tensor> = (0..set.inner.len()).map(|i| set.inner.input(i)).collect();
        self.inner.predict_many(&inputs).map_err(err)
    }

    /// SRMSE, RMSE, SE and predictions on `set`.
    fn evaluate<'py>(&self, py: Python<'py>, set: &PyWindowedSet) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &trainer::evaluate(&self.inner, &set.inner, "model").map_err(err)?)
    }

    #[pyo3(signature = (config_hash = ""))]
    fn to_checkpoint(&self, config_hash: &str) -> PyResult<String> {
        let mut out = Vec::new();
        Checkpoint::from_model(&self.inner, config_hash).write(&mut out).map_err(err)?;
        String::from_utf8(out).map_err(err)
    }

    #[staticmethod]
    fn from_checkpoint(text: &str) -> PyResult<Self> {
        let ck = Checkpoint::read(text.as_bytes()).map_err(err)?;
        Ok(PyModel {
            inner: ck.to_model().map_err(err)?,
        })
    }
}

/// Windows of complete series; channels are every series except `target`.
#[pyfunction]
fn make_windows(names: Vec<String>, values: Vec<Vec<f64>>, target: &str, window: usize) -> PyResult<PyWindowedSet> {
    let data = TimeSeriesDataset::from_series(names, values).map_err(err)?;
    Ok(PyWindowedSet {
        inner: tsdata::make_windows(&data, target, window).map_err(err)?,
    })
}

fn dataset_with_gaps(names: Vec<String>, values: Vec<Vec<Option<f64>>>) -> PyResult<TimeSeriesDataset> {
    let len = values.first().map_or(0, Vec::len);
    let mask = values.iter().map(|v| v.iter().map(Option::is_some).collect()).collect();
    let values = values.into_iter().map(|v| v.into_iter().map(|x| x.unwrap_or(0.0)).collect()).collect();
    let stamps: Vec<i64> = (0..len as i64).collect();
    let labels = stamps.iter().map(i64::to_string).collect();
    TimeSeriesDataset::new("t".into(), names, values, mask, stamps, labels).map_err(err)
}

/// Linear interpolation of gaps up to `max_gap`; longer gaps drop the series.
/// `None` marks a missing value. Returns kept names, values and the report.
#[pyfunction]
#[pyo3(signature = (names, values, max_gap = DEFAULT_MAX_GAP))]
fn repair_gaps<'py>(
    py: Python<'py>,
    names: Vec<String>,
    values: Vec<Vec<Option<f64>>>,
    max_gap: usize,
) -> PyResult<(Vec<String>, Vec<Vec<f64>>, Bound<'py, PyAny>)> {
    let data = dataset_with_gaps(names, values)?;
    let (fixed, report) = tsdata::repair_gaps(&data, max_gap).map_err(err)?;
    let values = (0..fixed.n_series()).map(|i| fixed.series(i).to_vec()).collect();
    Ok((fixed.names().to_vec(), values, to_py(py, &report)?))
}

/// Repair, standardize on the leading `train_fraction` of time, window and
/// split chronologically. Returns the train and test sets and a report.
#[pyfunction]
#[pyo3(signature = (names, values, target, window, train_fraction = 0.9, max_gap = DEFAULT_MAX_GAP))]
fn prepare<'py>(
    py: Python<'py>,
    names: Vec<String>,
    values: Vec<Vec<Option<f64>>>,
    target: &str,
    window: usize,
    train_fraction: f64,
    max_gap: usize,
) -> PyResult<(PyWindowedSet, PyWindowedSet, Bound<'py, PyAny>)> {
    let data = dataset_with_gaps(names, values)?;
    let (fixed, repair) = tsdata::repair_gaps(&data, max_gap).map_err(err)?;
    let end = (fixed.len() as f64 * train_fraction).floor() as usize;
    let (std_data, std_report) = tsdata::standardize(&fixed, 0..end).map_err(err)?;
    let set = tsdata::make_windows(&std_data, target, window)
        .map_err(err)?
        .with_stats(std_report.stats.clone());
    let spec = tsdata::SplitSpec {
        train_fraction,
        ..Default::default()
    };
    let (train, test) = tsdata::split(&set, &spec).map_err(err)?;
    let report = serde_json::json!({ "repair": repair, "standardize": std_report });
    Ok((PyWindowedSet { inner: train }, PyWindowedSet { inner: test }, to_py(py, &report)?))
}

/// Latent-group AR fixture. Returns names, values and 0-based group labels.
#[pyfunction]
#[pyo3(signature = (groups = 3, per_group = 4, length = 400, phi = 0.9, noise = 0.3, seed = 0))]
fn grouped_ar(
    groups: usize,
    per_group: usize,
    length: usize,
    phi: f64,
    noise: f64,
    seed: u64,
) -> PyResult<(Vec<String>, Vec<Vec<f64>>, Vec<usize>)> {
    let spec = tsdata::GroupedArSpec {
        groups,
        per_group,
        len: length,
        phi,
        noise,
        seed,
    };
    let (data, labels) = tsdata::grouped_ar(&spec).map_err(err)?;
    let values = (0..data.n_series()).map(|i| data.series(i).to_vec()).collect();
    Ok((data.names().to_vec(), values, labels))
}

/// Minibatch SGD; returns the selected model and the per-epoch history.
#[pyfunction]
#[pyo3(signature = (
    model, set, epochs = 200, batch_size = 16, learning_rate = 1e-3, momentum = 0.0,
    clip_norm = 10.0, val_fraction = 0.1, seed = 0, selection = "best_validation"
))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    model: &PyModel,
    set: &PyWindowedSet,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    momentum: f64,
    clip_norm: f64,
    val_fraction: f64,
    seed: u64,
    selection: &str,
) -> PyResult<(PyModel, usize, Bound<'py, PyAny>)> {
    let config = TrainConfig {
        epochs,
        batch_size,
        learning_rate,
        momentum,
        clip_norm,
        val_fraction,
        seed,
        selection: parse_enum("selection", selection)?,
    };
    let outcome = trainer::train(model.inner.clone(), &set.inner, &config).map_err(err)?;
    let history = to_py(py, &outcome.history)?;
    Ok((PyModel { inner: outcome.model }, outcome.best_epoch, history))
}

/// Absolute Pearson similarity graph over equal-length series.
#[pyfunction]
fn similarity(series: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let names: Vec<String> = (0..series.len()).map(|i| format!("s{i}")).collect();
    let slices: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
    let g = spectral::similarity_from_series(&names, &slices).map_err(err)?;
    Ok(rows(g.weights()))
}

/// Normalized-cut spectral clustering; returns 0-based labels.
#[pyfunction]
#[pyo3(signature = (weights, k, seed = 0))]
fn spectral_cluster(weights: Vec<Vec<f64>>, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    let a = spectral::spectral_cluster(&graph(&weights)?, k, seed).map_err(err)?;
    Ok(a.labels().to_vec())
}

#[pyfunction]
fn ncut(weights: Vec<Vec<f64>>, labels: Vec<usize>, k: usize) -> PyResult<f64> {
    let a = GroupAssignment::new(labels, k).map_err(err)?;
    spectral::ncut_value(&graph(&weights)?, &a).map_err(err)
}

/// Exact minimum normalized cut over all partitions into `k` groups.
#[pyfunction]
fn brute_force_min_ncut(weights: Vec<Vec<f64>>, k: usize) -> PyResult<(Vec<usize>, f64)> {
    let (a, v) = spectral::brute_force_min_ncut(&graph(&weights)?, k).map_err(err)?;
    Ok((a.labels().to_vec(), v))
}

/// Ascending eigenvalues and the matching unit eigenvectors.
#[pyfunction]
fn sym_eig(matrix_rows: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let e = spectral::sym_eig(&matrix(&matrix_rows)?).map_err(err)?;
    let vectors = (0..e.values.len()).map(|j| e.vector(j)).collect();
    Ok((e.values, vectors))
}

/// RMSE over the population standard deviation of the targets; `None`
/// for constant targets.
#[pyfunction]
fn srmse(targets: Vec<f64>, predictions: Vec<f64>) -> PyResult<Option<f64>> {
    Ok(trainer::scores(&targets, &predictions).map_err(err)?.srmse)
}

/// Ridge regression with an unpenalized intercept; returns weights and intercept.
#[pyfunction]
fn fit_ridge(x: Vec<Vec<f64>>, y: Vec<f64>, lam: f64) -> PyResult<(Vec<f64>, f64)> {
    let fit = trainer::fit_ridge(&x, &y, lam).map_err(err)?;
    Ok((fit.weights, fit.intercept))
}

#[pymodule]
fn gcnn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelSpec>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyWindowedSet>()?;
    m.add_function(wrap_pyfunction!(make_windows, m)?)?;
    m.add_function(wrap_pyfunction!(repair_gaps, m)?)?;
    m.add_function(wrap_pyfunction!(prepare, m)?)?;
    m.add_function(wrap_pyfunction!(grouped_ar, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(ncut, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_min_ncut, m)?)?;
    m.add_function(wrap_pyfunction!(sym_eig, m)?)?;
    m.add_function(wrap_pyfunction!(srmse, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ridge, m)?)?;
    Ok(())
}
