//! Python bindings: datasets, networks, built-in classifiers, explanations
//! and the benchmark harness. Any Python object with `labels` and
//! `predict(rows)` can stand in as the black box.

use std::collections::{BTreeMap, HashMap};

use laplace_core::bn::{self, oracle, to_dot, DotOptions};
use laplace_core::dataset::{self, discretize, read_csv, DEFAULT_BINS};
use laplace_core::eval::{self, BenchmarkConfig, RunReport};
use laplace_core::explain::{export, ExportFormat};
use laplace_core::mb::MbConfig;
use laplace_core::models::{Classifier, ClassifierKind, ForestConfig, LinearConfig, TrainConfig};
use laplace_core::perturb::PerturbationConfig;
use laplace_core::stats::ChiSquareTest;
use laplace_core::{
    BayesianNetwork, Dataset, Error, ExplainConfig, Explanation, ModelAdapter, State,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(
    laplace,
    LaplaceError,
    PyException,
    "Base class for pipeline failures."
);
create_exception!(
    laplace,
    DataError,
    LaplaceError,
    "Malformed input data or network."
);
create_exception!(
    laplace,
    ModelError,
    LaplaceError,
    "The black-box model misbehaved."
);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Config(_) | Error::UnknownVariable(_) => PyValueError::new_err(msg),
        Error::Io { .. } => PyIOError::new_err(msg),
        Error::Model(_) => ModelError::new_err(msg),
        _ => DataError::new_err(msg),
    }
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for laplace_core::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// A discrete table. Numeric columns are binned on construction.
#[pyclass(name = "Dataset", module = "laplace", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Loads a CSV file; numeric columns become `bins` equal-width bins.
    #[staticmethod]
    #[pyo3(signature = (path, bins = DEFAULT_BINS))]
    fn read_csv(path: &str, bins: usize) -> PyResult<Self> {
        let raw = dataset::load_csv(path, None).or_py()?;
        Ok(PyDataset {
            inner: discretize(&raw, bins).or_py()?.0,
        })
    }

    /// Builds a table from column names and rows of values (stringified).
    #[staticmethod]
    #[pyo3(signature = (columns, rows, bins = DEFAULT_BINS))]
    fn from_records(
        columns: Vec<String>,
        rows: Vec<Vec<Bound<'_, PyAny>>>,
        bins: usize,
    ) -> PyResult<Self> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| PyValueError::new_err(e.to_string());
        w.write_record(&columns).map_err(csv_err)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(PyValueError::new_err(format!(
                    "row {i} has {} values, expected {}",
                    row.len(),
                    columns.len()
                )));
            }
            let cells = row
                .iter()
                .map(|v| Ok(v.str()?.to_string()))
                .collect::<PyResult<Vec<_>>>()?;
            w.write_record(&cells).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let raw = read_csv(bytes.as_slice(), None).or_py()?;
        Ok(PyDataset {
            inner: discretize(&raw, bins).or_py()?.0,
        })
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.names().into_iter().map(String::from).collect()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    /// State labels of one column.
    fn states(&self, column: &str) -> PyResult<Vec<String>> {
        let c = self.inner.require(column).or_py()?;
        Ok(self.inner.variable(c).states().to_vec())
    }

    /// Row `i` as a column -> state-label mapping.
    fn row(&self, i: usize) -> PyResult<BTreeMap<String, String>> {
        check_row(&self.inner, i)?;
        Ok(labelled_row(&self.inner, self.inner.row(i)))
    }

    /// Deterministic shuffled `(train, test)` split.
    #[pyo3(signature = (train_fraction = 0.8, seed = 0))]
    fn split(&self, train_fraction: f64, seed: u64) -> PyResult<(PyDataset, PyDataset)> {
        let (a, b) = dataset::split(&self.inner, train_fraction, seed).or_py()?;
        Ok((PyDataset { inner: a }, PyDataset { inner: b }))
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv(path).or_py()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} rows x {} columns)",
            self.inner.n_rows(),
            self.inner.n_vars()
        )
    }
}

fn check_row(data: &Dataset, i: usize) -> PyResult<()> {
    if i >= data.n_rows() {
        return Err(PyIndexError::new_err(format!(
            "row {i} out of range for {} rows",
            data.n_rows()
        )));
    }
    Ok(())
}

fn labelled_row(data: &Dataset, row: &[State]) -> BTreeMap<String, String> {
    data.variables()
        .iter()
        .zip(row)
        .map(|(v, &s)| (v.name().to_string(), v.state_label(s).to_string()))
        .collect()
}

/// A discrete Bayesian network.
#[pyclass(name = "Network", module = "laplace", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyNetwork {
    inner: BayesianNetwork,
}

#[pymethods]
impl PyNetwork {
    /// The bundled 37-node ALARM monitoring network.
    #[staticmethod]
    fn alarm() -> Self {
        PyNetwork {
            inner: BayesianNetwork::alarm(),
        }
    }

    /// Loads `alarm` or a network JSON file.
    #[staticmethod]
    fn load(spec: &str) -> PyResult<Self> {
        Ok(PyNetwork {
            inner: BayesianNetwork::by_name_or_path(spec).or_py()?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyNetwork {
            inner: BayesianNetwork::from_json(text).or_py()?,
        })
    }

    /// Binary network `X0..X{n-1}` over a random DAG.
    #[staticmethod]
    #[pyo3(signature = (nodes, max_parents = 3, edge_prob = 0.3, seed = 0))]
    fn random(nodes: usize, max_parents: usize, edge_prob: f64, seed: u64) -> Self {
        PyNetwork {
            inner: oracle::random_network(nodes, max_parents, edge_prob, (0.1, 0.9), seed),
        }
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_dot(&self) -> String {
        to_dot(&self.inner, &DotOptions::default())
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner
            .variables()
            .iter()
            .map(|v| v.name().to_string())
            .collect()
    }

    fn states(&self, name: &str) -> PyResult<Vec<String>> {
        let v = self.inner.require(name).or_py()?;
        Ok(self.inner.variable(v).states().to_vec())
    }

    fn parents(&self, name: &str) -> PyResult<Vec<String>> {
        let v = self.inner.require(name).or_py()?;
        Ok(self.names_of(self.inner.dag().parents(v).iter().copied()))
    }

    /// Forward-samples `n` rows.
    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, py: Python<'_>, n: usize, seed: u64) -> PyResult<PyDataset> {
        let inner = py
            .detach(|| bn::forward_sample(&self.inner, n, seed))
            .or_py()?;
        Ok(PyDataset { inner })
    }

    /// Exact class posterior of `target` given `evidence` (name -> state label).
    #[pyo3(signature = (target, evidence = None))]
    fn posterior(
        &self,
        target: &str,
        evidence: Option<HashMap<String, String>>,
    ) -> PyResult<BTreeMap<String, f64>> {
        let t = self.inner.require(target).or_py()?;
        let mut ev: Vec<Option<State>> = vec![None; self.inner.n_nodes()];
        for (name, label) in evidence.unwrap_or_default() {
            let v = self.inner.require(&name).or_py()?;
            let var = self.inner.variable(v);
            let s = var
                .state_index(&label)
                .ok_or_else(|| PyValueError::new_err(format!("`{name}` has no state `{label}`")))?;
            ev[v] = Some(s);
        }
        let probs = bn::posterior(&self.inner, t, &ev).or_py()?;
        let var = self.inner.variable(t);
        Ok(var.states().iter().cloned().zip(probs).collect())
    }

    /// Graph-theoretic Markov blanket of `target`.
    fn markov_blanket(&self, target: &str) -> PyResult<Vec<String>> {
        let t = self.inner.require(target).or_py()?;
        Ok(self.names_of(oracle::dsep_blanket(self.inner.dag(), t).into_iter()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Network({} nodes, {} edges)",
            self.inner.n_nodes(),
            self.inner.dag().n_edges()
        )
    }
}

impl PyNetwork {
    fn names_of(&self, nodes: impl Iterator<Item = usize>) -> Vec<String> {
        nodes
            .map(|v| self.inner.variable(v).name().to_string())
            .collect()
    }
}

/// A trained built-in classifier (`nb`, `rf` or `linear`).
#[pyclass(name = "Classifier", module = "laplace", frozen)]
struct PyClassifier {
    inner: Classifier,
}

#[pymethods]
impl PyClassifier {
    #[staticmethod]
    #[pyo3(signature = (data, target, kind = "rf", trees = 100, max_depth = None, nb_smoothing = 1.0, l2 = 1e-3, epochs = 300, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        data: &PyDataset,
        target: &str,
        kind: &str,
        trees: usize,
        max_depth: Option<usize>,
        nb_smoothing: f64,
        l2: f64,
        epochs: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let kind = ClassifierKind::parse(kind).or_py()?;
        let t = data.inner.require(target).or_py()?;
        let cfg = TrainConfig {
            nb_smoothing,
            forest: ForestConfig {
                trees,
                max_depth,
                seed,
                ..Default::default()
            },
            linear: LinearConfig {
                l2,
                epochs,
                seed,
                ..Default::default()
            },
        };
        let inner = py
            .detach(|| Classifier::train(kind, &data.inner, t, &cfg))
            .or_py()?;
        Ok(PyClassifier { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyClassifier {
            inner: Classifier::from_json(text).or_py()?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().short_name()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    fn predict(&self, py: Python<'_>, data: &PyDataset) -> PyResult<Vec<String>> {
        py.detach(|| self.inner.predict_batch(&data.inner)).or_py()
    }

    fn __repr__(&self) -> String {
        format!(
            "Classifier(kind={:?}, target={:?})",
            self.kind(),
            self.inner.target().name()
        )
    }
}

/// Adapter around a Python object exposing `labels` and `predict(rows)`,
/// where `rows` is a list of feature -> state-label dicts.
struct PyModel {
    obj: Py<PyAny>,
    labels: Vec<String>,
    features: Vec<String>,
}

impl PyModel {
    fn new(obj: &Bound<'_, PyAny>, features: Vec<String>) -> PyResult<Self> {
        let labels: Vec<String> = obj.getattr("labels")?.extract()?;
        if labels.is_empty() {
            return Err(PyValueError::new_err("model declares no labels"));
        }
        if !obj.hasattr("predict")? {
            return Err(PyValueError::new_err("model has no `predict` method"));
        }
        Ok(PyModel {
            obj: obj.clone().unbind(),
            labels,
            features,
        })
    }
}

impl ModelAdapter for PyModel {
    fn predict_batch(&self, data: &Dataset) -> laplace_core::Result<Vec<String>> {
        Python::attach(|py| -> PyResult<Vec<String>> {
            let rows = data
                .rows()
                .map(|r| labelled_row(data, r).into_pyobject(py))
                .collect::<PyResult<Vec<Bound<'_, PyDict>>>>()?;
            self.obj
                .bind(py)
                .call_method1("predict", (rows,))?
                .extract()
        })
        .map_err(|e| Error::Model(e.to_string()))
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn feature_names(&self) -> Vec<String> {
        self.features.clone()
    }

    fn concurrency_safe(&self) -> bool {
        false
    }
}

enum Model<'py> {
    BuiltIn(PyRef<'py, PyClassifier>),
    Python(PyModel),
}

impl Model<'_> {
    fn resolve<'py>(obj: &Bound<'py, PyAny>, data: &Dataset, target: &str) -> PyResult<Model<'py>> {
        if let Ok(c) = obj.extract::<PyRef<'py, PyClassifier>>() {
            return Ok(Model::BuiltIn(c));
        }
        let features = data
            .names()
            .into_iter()
            .filter(|n| !n.eq_ignore_ascii_case(target))
            .map(String::from)
            .collect();
        Ok(Model::Python(PyModel::new(obj, features)?))
    }

    fn adapter(&self) -> &dyn ModelAdapter {
        match self {
            Model::BuiltIn(c) => &c.inner,
            Model::Python(m) => m,
        }
    }
}

#[derive(FromPyObject)]
enum RowArg {
    Index(usize),
    Labels(HashMap<String, String>),
}

fn instance_states(data: &Dataset, target: &str, row: RowArg) -> PyResult<Vec<State>> {
    match row {
        RowArg::Index(i) => {
            check_row(data, i)?;
            Ok(data.row(i).to_vec())
        }
        RowArg::Labels(labels) => data
            .variables()
            .iter()
            .filter(|v| !v.name().eq_ignore_ascii_case(target))
            .map(|v| {
                let label = labels.get(v.name()).ok_or_else(|| {
                    PyValueError::new_err(format!("instance is missing `{}`", v.name()))
                })?;
                v.state_index(label).ok_or_else(|| {
                    PyValueError::new_err(format!("`{}` has no state `{label}`", v.name()))
                })
            })
            .collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn explain_config(
    samples: usize,
    rho: f64,
    alpha: f64,
    max_cond: usize,
    max_parents: usize,
    smoothing: f64,
    seed: u64,
    sensitive: Option<Vec<String>>,
) -> ExplainConfig {
    ExplainConfig {
        perturbation: PerturbationConfig {
            sample_count: samples,
            resample_probability: rho,
            seed,
        },
        blanket: MbConfig {
            test: ChiSquareTest::new(alpha),
            max_cond,
        },
        max_parents,
        smoothing,
        sensitive: sensitive.unwrap_or_default(),
    }
}

/// One explained prediction.
#[pyclass(name = "Explanation", module = "laplace", frozen)]
struct PyExplanation {
    inner: Explanation,
}

#[pymethods]
impl PyExplanation {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyExplanation {
            inner: Explanation::from_json(text).or_py()?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_dot(&self) -> String {
        String::from_utf8(export(&self.inner, ExportFormat::Dot)).expect("dot output is utf-8")
    }

    #[getter]
    fn target(&self) -> String {
        self.inner.target.clone()
    }

    /// Blanket members, parents and children first, then spouses.
    #[getter]
    fn features(&self) -> Vec<String> {
        self.inner.blanket.features()
    }

    #[getter]
    fn pc(&self) -> Vec<String> {
        self.inner.blanket.pc.clone()
    }

    #[getter]
    fn spouses(&self) -> Vec<String> {
        self.inner.blanket.spouses.clone()
    }

    #[getter]
    fn posterior(&self) -> BTreeMap<String, f64> {
        self.inner
            .classes
            .iter()
            .cloned()
            .zip(self.inner.posterior.iter().copied())
            .collect()
    }

    #[getter]
    fn predicted_class(&self) -> String {
        self.inner.predicted_class.clone()
    }

    #[getter]
    fn explained_class(&self) -> String {
        self.inner.explained_class.clone()
    }

    #[getter]
    fn agrees(&self) -> bool {
        self.inner.agrees()
    }

    #[getter]
    fn flagged_sensitive(&self) -> Vec<String> {
        self.inner.flagged_sensitive.clone()
    }

    #[getter]
    fn instance(&self) -> BTreeMap<String, String> {
        self.inner.instance.discretized.clone()
    }

    #[getter]
    fn network(&self) -> PyNetwork {
        PyNetwork {
            inner: self.inner.network.clone(),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Explanation(target={:?}, features={:?}, predicted={:?})",
            self.inner.target,
            self.inner.blanket.features(),
            self.inner.predicted_class
        )
    }
}

/// Explains `model`'s prediction on `row` (an index into `data` or a
/// feature -> label dict). `model` is a `Classifier` or any object with
/// `labels` and `predict(rows)`.
#[pyfunction]
#[pyo3(signature = (model, data, row, target, samples = 5000, rho = 0.5, alpha = 0.001, max_cond = 3, max_parents = 3, smoothing = 0.5, seed = 0, sensitive = None))]
#[allow(clippy::too_many_arguments)]
fn explain(
    py: Python<'_>,
    model: &Bound<'_, PyAny>,
    data: &PyDataset,
    row: RowArg,
    target: &str,
    samples: usize,
    rho: f64,
    alpha: f64,
    max_cond: usize,
    max_parents: usize,
    smoothing: f64,
    seed: u64,
    sensitive: Option<Vec<String>>,
) -> PyResult<PyExplanation> {
    let model = Model::resolve(model, &data.inner, target)?;
    let instance = instance_states(&data.inner, target, row)?;
    let cfg = explain_config(
        samples,
        rho,
        alpha,
        max_cond,
        max_parents,
        smoothing,
        seed,
        sensitive,
    );
    let adapter = model.adapter();
    let inner = py
        .detach(|| laplace_core::explain(adapter, &instance, &data.inner, target, &cfg))
        .or_py()?;
    Ok(PyExplanation { inner })
}

/// Blanket of `target` found by IPC-MB on `data`.
#[pyfunction]
#[pyo3(signature = (data, target, alpha = 0.001, max_cond = 3))]
fn markov_blanket(
    data: &PyDataset,
    target: &str,
    alpha: f64,
    max_cond: usize,
) -> PyResult<BTreeMap<String, Vec<String>>> {
    let t = data.inner.require(target).or_py()?;
    let named =
        laplace_core::ipc_mb(&data.inner, t, &MbConfig::new(alpha, max_cond)).named(&data.inner);
    Ok(BTreeMap::from([
        ("pc".to_string(), named.pc),
        ("spouses".to_string(), named.spouses),
    ]))
}

/// Benchmark results: local accuracy and consistency over repeated runs.
#[pyclass(name = "Report", module = "laplace", frozen)]
struct PyReport {
    inner: RunReport,
}

#[pymethods]
impl PyReport {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyReport {
            inner: RunReport::from_json(text).or_py()?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_markdown(&self) -> String {
        self.inner.to_markdown()
    }

    #[getter]
    fn feature_sets(&self) -> Vec<Vec<String>> {
        self.inner.feature_sets.clone()
    }

    #[getter]
    fn mean_feature_count(&self) -> f64 {
        self.inner.mean_feature_count
    }

    #[getter]
    fn consistency_entropy(&self) -> Option<f64> {
        self.inner.consistency_entropy
    }

    /// Classifier short name -> (mean F1, sample std).
    #[getter]
    fn local_accuracy(&self) -> BTreeMap<String, (f64, f64)> {
        self.inner
            .local_accuracy
            .iter()
            .map(|(k, s)| (k.clone(), (s.mean, s.std)))
            .collect()
    }

    #[getter]
    fn full_feature_f1(&self) -> BTreeMap<String, f64> {
        self.inner.full_feature_f1.clone()
    }

    #[getter]
    fn failures(&self) -> usize {
        self.inner.failures
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(target={:?}, repetitions={}, mean_feature_count={:.3})",
            self.inner.target, self.inner.repetitions, self.inner.mean_feature_count
        )
    }
}

/// Explains `repetitions` test rows and scores the explained feature sets.
#[pyfunction]
#[pyo3(signature = (model, train, test, target, repetitions = 100, samples = 5000, rho = 0.5, alpha = 0.001, seed = 0, classifiers = None, trees = 100))]
#[allow(clippy::too_many_arguments)]
fn benchmark(
    py: Python<'_>,
    model: &Bound<'_, PyAny>,
    train: &PyDataset,
    test: &PyDataset,
    target: &str,
    repetitions: usize,
    samples: usize,
    rho: f64,
    alpha: f64,
    seed: u64,
    classifiers: Option<Vec<String>>,
    trees: usize,
) -> PyResult<PyReport> {
    let model = Model::resolve(model, &train.inner, target)?;
    let classifiers = match classifiers {
        Some(names) => names
            .iter()
            .map(|n| ClassifierKind::parse(n))
            .collect::<laplace_core::Result<_>>()
            .or_py()?,
        None => ClassifierKind::ALL.to_vec(),
    };
    let cfg = BenchmarkConfig {
        repetitions,
        seed,
        explain: explain_config(
            samples,
            rho,
            alpha,
            laplace_core::mb::DEFAULT_MAX_COND,
            bn::DEFAULT_MAX_PARENTS,
            bn::DEFAULT_SMOOTHING,
            seed,
            None,
        ),
        classifiers,
        train: TrainConfig {
            forest: ForestConfig {
                trees,
                seed,
                ..Default::default()
            },
            linear: LinearConfig {
                seed,
                ..Default::default()
            },
            ..Default::default()
        },
    };
    let adapter = model.adapter();
    let inner = py
        .detach(|| eval::run_benchmark(&train.inner, &test.inner, target, adapter, &cfg))
        .or_py()?;
    Ok(PyReport { inner })
}

/// Support-weighted F1 of `predicted` against `actual`.
#[pyfunction]
fn weighted_f1(predicted: Vec<String>, actual: Vec<String>) -> PyResult<f64> {
    eval::weighted_f1(&predicted, &actual).or_py()
}

/// Entropy (bits) of the pooled feature-occurrence distribution.
#[pyfunction]
fn consistency_entropy(feature_sets: Vec<Vec<String>>) -> PyResult<f64> {
    eval::consistency_entropy(&feature_sets).or_py()
}

#[pymodule]
pub fn laplace(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("LaplaceError", py.get_type::<LaplaceError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("ModelError", py.get_type::<ModelError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyClassifier>()?;
    m.add_class::<PyExplanation>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(explain, m)?)?;
    m.add_function(wrap_pyfunction!(markov_blanket, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_f1, m)?)?;
    m.add_function(wrap_pyfunction!(consistency_entropy, m)?)?;
    Ok(())
}
