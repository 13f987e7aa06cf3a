//! Python bindings for the genesig core: expression matrices, label vectors,
//! dense networks, and the discovery operations (synthetic cohorts, SMOTE,
//! training, attribution, signature construction, evaluation, rank-sum and
//! Pearson statistics).
//!
//! Configuration-shaped arguments are JSON strings with the same schemas the
//! CLI consumes, so Python callers share one source of truth with the config
//! files; omitting them selects the library defaults.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use genesig::attribution::{attribute as core_attribute, AttributionMethod};
use genesig::data::{
    load_expression as core_load_expression, smote_balance as core_smote_balance,
    stratified_kfold as core_stratified_kfold, write_expression, write_labels,
    zscore as core_zscore, ExpressionMatrix, LabelVector,
};
use genesig::evaluation::{evaluate_signature as core_evaluate_signature, EvalConfig};
use genesig::nn::{predict, DenseNetwork, LayerSpec, ScoreKind};
use genesig::pipeline::{train_full_model, ModelConfig};
use genesig::signature::{build_signature as core_build_signature, SignatureConfig};
use genesig::stats::{
    exact_rank_sum_p as core_exact_rank_sum_p, pearson_matrix as core_pearson_matrix,
    rank_sum_test as core_rank_sum_test,
};
use genesig::synth::{generate as core_generate, SyntheticSpec};
use genesig::Error as CoreError;

fn to_py(e: CoreError) -> PyErr {
    let msg = format!("{}: {e}", e.kind());
    match e {
        CoreError::Io(_) => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn parse_config<T: serde::de::DeserializeOwned + Default>(
    json: Option<&str>,
    what: &str,
) -> PyResult<T> {
    match json {
        None => Ok(T::default()),
        Some(s) => serde_json::from_str(s)
            .map_err(|e| PyValueError::new_err(format!("invalid {what} JSON: {e}"))),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| PyValueError::new_err(format!("serialization failed: {e}")))
}

fn delimiter_byte(delimiter: Option<&str>) -> PyResult<Option<u8>> {
    match delimiter {
        None => Ok(None),
        Some(s) if s.len() == 1 && s.is_ascii() => Ok(Some(s.as_bytes()[0])),
        Some(s) => Err(PyValueError::new_err(format!(
            "delimiter must be a single ASCII character, got {s:?}"
        ))),
    }
}

/// Sample-by-gene expression matrix with named rows and columns.
#[pyclass(name = "ExpressionMatrix", frozen)]
struct PyExpressionMatrix {
    inner: ExpressionMatrix,
}

#[pymethods]
impl PyExpressionMatrix {
    #[new]
    fn new(
        rows: Vec<Vec<f64>>,
        gene_names: Vec<String>,
        sample_ids: Vec<String>,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: ExpressionMatrix::from_rows(rows, gene_names, sample_ids).map_err(to_py)?,
        })
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn n_genes(&self) -> usize {
        self.inner.n_genes()
    }

    #[getter]
    fn gene_names(&self) -> Vec<String> {
        self.inner.gene_names().to_vec()
    }

    #[getter]
    fn sample_ids(&self) -> Vec<String> {
        self.inner.sample_ids().to_vec()
    }

    fn row(&self, sample: usize) -> PyResult<Vec<f64>> {
        if sample >= self.inner.n_samples() {
            return Err(PyValueError::new_err(format!(
                "sample index {sample} out of range for {} samples",
                self.inner.n_samples()
            )));
        }
        Ok(self.inner.row(sample).to_vec())
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_samples())
            .map(|s| self.inner.row(s).to_vec())
            .collect()
    }

    /// New matrix restricted to `genes`, in the given order.
    fn select_genes(&self, genes: Vec<String>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.select_genes(&genes).map_err(to_py)?,
        })
    }

    #[pyo3(signature = (path, delimiter=None))]
    fn save(&self, path: PathBuf, delimiter: Option<&str>) -> PyResult<()> {
        write_expression(&self.inner, &path, delimiter_byte(delimiter)?).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.n_samples()
    }

    fn __repr__(&self) -> String {
        format!(
            "ExpressionMatrix({} samples x {} genes)",
            self.inner.n_samples(),
            self.inner.n_genes()
        )
    }
}

/// Per-sample class assignments plus the class-name table.
#[pyclass(name = "LabelVector", frozen)]
struct PyLabelVector {
    inner: LabelVector,
}

#[pymethods]
impl PyLabelVector {
    #[new]
    fn new(labels: Vec<usize>, class_names: Vec<String>) -> PyResult<Self> {
        Ok(Self {
            inner: LabelVector::new(labels, class_names).map_err(to_py)?,
        })
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names().to_vec()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    fn counts(&self) -> Vec<usize> {
        self.inner.counts()
    }

    fn class_indices(&self, class: usize) -> Vec<usize> {
        self.inner.class_indices(class)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "LabelVector({} samples, classes {:?})",
            self.inner.len(),
            self.inner.class_names()
        )
    }
}

/// Fully connected feed-forward network.
#[pyclass(name = "DenseNetwork", frozen)]
struct PyDenseNetwork {
    inner: DenseNetwork,
}

#[pymethods]
impl PyDenseNetwork {
    /// Glorot-initialized network from a JSON list of layer specs, e.g.
    /// `[{"input_dim": 30, "output_dim": 12, "activation": "relu"},
    ///   {"input_dim": 12, "output_dim": 3, "activation": "softmax"}]`.
    #[staticmethod]
    fn random(layer_specs_json: &str, seed: u64) -> PyResult<Self> {
        let specs: Vec<LayerSpec> = serde_json::from_str(layer_specs_json)
            .map_err(|e| PyValueError::new_err(format!("invalid layer specs JSON: {e}")))?;
        Ok(Self {
            inner: DenseNetwork::random(&specs, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: DenseNetwork::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Self> {
        Ok(Self {
            inner: DenseNetwork::from_json_str(json).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json_string().map_err(to_py)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    #[getter]
    fn n_layers(&self) -> usize {
        self.inner.n_layers()
    }

    /// Output vector (softmax probabilities for a softmax head).
    fn forward(&self, input: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward(&input).map_err(to_py)
    }

    /// Gradient of the target class logit with respect to the input.
    fn input_gradient(&self, input: Vec<f64>, target_class: usize) -> PyResult<Vec<f64>> {
        self.inner
            .input_gradient(&input, target_class, ScoreKind::Logit)
            .map_err(to_py)
    }

    /// Predicted class index per sample of `matrix`.
    fn predict(&self, matrix: &PyExpressionMatrix) -> PyResult<Vec<usize>> {
        predict(&self.inner, &matrix.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "DenseNetwork({} -> {}, {} layers)",
            self.inner.input_dim(),
            self.inner.output_dim(),
            self.inner.n_layers()
        )
    }
}

/// Loads an expression CSV/TSV and a label file, joined on sample id.
/// Returns `(matrix, labels, dropped_unlabeled, dropped_unmeasured)`.
#[pyfunction]
#[pyo3(signature = (expression_path, labels_path, delimiter=None))]
fn load_expression(
    expression_path: PathBuf,
    labels_path: PathBuf,
    delimiter: Option<&str>,
) -> PyResult<(PyExpressionMatrix, PyLabelVector, usize, usize)> {
    let loaded =
        core_load_expression(&expression_path, &labels_path, delimiter_byte(delimiter)?)
            .map_err(to_py)?;
    Ok((
        PyExpressionMatrix {
            inner: loaded.matrix,
        },
        PyLabelVector {
            inner: loaded.labels,
        },
        loaded.dropped_unlabeled,
        loaded.dropped_unmeasured,
    ))
}

/// Writes a `sample_id,label` table for `labels`, one row per sample id.
#[pyfunction]
#[pyo3(signature = (sample_ids, labels, path, delimiter=None))]
fn save_labels(
    sample_ids: Vec<String>,
    labels: &PyLabelVector,
    path: PathBuf,
    delimiter: Option<&str>,
) -> PyResult<()> {
    write_labels(&sample_ids, &labels.inner, &path, delimiter_byte(delimiter)?).map_err(to_py)
}

/// Generates a synthetic labeled cohort. `spec_json` follows the synth config
/// schema; `None` selects the default four-class cohort. Returns
/// `(matrix, labels, ground_truth_json)`.
#[pyfunction]
#[pyo3(signature = (spec_json=None))]
fn generate_synthetic(
    spec_json: Option<&str>,
) -> PyResult<(PyExpressionMatrix, PyLabelVector, String)> {
    let spec: SyntheticSpec = parse_config(spec_json, "synthetic spec")?;
    let (x, y, truth) = core_generate(&spec).map_err(to_py)?;
    let truth_json = truth.to_json_string().map_err(to_py)?;
    Ok((
        PyExpressionMatrix { inner: x },
        PyLabelVector { inner: y },
        truth_json,
    ))
}

/// Per-gene z-score normalization. Returns `(matrix, means, stds)`; genes
/// with zero variance map to 0.
#[pyfunction]
fn zscore(matrix: &PyExpressionMatrix) -> PyResult<(PyExpressionMatrix, Vec<f64>, Vec<f64>)> {
    let (normalized, stats) = core_zscore(&matrix.inner).map_err(to_py)?;
    Ok((
        PyExpressionMatrix { inner: normalized },
        stats.mean().to_vec(),
        stats.std().to_vec(),
    ))
}

/// SMOTE oversampling to the majority-class count. Original samples come
/// first, synthetics are appended. Returns `(matrix, labels)`.
#[pyfunction]
#[pyo3(signature = (matrix, labels, k_neighbors=5, seed=0))]
fn smote_balance(
    matrix: &PyExpressionMatrix,
    labels: &PyLabelVector,
    k_neighbors: usize,
    seed: u64,
) -> PyResult<(PyExpressionMatrix, PyLabelVector)> {
    let (x, y) = core_smote_balance(&matrix.inner, &labels.inner, k_neighbors, seed)
        .map_err(to_py)?;
    Ok((PyExpressionMatrix { inner: x }, PyLabelVector { inner: y }))
}

/// Stratified k-fold split. Returns `[(train_indices, test_indices), ...]`.
#[pyfunction]
#[pyo3(signature = (labels, k, seed=0))]
fn stratified_kfold(
    labels: &PyLabelVector,
    k: usize,
    seed: u64,
) -> PyResult<Vec<(Vec<usize>, Vec<usize>)>> {
    let plan = core_stratified_kfold(&labels.inner, k, seed).map_err(to_py)?;
    Ok((0..plan.k())
        .map(|f| (plan.train_indices(f), plan.test_indices(f).to_vec()))
        .collect())
}

/// Trains the classifier (with optional autoencoder pretraining and SMOTE
/// balancing) on a z-scored matrix, per the model config schema. Returns
/// `(network, report_json)`.
#[pyfunction]
#[pyo3(signature = (matrix, labels, model_config_json=None, smote_seed=0))]
fn train_model(
    matrix: &PyExpressionMatrix,
    labels: &PyLabelVector,
    model_config_json: Option<&str>,
    smote_seed: u64,
) -> PyResult<(PyDenseNetwork, String)> {
    let config: ModelConfig = parse_config(model_config_json, "model config")?;
    let (network, report) =
        train_full_model(&config, &matrix.inner, &labels.inner, smote_seed).map_err(to_py)?;
    Ok((PyDenseNetwork { inner: network }, to_json(&report)?))
}

/// Attribution scores for one input, e.g. `{"method": "lrp_epsilon",
/// "epsilon": 0.01}`; `None` selects the plain gradient.
#[pyfunction]
#[pyo3(signature = (network, input, target_class, method_json=None))]
fn attribute(
    network: &PyDenseNetwork,
    input: Vec<f64>,
    target_class: usize,
    method_json: Option<&str>,
) -> PyResult<Vec<f64>> {
    let method: AttributionMethod = match method_json {
        None => AttributionMethod::Gradient,
        Some(s) => serde_json::from_str(s)
            .map_err(|e| PyValueError::new_err(format!("invalid attribution method JSON: {e}")))?,
    };
    core_attribute(&network.inner, &input, target_class, &method).map_err(to_py)
}

/// Distills a gene signature from a trained network and its z-scored
/// training cohort, per the signature config schema. Returns the signature
/// as JSON (gene panel plus per-class provenance).
#[pyfunction]
#[pyo3(signature = (network, matrix, labels, config_json=None))]
fn build_signature(
    network: &PyDenseNetwork,
    matrix: &PyExpressionMatrix,
    labels: &PyLabelVector,
    config_json: Option<&str>,
) -> PyResult<String> {
    let config: SignatureConfig = parse_config(config_json, "signature config")?;
    let signature = core_build_signature(&network.inner, &matrix.inner, &labels.inner, &config)
        .map_err(to_py)?;
    signature.to_json_string().map_err(to_py)
}

/// Cross-validated evaluation of a gene panel on a raw (unnormalized)
/// matrix; folds are z-scored internally on their training split. Returns
/// the metrics report as JSON.
#[pyfunction]
#[pyo3(signature = (matrix, labels, genes, config_json=None))]
fn evaluate_signature(
    matrix: &PyExpressionMatrix,
    labels: &PyLabelVector,
    genes: Vec<String>,
    config_json: Option<&str>,
) -> PyResult<String> {
    let config: EvalConfig = parse_config(config_json, "evaluation config")?;
    let outcome = core_evaluate_signature(&matrix.inner, &labels.inner, &genes, &config)
        .map_err(to_py)?;
    to_json(&outcome.report)
}

/// Mann-Whitney rank-sum test (normal approximation, tie-corrected,
/// continuity-corrected). Returns `(u_statistic, z_score, p_two_sided)`.
#[pyfunction]
fn rank_sum_test(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let r = core_rank_sum_test(&x, &y).map_err(to_py)?;
    Ok((r.u_statistic, r.z_score, r.p_two_sided))
}

/// Exact two-sided rank-sum p-value by complete enumeration (n1 + n2 <= 20).
#[pyfunction]
fn exact_rank_sum_p(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    core_exact_rank_sum_p(&x, &y).map_err(to_py)
}

/// Pairwise Pearson correlations among `genes` across the samples of
/// `matrix`. Returns a dense row-major matrix in the given gene order;
/// entries involving constant genes are 0.
#[pyfunction]
fn pearson_matrix(matrix: &PyExpressionMatrix, genes: Vec<String>) -> PyResult<Vec<Vec<f64>>> {
    let corr = core_pearson_matrix(&matrix.inner, &genes).map_err(to_py)?;
    let k = corr.len();
    Ok((0..k)
        .map(|i| (0..k).map(|j| corr.get(i, j)).collect())
        .collect())
}

#[pymodule]
fn genesig_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyExpressionMatrix>()?;
    m.add_class::<PyLabelVector>()?;
    m.add_class::<PyDenseNetwork>()?;
    m.add_function(wrap_pyfunction!(load_expression, m)?)?;
    m.add_function(wrap_pyfunction!(save_labels, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(zscore, m)?)?;
    m.add_function(wrap_pyfunction!(smote_balance, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_kfold, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(attribute, m)?)?;
    m.add_function(wrap_pyfunction!(build_signature, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_signature, m)?)?;
    m.add_function(wrap_pyfunction!(rank_sum_test, m)?)?;
    m.add_function(wrap_pyfunction!(exact_rank_sum_p, m)?)?;
    m.add_function(wrap_pyfunction!(pearson_matrix, m)?)?;
    Ok(())
}
