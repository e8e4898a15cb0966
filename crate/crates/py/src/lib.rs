//! Python bindings: graphs, partitions, experiment runs and the analytic
//! helpers. Rust errors surface as `ValueError("<kind>: <message>")`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use fedgcn_core::analysis::{comm_cost_closed_form, sbm_bound_report, SbmSetting, SigmaForm};
use fedgcn_core::graph::{load_dataset, partition_nodes, sbm_generate, Graph, SbmParams};
use fedgcn_core::harness::{run_seed, ExperimentConfig, Source};
use fedgcn_core::secure::{estimate_ciphertext_bytes, pack_bools, unpack_bools, SizeModel};

fn py_err(e: fedgcn_core::Error) -> PyErr {
    PyValueError::new_err(format!("{}: {e}", e.kind()))
}

/// Undirected graph with node features and labels.
#[pyclass(name = "Graph", module = "fedgcn", frozen)]
struct PyGraph {
    inner: Graph,
}

#[pymethods]
impl PyGraph {
    /// Samples a stochastic block model graph.
    #[staticmethod]
    #[pyo3(signature = (num_nodes, num_blocks, alpha, mu, feature_dim, seed, feature_noise=0.5))]
    fn sbm(
        num_nodes: usize,
        num_blocks: usize,
        alpha: f64,
        mu: f64,
        feature_dim: usize,
        seed: u64,
        feature_noise: f64,
    ) -> PyResult<Self> {
        let params = SbmParams::new(num_nodes, num_blocks, alpha, mu, feature_dim, feature_noise);
        let inner = sbm_generate(&params, seed).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Loads a dataset directory.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ds = load_dataset(path).map_err(py_err)?;
        Ok(Self { inner: ds.graph })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges()
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    /// Node-to-client assignment.
    fn partition(&self, num_clients: usize, iid_fraction: f64, seed: u64) -> PyResult<Vec<usize>> {
        let part = partition_nodes(&self.inner, num_clients, iid_fraction, seed).map_err(py_err)?;
        Ok(part.assignment)
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(nodes={}, edges={}, features={}, classes={})",
            self.inner.num_nodes(),
            self.inner.num_edges(),
            self.inner.feature_dim(),
            self.inner.num_classes()
        )
    }
}

/// Runs one seed of an experiment given as a JSON document; returns the
/// summary as JSON.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str, seed: u64) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(py_err)?;
    let summary = py
        .detach(|| {
            let source = Source::open(&cfg.data)?;
            run_seed(&cfg, &source, seed).map(|r| r.summary)
        })
        .map_err(py_err)?;
    serde_json::to_string(&summary).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Canonical hash of an experiment configuration.
#[pyfunction]
fn config_hash(config_json: &str) -> PyResult<String> {
    Ok(ExperimentConfig::from_json(config_json)
        .map_err(py_err)?
        .hash())
}

/// Expected pre-training elements `(exact, approximate)` on an SBM.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn comm_closed_form(
    num_nodes: usize,
    num_clients: usize,
    alpha: f64,
    mu: f64,
    iid_fraction: f64,
    feature_dim: usize,
    hops: usize,
) -> PyResult<(f64, f64)> {
    let s = SbmSetting::new(num_nodes, num_clients, alpha, mu, iid_fraction);
    let c = comm_cost_closed_form(&s, feature_dim, hops).map_err(py_err)?;
    Ok((c.exact_total(), c.approx_total()))
}

/// Expected convergence bound `(value, valid)` for 0, 1 and 2 hops.
#[pyfunction]
#[pyo3(signature = (num_nodes, num_clients, alpha, mu, iid_fraction, table_literal=false))]
fn expected_bounds(
    num_nodes: usize,
    num_clients: usize,
    alpha: f64,
    mu: f64,
    iid_fraction: f64,
    table_literal: bool,
) -> PyResult<Vec<(f64, bool)>> {
    let s = SbmSetting::new(num_nodes, num_clients, alpha, mu, iid_fraction);
    let form = if table_literal {
        SigmaForm::TableLiteral
    } else {
        SigmaForm::Interpolating
    };
    let r = sbm_bound_report(&s, form).map_err(py_err)?;
    Ok(r.bounds.iter().map(|b| (b.value, b.valid)).collect())
}

/// Estimated homomorphic ciphertext bytes for `n` values.
#[pyfunction]
#[pyo3(signature = (n, scheme="bgv", packed=false))]
fn ciphertext_bytes(n: u64, scheme: &str, packed: bool) -> PyResult<u64> {
    let model = match scheme {
        "bgv" => SizeModel::BGV,
        "ckks" => SizeModel::CKKS,
        other => return Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
    };
    Ok(estimate_ciphertext_bytes(n, &model, packed))
}

#[pyfunction]
fn pack_bits(bits: Vec<bool>) -> Vec<u64> {
    pack_bools(&bits)
}

#[pyfunction]
fn unpack_bits(words: Vec<u64>, n: usize) -> PyResult<Vec<bool>> {
    unpack_bools(&words, n).map_err(py_err)
}

/// Adds every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(comm_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(expected_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(ciphertext_bytes, m)?)?;
    m.add_function(wrap_pyfunction!(pack_bits, m)?)?;
    m.add_function(wrap_pyfunction!(unpack_bits, m)?)?;
    Ok(())
}

#[pymodule]
fn fedgcn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
