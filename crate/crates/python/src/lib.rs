//! Python bindings for the `gradcode` simulator.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use gradcode::{latency, output, scheduler, straggler};

create_exception!(gradcode_py, GradcodeError, PyValueError);

fn err(e: gradcode::Error) -> PyErr {
    GradcodeError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = gradcode::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// Experiment configuration. Keyword arguments mirror the CLI flags.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: gradcode::ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (
        workers=12, clusters=4, load=2, replication=2, iterations=400, runs=30, seed=0,
        schemes=None, model="ge-homogeneous", switch_prob=0.05, mu_slow=0.1, mu_fast=10.0,
        alpha=0.01, tau=0.5, ssi="imperfect", initial_stragglers=0, verify_gradients=false,
        parallel=true,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        workers: usize,
        clusters: usize,
        load: usize,
        replication: usize,
        iterations: usize,
        runs: usize,
        seed: u64,
        schemes: Option<Vec<String>>,
        model: &str,
        switch_prob: f64,
        mu_slow: f64,
        mu_fast: f64,
        alpha: f64,
        tau: f64,
        ssi: &str,
        initial_stragglers: usize,
        verify_gradients: bool,
        parallel: bool,
    ) -> PyResult<Self> {
        let schemes = match schemes {
            Some(names) => names.iter().map(|s| parse(s)).collect::<PyResult<Vec<_>>>()?,
            None => gradcode::Scheme::ALL.to_vec(),
        };
        let inner = gradcode::ExperimentConfig {
            workers,
            clusters,
            load,
            replication,
            iterations,
            runs,
            seed,
            schemes,
            straggler: gradcode::StragglerConfig {
                model: parse(model)?,
                switch_prob,
                mu_slow,
                mu_fast,
                alpha,
                tau,
                ssi: parse(ssi)?,
                initial_stragglers,
                ..Default::default()
            },
            verify_gradients,
            parallel,
            ..Default::default()
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = gradcode::ExperimentConfig::from_json(text).map_err(err)?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn is_feasible(&self) -> bool {
        self.inner.is_feasible()
    }

    #[getter]
    fn workers(&self) -> usize {
        self.inner.workers
    }

    #[getter]
    fn clusters(&self) -> usize {
        self.inner.clusters
    }

    #[getter]
    fn load(&self) -> usize {
        self.inner.load
    }

    #[getter]
    fn replication(&self) -> usize {
        self.inner.replication
    }

    #[getter]
    fn schemes(&self) -> Vec<String> {
        self.inner.schemes.iter().map(|s| s.to_string()).collect()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "Config(K={}, P={}, r={}, n={}, T={}, runs={}, model={}, ssi={})",
            c.workers, c.clusters, c.load, c.replication, c.iterations, c.runs, c.straggler.model, c.straggler.ssi
        )
    }
}

/// Scheme summary: name, mean, sample std of run means, improvement over GC-SC.
type SummaryRow = (String, f64, f64, Option<f64>);
/// run, iteration, scheme, completion time, max stragglers per cluster, swaps.
type RecordRow = (usize, usize, String, f64, usize, usize);

#[pyclass(name = "ExperimentResult")]
struct PyExperimentResult {
    inner: gradcode::ExperimentResult,
}

#[pymethods]
impl PyExperimentResult {
    #[getter]
    fn summaries(&self) -> Vec<SummaryRow> {
        self.inner.summaries.iter().map(|s| (s.scheme.to_string(), s.mean, s.std, s.improvement_vs_gcsc)).collect()
    }

    #[getter]
    fn records(&self) -> Vec<RecordRow> {
        self.inner
            .records
            .iter()
            .map(|r| {
                (r.run, r.iteration, r.scheme.to_string(), r.completion_time, r.max_cluster_stragglers(), r.conflicts)
            })
            .collect()
    }

    #[getter]
    fn fallbacks(&self) -> usize {
        self.inner.fallbacks
    }

    fn mean(&self, scheme: &str) -> PyResult<Option<f64>> {
        let s: gradcode::Scheme = parse(scheme)?;
        Ok(self.inner.summary(s).map(|s| s.mean))
    }

    /// Write `completion_times.csv`, `summary.csv` and the histogram into `dir`.
    fn write_csv(&self, dir: PathBuf) -> PyResult<()> {
        output::write_all(&dir, &self.inner.records, &self.inner.summaries).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

#[pyfunction]
fn run_experiment(py: Python<'_>, config: &PyConfig) -> PyResult<PyExperimentResult> {
    let cfg = config.inner.clone();
    let inner = py.detach(|| gradcode::run_experiment(&cfg)).map_err(err)?;
    Ok(PyExperimentResult { inner })
}

/// Outcome of one scheduling call.
#[pyclass(name = "Schedule", get_all)]
struct PySchedule {
    /// Workers per cluster, in codeword slot order.
    placement: Vec<Vec<usize>>,
    /// `(worker, cluster)` pairs left unplaced by Phase I.
    conflicts: Vec<(usize, usize)>,
    /// `(worker, partner, from, to)` swaps made by Phase II.
    swaps: Vec<(usize, usize, usize, usize)>,
    straggler_counts: Vec<usize>,
}

#[pyclass(name = "AssignmentMatrix")]
struct PyAssignmentMatrix {
    inner: gradcode::ClusterAssignmentMatrix,
}

#[pymethods]
impl PyAssignmentMatrix {
    /// Random matrix in which every worker is eligible for `n` clusters.
    #[staticmethod]
    fn dynamic(workers: usize, clusters: usize, n: usize, seed: u64) -> PyResult<Self> {
        let inner = gradcode::dynamic_assignment_matrix(workers, clusters, n, seed).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(name = "static")]
    fn static_(workers: usize, clusters: usize) -> PyResult<Self> {
        Ok(Self { inner: gradcode::static_assignment(workers, clusters).map_err(err)? })
    }

    #[staticmethod]
    fn from_shifts(workers: usize, clusters: usize, shifts: Vec<Vec<usize>>) -> PyResult<Self> {
        let inner = gradcode::ClusterAssignmentMatrix::from_shifts(workers, clusters, shifts).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn columns(&self) -> Vec<Vec<usize>> {
        self.inner.columns.clone()
    }

    fn is_eligible(&self, worker: usize, cluster: usize) -> bool {
        self.inner.is_eligible(worker, cluster)
    }

    fn clusters_of(&self, worker: usize) -> Vec<usize> {
        self.inner.clusters_of(worker)
    }

    /// Run the greedy scheduler for one straggler vector. With `rates`, workers
    /// are selected fastest-first instead of by index.
    #[pyo3(signature = (straggling, rates=None))]
    fn assign(&self, straggling: Vec<bool>, rates: Option<Vec<f64>>) -> PyResult<PySchedule> {
        let k = self.inner.workers;
        let (mode, rates) = match rates {
            Some(r) => (scheduler::SelectionMode::Heterogeneous, r),
            None => (scheduler::SelectionMode::Homogeneous, vec![1.0; k]),
        };
        let s = scheduler::assign_clusters(&self.inner, &straggling, &rates, mode).map_err(err)?;
        Ok(PySchedule {
            straggler_counts: s.placement.straggler_counts(&straggling),
            conflicts: s.phase_one.conflicts.iter().map(|c| (c.worker, c.cluster)).collect(),
            swaps: s.swaps.iter().map(|w| (w.worker, w.partner, w.from, w.to)).collect(),
            placement: s.placement.clusters,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }
}

#[pyclass(name = "Codebook")]
struct PyCodebook {
    inner: gradcode::Codebook,
}

#[pymethods]
impl PyCodebook {
    #[new]
    fn new(workers: usize, clusters: usize, load: usize) -> PyResult<Self> {
        Ok(Self { inner: gradcode::Codebook::build(workers, clusters, load).map_err(err)? })
    }

    /// Decoding threshold `ℓ - r + 1` of each cluster.
    #[getter]
    fn threshold(&self) -> usize {
        self.inner.codes[0].threshold()
    }

    /// `(support, coefficients)` of codeword `slot` in `cluster`.
    fn codeword(&self, cluster: usize, slot: usize) -> PyResult<(Vec<usize>, Vec<f64>)> {
        let cw = self
            .inner
            .codes
            .get(cluster)
            .and_then(|c| c.codewords.get(slot))
            .ok_or_else(|| GradcodeError::new_err(format!("no codeword {slot} in cluster {cluster}")))?;
        Ok((cw.support.clone(), cw.coefficients.clone()))
    }

    /// Encode per-batch gradients (indexed by batch id) into codeword `slot` of `cluster`.
    fn encode(&self, cluster: usize, slot: usize, gradients: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let cw = self
            .inner
            .codes
            .get(cluster)
            .and_then(|c| c.codewords.get(slot))
            .ok_or_else(|| GradcodeError::new_err(format!("no codeword {slot} in cluster {cluster}")))?;
        cw.evaluate(&gradients).map_err(err)
    }

    /// Average gradient of `cluster`'s batches from `(slot, codeword)` pairs.
    fn decode(&self, cluster: usize, received: Vec<(usize, Vec<f64>)>) -> PyResult<Vec<f64>> {
        let code =
            self.inner.codes.get(cluster).ok_or_else(|| GradcodeError::new_err(format!("no cluster {cluster}")))?;
        code.decode(&received).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }
}

/// Straggler trace of one run: `(straggling, rates)`, each with `T + 1` rows.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn generate_trace(config: &PyConfig, run: usize) -> PyResult<(Vec<Vec<bool>>, Vec<Vec<f64>>)> {
    let c = &config.inner;
    let trace = straggler::generate_trace(&c.straggler, c.workers, c.iterations, c.seed, run).map_err(err)?;
    Ok(trace.into_iter().map(|s| (s.straggling, s.rates)).unzip())
}

#[pyfunction]
fn gc_completion(times: Vec<f64>, load: usize) -> PyResult<f64> {
    latency::gc_completion(&times, load).map_err(err)
}

#[pyfunction]
fn clustered_completion(times: Vec<f64>, clusters: Vec<Vec<usize>>, load: usize) -> PyResult<f64> {
    latency::clustered_completion(&times, &clusters, load).map_err(err)
}

#[pyfunction]
fn lower_bound_completion(times: Vec<f64>, clusters: usize, cluster_size: usize, load: usize) -> PyResult<f64> {
    latency::lower_bound_completion(&times, clusters, cluster_size, load).map_err(err)
}

#[pyfunction]
fn feasibility_check(workers: usize, clusters: usize, replication: usize) -> bool {
    gradcode::feasibility_check(workers, clusters, replication)
}

#[pymodule]
fn gradcode_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GradcodeError", m.py().get_type::<GradcodeError>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyExperimentResult>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyAssignmentMatrix>()?;
    m.add_class::<PyCodebook>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(generate_trace, m)?)?;
    m.add_function(wrap_pyfunction!(gc_completion, m)?)?;
    m.add_function(wrap_pyfunction!(clustered_completion, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound_completion, m)?)?;
    m.add_function(wrap_pyfunction!(feasibility_check, m)?)?;
    Ok(())
}
