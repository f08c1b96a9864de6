//! Python bindings. Arms are 0-based, as in the Rust library.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use cof_core::bounds;
use cof_core::cof::{self, CofConfig};
use cof_core::instance::{self as inst, BanditInstance, InstanceAnalysis};
use cof_core::metrics::log_checkpoint_grid;
use cof_core::policy::{Algorithm, Policy as _};
use cof_core::runner::{self, RunSpec};
use cof_core::sampler;

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Instance", module = "cofbandit", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: BanditInstance,
}

#[pymethods]
impl PyInstance {
    /// Arms must already be in ascending cost order.
    #[new]
    fn new(means: Vec<f64>, costs: Vec<f64>, alpha: f64) -> PyResult<Self> {
        BanditInstance::new(means, costs, alpha)
            .map(|inner| Self { inner })
            .map_err(value_error)
    }

    /// Parses the instance file format. Returns `(instance, resorted)`.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<(Self, bool)> {
        let p = inst::parse_instance(text).map_err(value_error)?;
        Ok((Self { inner: p.instance }, p.resorted))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| value_error(format!("{path}: {e}")))?;
        Ok(Self::parse(&text)?.0)
    }

    #[getter]
    fn means(&self) -> Vec<f64> {
        self.inner.means().to_vec()
    }

    #[getter]
    fn costs(&self) -> Vec<f64> {
        self.inner.costs().to_vec()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn num_arms(&self) -> usize {
        self.inner.num_arms()
    }

    fn with_alpha(&self, alpha: f64) -> PyResult<Self> {
        self.inner
            .with_alpha(alpha)
            .map(|inner| Self { inner })
            .map_err(value_error)
    }

    fn to_file_string(&self) -> String {
        self.inner.to_file_string()
    }

    fn analyze(&self) -> PyAnalysis {
        PyAnalysis {
            inner: inst::analyze(&self.inner),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(K={}, alpha={})",
            self.inner.num_arms(),
            self.inner.alpha()
        )
    }
}

#[pyclass(name = "Analysis", module = "cofbandit", frozen)]
struct PyAnalysis {
    inner: InstanceAnalysis,
}

#[pymethods]
impl PyAnalysis {
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn mu_star(&self) -> f64 {
        self.inner.mu_star
    }
    #[getter]
    fn i_star(&self) -> usize {
        self.inner.i_star
    }
    #[getter]
    fn mu_cs(&self) -> f64 {
        self.inner.mu_cs
    }
    #[getter]
    fn a_star(&self) -> usize {
        self.inner.a_star
    }
    #[getter]
    fn a_dagger(&self) -> Option<usize> {
        self.inner.a_dagger
    }
    #[getter]
    fn mu_dagger(&self) -> Option<f64> {
        self.inner.mu_dagger
    }
    #[getter]
    fn feasible_set(&self) -> Vec<usize> {
        self.inner.feasible_set.clone()
    }
    #[getter]
    fn cheap_arms(&self) -> Vec<usize> {
        self.inner.cheap_arms.clone()
    }
    #[getter]
    fn expensive_arms(&self) -> Vec<usize> {
        self.inner.expensive_arms.clone()
    }
    #[getter]
    fn dagger_set(&self) -> Vec<usize> {
        self.inner.dagger_set.clone()
    }
    #[getter]
    fn quality_gaps(&self) -> Vec<f64> {
        self.inner.quality_gaps.clone()
    }
    #[getter]
    fn cost_gaps(&self) -> Vec<f64> {
        self.inner.cost_gaps.clone()
    }
    #[getter]
    fn reward_gaps(&self) -> Vec<f64> {
        self.inner.reward_gaps.clone()
    }

    fn lb_cheap(&self, k: usize) -> PyResult<f64> {
        bounds::lb_cheap(&self.inner, k).map_err(value_error)
    }

    fn lb_expensive(&self, k: usize) -> PyResult<f64> {
        bounds::lb_expensive(&self.inner, k).map_err(value_error)
    }

    /// `(tau, a_used)`
    fn tau_search(&self, ell: usize, delta: f64) -> PyResult<(f64, usize)> {
        let t = bounds::tau_search(&self.inner, ell, delta).map_err(value_error)?;
        Ok((t.tau, t.a_used))
    }

    fn exact_tau(&self, ell: usize, delta: f64) -> PyResult<u64> {
        bounds::exact_tau(&self.inner, ell, delta).map_err(value_error)
    }

    /// `(gamma_dagger, gamma_astar)`
    fn gamma(&self, k: usize, horizon: u64, delta: f64) -> PyResult<(Option<f64>, f64)> {
        let g = bounds::gamma(&self.inner, k, horizon, delta).map_err(value_error)?;
        Ok((g.gamma_dagger, g.gamma_astar))
    }

    /// `(cost_ub, quality_ub)`
    fn regret_upper_bounds(&self, horizon: u64, delta: f64) -> PyResult<(f64, f64)> {
        let u = bounds::regret_upper_bounds(&self.inner, horizon, delta).map_err(value_error)?;
        Ok((u.cost, u.quality))
    }

    /// The bound table in the CLI's CSV layout.
    fn bound_report_csv(&self, horizon: u64, delta: f64) -> PyResult<String> {
        Ok(bounds::bound_report(&self.inner, horizon, delta)
            .map_err(value_error)?
            .to_csv())
    }
}

/// COF as a stepping policy: call `next_arm`, draw the reward, `observe`.
#[pyclass(name = "CofPolicy", module = "cofbandit")]
struct PyCofPolicy {
    inner: cof::CofPolicy,
}

#[pymethods]
impl PyCofPolicy {
    #[new]
    #[pyo3(signature = (num_arms, alpha, delta, combine_samples = true, exclusive_sampling = true))]
    fn new(
        num_arms: usize,
        alpha: f64,
        delta: f64,
        combine_samples: bool,
        exclusive_sampling: bool,
    ) -> PyResult<Self> {
        let config = CofConfig {
            delta,
            combine_samples,
            exclusive_sampling,
        };
        cof::CofPolicy::new(num_arms, alpha, config)
            .map(|inner| Self { inner })
            .map_err(value_error)
    }

    fn next_arm(&mut self, t: u64) -> usize {
        self.inner.next_arm(t)
    }

    fn observe(&mut self, arm: usize, reward: bool) -> PyResult<()> {
        if arm >= self.inner.arm_states().len() {
            return Err(value_error(format!("arm {arm} out of range")));
        }
        self.inner.observe(arm, reward);
        Ok(())
    }

    #[getter]
    fn candidate(&self) -> usize {
        self.inner.candidate()
    }

    #[getter]
    fn committed(&self) -> Option<usize> {
        self.inner.committed()
    }

    /// `[(time, arm, kind)]`
    #[getter]
    fn events(&self) -> Vec<(u64, usize, String)> {
        self.inner
            .events()
            .iter()
            .map(|e| (e.time, e.arm, e.kind.to_string()))
            .collect()
    }

    /// `[(n, mu_hat, ucb, lcb)]` per arm.
    #[getter]
    fn arm_states(&self) -> Vec<(u64, f64, f64, f64)> {
        self.inner
            .arm_states()
            .iter()
            .map(|s| (s.n, s.mu_hat, s.ucb, s.lcb))
            .collect()
    }
}

/// Result of one simulated run.
#[pyclass(name = "Run", module = "cofbandit", frozen)]
struct PyRun {
    #[pyo3(get)]
    run_id: String,
    #[pyo3(get)]
    seed: u64,
    /// `[(t, cost_regret, quality_regret)]`
    #[pyo3(get)]
    checkpoints: Vec<(u64, f64, f64)>,
    #[pyo3(get)]
    final_counts: Vec<u64>,
    /// `[(time, arm, kind)]`, empty for baselines.
    #[pyo3(get)]
    events: Vec<(u64, usize, String)>,
    #[pyo3(get)]
    decomposition_mismatches: u64,
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (instance, algorithm, horizon, seed, delta = None, checkpoints = 50, etc_budget_fraction = 0.2))]
fn simulate(
    py: Python<'_>,
    instance: &PyInstance,
    algorithm: &str,
    horizon: u64,
    seed: u64,
    delta: Option<f64>,
    checkpoints: usize,
    etc_budget_fraction: f64,
) -> PyResult<PyRun> {
    let algorithm: Algorithm = algorithm.parse().map_err(value_error)?;
    let inst = instance.inner.clone();
    let trace = py
        .detach(move || {
            let grid = log_checkpoint_grid(horizon, checkpoints);
            run_single_owned(
                &inst,
                algorithm,
                horizon,
                seed,
                delta,
                &grid,
                etc_budget_fraction,
            )
        })
        .map_err(value_error)?;
    Ok(PyRun {
        run_id: trace.run_id,
        seed: trace.seed,
        checkpoints: trace
            .checkpoints
            .iter()
            .map(|c| (c.t, c.cost_regret, c.quality_regret))
            .collect(),
        final_counts: trace.final_counts,
        events: trace
            .events
            .iter()
            .map(|e| (e.time, e.arm, e.kind.to_string()))
            .collect(),
        decomposition_mismatches: trace.decomposition_mismatches,
    })
}

fn run_single_owned(
    inst: &BanditInstance,
    algorithm: Algorithm,
    horizon: u64,
    seed: u64,
    delta: Option<f64>,
    grid: &[u64],
    etc_budget_fraction: f64,
) -> Result<runner::RunTrace, runner::RunnerError> {
    if horizon < inst.num_arms() as u64 {
        return Err(runner::RunnerError::Config(format!(
            "horizon {horizon} below the number of arms {}",
            inst.num_arms()
        )));
    }
    runner::run_single(&RunSpec {
        instance: inst,
        algorithm,
        horizon,
        seed,
        delta: runner::run_delta(inst.num_arms(), horizon, delta),
        grid,
        etc_budget_fraction,
        run_index: 0,
    })
}

/// Runs a JSON sweep config and writes its output files. Returns the
/// number of runs.
#[pyfunction]
fn run_sweep(py: Python<'_>, config_path: &str) -> PyResult<usize> {
    let path = std::path::PathBuf::from(config_path);
    py.detach(move || {
        let config = runner::ExperimentConfig::load(&path)?;
        runner::run_sweep(&config).map(|s| s.traces.len())
    })
    .map_err(value_error)
}

#[pyfunction]
fn beta(n: u64, delta: f64) -> PyResult<f64> {
    sampler::beta(n, delta).map_err(value_error)
}

#[pyfunction]
fn epsilon(n_k: u64, mu_hat_k: f64, ucb_ell: f64, alpha: f64) -> f64 {
    cof::epsilon(n_k, mu_hat_k, ucb_ell, alpha)
}

#[pyfunction]
fn derive_seed(master_seed: u64, algorithm: &str, alpha: f64, run_index: u64) -> PyResult<u64> {
    let algorithm: Algorithm = algorithm.parse().map_err(value_error)?;
    Ok(runner::derive_seed(
        master_seed,
        algorithm,
        alpha,
        run_index,
    ))
}

#[pyfunction]
fn algorithms() -> Vec<&'static str> {
    Algorithm::ALL.iter().map(|a| a.name()).collect()
}

#[pymodule]
fn cofbandit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyAnalysis>()?;
    m.add_class::<PyCofPolicy>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(algorithms, m)?)?;
    Ok(())
}
