//! Python bindings: adaptive runs, enrichment decisions and the chaos and
//! coefficient helpers. Multi-indices cross the boundary as dense degree lists.

use ::mlsgfem::adapt::{self, AdaptiveConfig, StepRecord, Version};
use ::mlsgfem::chaos::{self, IndexSet, MultiIndex};
use ::mlsgfem::coeffs::{self, ProblemId};
use ::mlsgfem::estimator::{self, ComponentEstimate};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: ::mlsgfem::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn problem_id(name: &str) -> PyResult<ProblemId> {
    name.parse().map_err(py_err)
}

fn dense(mu: &MultiIndex) -> Vec<u32> {
    mu.dense(mu.max_position() as usize)
}

fn index_set(items: Vec<Vec<u32>>) -> PyResult<IndexSet> {
    IndexSet::new(items.iter().map(|d| MultiIndex::from_dense(d)).collect()).map_err(py_err)
}

/// One adaptive step.
#[pyclass(frozen, get_all, skip_from_py_object, module = "mlsgfem")]
#[derive(Clone)]
pub struct Step {
    k: usize,
    n_dof: usize,
    eta: f64,
    energy: f64,
    card_jp: usize,
    active_params: u32,
    pcg_iters: usize,
    distinct_matrices: usize,
    /// `"spatial"`, `"parametric"` or `None` on the final step.
    refinement: Option<String>,
    marked: Vec<Vec<u32>>,
    levels: Vec<(Vec<u32>, u32)>,
}

impl From<&StepRecord> for Step {
    fn from(r: &StepRecord) -> Self {
        Self {
            k: r.k,
            n_dof: r.n_dof,
            eta: r.eta,
            energy: r.energy_sq.sqrt(),
            card_jp: r.card_jp,
            active_params: r.active_params,
            pcg_iters: r.pcg_iters,
            distinct_matrices: r.distinct_matrices,
            refinement: r.decision.as_ref().map(|d| d.refinement_type.as_str().to_string()),
            marked: r.decision.as_ref().map_or_else(Vec::new, |d| d.marked.iter().map(dense).collect()),
            levels: r.levels.iter().map(|(mu, l)| (dense(mu), *l)).collect(),
        }
    }
}

#[pymethods]
impl Step {
    fn __repr__(&self) -> String {
        format!("Step(k={}, n_dof={}, eta={:.4e}, energy={:.8})", self.k, self.n_dof, self.eta, self.energy)
    }
}

#[pyclass(frozen, get_all, module = "mlsgfem")]
pub struct AdaptiveRun {
    steps: Vec<Step>,
    termination: String,
    converged: bool,
}

#[pymethods]
impl AdaptiveRun {
    /// `sqrt(u . b)` on the final space.
    #[getter]
    fn energy(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.energy)
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.eta)
    }

    fn __len__(&self) -> usize {
        self.steps.len()
    }

    fn __repr__(&self) -> String {
        format!("AdaptiveRun({} steps, {}, energy={:.8})", self.steps.len(), self.termination, self.energy())
    }
}

/// Runs the adaptive solver on one of `tp1` to `tp4`. The GIL is released while it runs.
#[pyfunction]
#[pyo3(signature = (problem, tolerance = 2e-3, version = 1, delta_m = 5, max_steps = 200, max_dof = 2_000_000, timings = false))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    problem: &str,
    tolerance: f64,
    version: u32,
    delta_m: u32,
    max_steps: usize,
    max_dof: usize,
    timings: bool,
) -> PyResult<AdaptiveRun> {
    let id = problem_id(problem)?;
    let version = Version::try_from(version).map_err(py_err)?;
    let config = AdaptiveConfig { version, tolerance, delta_m, max_steps, max_dof, timings, ..Default::default() };
    let run = py
        .detach(|| coeffs::make_problem(id).and_then(|p| adapt::adaptive_solve(&config, &p)))
        .map_err(py_err)?;
    Ok(AdaptiveRun {
        steps: run.records.iter().map(Step::from).collect(),
        termination: run.termination.as_str().to_string(),
        converged: run.converged(),
    })
}

/// Spatial and parametric components as `(index, estimate, dof_count)`;
/// returns the refinement type and the marked indices.
#[pyfunction]
fn enrichment_indices(
    version: u32,
    spatial: Vec<(Vec<u32>, f64, usize)>,
    parametric: Vec<(Vec<u32>, f64, usize)>,
) -> PyResult<(String, Vec<Vec<u32>>)> {
    let version = Version::try_from(version).map_err(py_err)?;
    let convert = |v: Vec<(Vec<u32>, f64, usize)>| -> Vec<ComponentEstimate> {
        v.into_iter()
            .map(|(d, estimate, dof_count)| ComponentEstimate {
                index: MultiIndex::from_dense(&d),
                level: 0,
                estimate,
                dof_count,
            })
            .collect()
    };
    let d = adapt::enrichment_indices(version, &convert(spatial), &convert(parametric));
    Ok((d.refinement_type.as_str().to_string(), d.marked.iter().map(dense).collect()))
}

#[pyfunction]
fn recurrence_coeff(n: u32) -> f64 {
    chaos::recurrence_coeff(n)
}

/// Dense `G_m` between two lists of distinct multi-indices.
#[pyfunction]
fn coupling_matrix(m: u32, rows: Vec<Vec<u32>>, cols: Vec<Vec<u32>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(chaos::build_coupling(m, &index_set(rows)?, &index_set(cols)?).to_dense())
}

/// Neighbours of `indices` over the first `active + delta_m` parameters.
#[pyfunction]
fn neighbor_set(indices: Vec<Vec<u32>>, delta_m: u32) -> PyResult<Vec<Vec<u32>>> {
    Ok(chaos::neighbor_set(&index_set(indices)?, delta_m).iter().map(dense).collect())
}

/// Leading eigenvalues of the exponential covariance on `[-a, a]`.
#[pyfunction]
fn kl_eigenvalues(correlation_length: f64, half_width: f64, count: usize) -> PyResult<Vec<f64>> {
    let pairs = coeffs::kl_eigenpairs_1d(correlation_length, half_width, count).map_err(py_err)?;
    Ok(pairs.iter().map(|p| p.eigenvalue).collect())
}

/// `(a_min, a_max, lambda, Lambda)` using the first `terms` expansion terms.
#[pyfunction]
fn coefficient_bounds(problem: &str, terms: usize) -> PyResult<(f64, f64, f64, f64)> {
    let p = coeffs::make_problem(problem_id(problem)?).map_err(py_err)?;
    let b = coeffs::coefficient_bounds(&p.coefficient, terms).map_err(py_err)?;
    Ok((b.a_min, b.a_max, b.lambda, b.big_lambda))
}

#[pyfunction]
fn effectivity(eta: f64, energy_sq: f64, reference_energy: f64) -> PyResult<f64> {
    estimator::effectivity(eta, energy_sq, reference_energy).map_err(py_err)
}

/// Slope of `log eta` against `log N` over the last `tail_fraction` of `(N, eta)` points.
#[pyfunction]
#[pyo3(signature = (points, tail_fraction = 0.6))]
fn fit_slope(points: Vec<(f64, f64)>, tail_fraction: f64) -> PyResult<f64> {
    ::mlsgfem::cli::fit_slope_points(&points, tail_fraction).map_err(py_err)
}

/// Runs the command line with `args` (without the program name); returns the exit code.
#[pyfunction]
fn main(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| ::mlsgfem::cli::main_with_args(std::iter::once("mlsgfem".to_string()).chain(args)))
}

#[pymodule(name = "mlsgfem")]
pub fn mlsgfem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Step>()?;
    m.add_class::<AdaptiveRun>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(enrichment_indices, m)?)?;
    m.add_function(wrap_pyfunction!(recurrence_coeff, m)?)?;
    m.add_function(wrap_pyfunction!(coupling_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(neighbor_set, m)?)?;
    m.add_function(wrap_pyfunction!(kl_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(coefficient_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(effectivity, m)?)?;
    m.add_function(wrap_pyfunction!(fit_slope, m)?)?;
    m.add_function(wrap_pyfunction!(main, m)?)?;
    Ok(())
}
