//! Python module `yo`.
//!
//! Dense entry points take the pairing as a list of rows plus the boundary
//! indices and weights; `Ball` wraps an assembled flat-ball system. Structured
//! results come back as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use yo_core::algebra::{BoundaryStructure, EnergyForm, PositiveField};
use yo_core::bubbles::{bubble_field, sharp_constant as core_sharp_constant, verify_bubble, BubbleParams};
use yo_core::fem::{assemble, build_ball_mesh, curvature_residual, MetricData, SimplicialMesh};
use yo_core::functionals::{self, MinimizeOptions};
use yo_core::io::{mesh_from_str, mesh_to_string};
use yo_core::obstacle::{self, make_bound, ObstacleOptions};
use yo_core::runner::{self, Command, InitKind, PSpec, RunConfig};
use yo_core::YoError;

fn to_py(err: YoError) -> PyErr {
    match err {
        YoError::Io(e) => PyIOError::new_err(e.to_string()),
        YoError::Solver { .. } => PyRuntimeError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Serializes through JSON so Python receives plain dicts and lists.
fn to_object<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn system(n: u32, matrix: Vec<Vec<f64>>, boundary: Vec<usize>, weights: Vec<f64>) -> PyResult<(EnergyForm, BoundaryStructure)> {
    let size = matrix.len();
    let form = EnergyForm::from_dense(n, &matrix).map_err(to_py)?;
    let bs = BoundaryStructure::new(n, size, boundary, weights).map_err(to_py)?;
    Ok((form, bs))
}

fn resolve_p(n: u32, p: Option<f64>) -> PyResult<f64> {
    p.map_or(PSpec::Critical, PSpec::Value).resolve(n).map_err(to_py)
}

/// Sharp trace constant `2(n-1) |S^{n-1}|^{1/(n-1)}` of the flat unit ball.
#[pyfunction]
fn sharp_constant(n: u32) -> PyResult<f64> {
    core_sharp_constant(n).map_err(to_py)
}

/// `T(u)` for a dense pairing; returns the obstacle solution as a dict.
#[pyfunction]
#[pyo3(signature = (matrix, boundary, weights, u, n=3, tol=1e-10))]
fn obstacle_map<'py>(
    py: Python<'py>,
    matrix: Vec<Vec<f64>>,
    boundary: Vec<usize>,
    weights: Vec<f64>,
    u: Vec<f64>,
    n: u32,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let (form, bs) = system(n, matrix, boundary, weights)?;
    let sol = obstacle::obstacle_map(&form, &bs, &u, &ObstacleOptions::with_tol(tol)).map_err(to_py)?;
    to_object(py, &sol)
}

/// Exhaustive active-set enumeration of `T(u)`; small instances only.
#[pyfunction]
#[pyo3(signature = (matrix, boundary, weights, u, n=3))]
fn oracle_enumerate<'py>(
    py: Python<'py>,
    matrix: Vec<Vec<f64>>,
    boundary: Vec<usize>,
    weights: Vec<f64>,
    u: Vec<f64>,
    n: u32,
) -> PyResult<Bound<'py, PyAny>> {
    let (form, bs) = system(n, matrix, boundary, weights)?;
    let bound = make_bound(&bs, &u).map_err(to_py)?;
    to_object(py, &obstacle::oracle_enumerate(&form, &bound).map_err(to_py)?)
}

/// `E_p(u)`; `p=None` means the critical exponent.
#[pyfunction]
#[pyo3(signature = (matrix, boundary, weights, u, p=None, n=3))]
fn energy_quotient(
    matrix: Vec<Vec<f64>>,
    boundary: Vec<usize>,
    weights: Vec<f64>,
    u: Vec<f64>,
    p: Option<f64>,
    n: u32,
) -> PyResult<f64> {
    let (form, bs) = system(n, matrix, boundary, weights)?;
    functionals::energy_quotient(&form, &bs, &u, resolve_p(n, p)?, None).map_err(to_py)
}

/// `I_p(u)`; `p=None` means the critical exponent.
#[pyfunction]
#[pyo3(signature = (matrix, boundary, weights, u, p=None, n=3, tol=1e-10))]
fn control_quotient(
    matrix: Vec<Vec<f64>>,
    boundary: Vec<usize>,
    weights: Vec<f64>,
    u: Vec<f64>,
    p: Option<f64>,
    n: u32,
    tol: f64,
) -> PyResult<f64> {
    let (form, bs) = system(n, matrix, boundary, weights)?;
    functionals::control_quotient(&form, &bs, &u, resolve_p(n, p)?, &ObstacleOptions::with_tol(tol), None).map_err(to_py)
}

/// Largest relative deviation between the analytic gradient of `E_p` and central differences.
#[pyfunction]
#[pyo3(signature = (matrix, boundary, weights, u, p=None, n=3, h=1e-6))]
fn grad_check(
    matrix: Vec<Vec<f64>>,
    boundary: Vec<usize>,
    weights: Vec<f64>,
    u: Vec<f64>,
    p: Option<f64>,
    n: u32,
    h: f64,
) -> PyResult<f64> {
    let (form, bs) = system(n, matrix, boundary, weights)?;
    functionals::grad_check(&form, &bs, &u, resolve_p(n, p)?, h).map_err(to_py)
}

/// Flat unit ball at a refinement level, assembled with `R = 0`, `H = 1`.
#[pyclass(frozen)]
struct Ball {
    mesh: SimplicialMesh,
    form: EnergyForm,
    bs: BoundaryStructure,
    level: Option<u32>,
}

impl Ball {
    fn from_mesh(mesh: SimplicialMesh, level: Option<u32>) -> PyResult<Self> {
        let (form, bs) = assemble(&mesh, &MetricData::flat_ball(&mesh), 3).map_err(to_py)?;
        Ok(Ball { mesh, form, bs, level })
    }
}

#[pymethods]
impl Ball {
    #[new]
    #[pyo3(signature = (level=3))]
    fn new(level: u32) -> PyResult<Self> {
        Ball::from_mesh(build_ball_mesh(level).map_err(to_py)?, Some(level))
    }

    /// Builds the system from mesh JSON text.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ball::from_mesh(mesh_from_str(text).map_err(to_py)?, None)
    }

    /// Canonical mesh JSON.
    fn to_json(&self) -> String {
        mesh_to_string(&self.mesh)
    }

    #[getter]
    fn level(&self) -> Option<u32> {
        self.level
    }

    #[getter]
    fn dofs(&self) -> usize {
        self.form.size()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.mesh.h()
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.mesh.vertices().to_vec()
    }

    #[getter]
    fn cells(&self) -> Vec<[usize; 4]> {
        self.mesh.cells().to_vec()
    }

    #[getter]
    fn boundary_indices(&self) -> Vec<usize> {
        self.bs.indices().to_vec()
    }

    #[getter]
    fn boundary_weights(&self) -> Vec<f64> {
        self.bs.weights().to_vec()
    }

    fn pair(&self, u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        self.form.pair(&u, &v).map_err(to_py)
    }

    #[pyo3(signature = (u, p=None))]
    fn energy_quotient(&self, u: Vec<f64>, p: Option<f64>) -> PyResult<f64> {
        functionals::energy_quotient(&self.form, &self.bs, &u, resolve_p(3, p)?, None).map_err(to_py)
    }

    #[pyo3(signature = (u, p=None, tol=1e-10))]
    fn control_quotient(&self, u: Vec<f64>, p: Option<f64>, tol: f64) -> PyResult<f64> {
        functionals::control_quotient(&self.form, &self.bs, &u, resolve_p(3, p)?, &ObstacleOptions::with_tol(tol), None)
            .map_err(to_py)
    }

    /// `T(u)` as a dict with `state`, `active_set`, `multipliers`, `energy`, ...
    #[pyo3(signature = (u, tol=1e-10))]
    fn obstacle<'py>(&self, py: Python<'py>, u: Vec<f64>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        let sol = obstacle::obstacle_map(&self.form, &self.bs, &u, &ObstacleOptions::with_tol(tol)).map_err(to_py)?;
        to_object(py, &sol)
    }

    /// `||T u - u||_A / ||u||_A`.
    #[pyo3(signature = (u, tol=1e-10))]
    fn fixed_point_distance(&self, u: Vec<f64>, tol: f64) -> PyResult<f64> {
        obstacle::fixed_point_distance(&self.form, &self.bs, &u, tol, &ObstacleOptions::with_tol(tol))
            .map(|c| c.distance)
            .map_err(to_py)
    }

    /// Runs the minimizing sequence; `init=None` starts from `u = 1`.
    /// Returns `{"report": ..., "trace": ...}`.
    #[pyo3(signature = (init=None, p=None, max_iters=5000, tol=1e-10))]
    fn minimize<'py>(
        &self,
        py: Python<'py>,
        init: Option<Vec<f64>>,
        p: Option<f64>,
        max_iters: usize,
        tol: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let init = init.unwrap_or_else(|| vec![1.0; self.form.size()]);
        let opts = MinimizeOptions {
            max_iters,
            obstacle: ObstacleOptions::with_tol(tol),
            ..Default::default()
        };
        let (trace, mut report) =
            functionals::minimize(&self.form, &self.bs, resolve_p(3, p)?, &init, &opts).map_err(to_py)?;
        report.refinement = self.level;
        to_object(py, &serde_json::json!({ "report": report, "trace": trace }))
    }

    /// Nodal values of the bubble with pole `a` and the given scale.
    #[pyo3(signature = (a, scale=1.0))]
    fn bubble(&self, a: [f64; 3], scale: f64) -> PyResult<Vec<f64>> {
        let params = BubbleParams::new(a, scale).map_err(to_py)?;
        Ok(bubble_field(&self.mesh, &params).map_err(to_py)?.into_vec())
    }

    #[pyo3(signature = (a, scale=1.0, tol=1e-10))]
    fn verify_bubble<'py>(&self, py: Python<'py>, a: [f64; 3], scale: f64, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        let params = BubbleParams::new(a, scale).map_err(to_py)?;
        to_object(py, &verify_bubble(&self.mesh, &self.form, &self.bs, &params, tol).map_err(to_py)?)
    }

    /// `(r_interior, r_boundary, c_est)` for a positive field.
    fn curvature_residual(&self, u: Vec<f64>) -> PyResult<(f64, f64, f64)> {
        let r = curvature_residual(&self.mesh, &self.form, &self.bs, &u).map_err(to_py)?;
        Ok((r.r_interior, r.r_boundary, r.c_est))
    }

    /// `E_p` of `u` measured in the conformal metric `g_w`; equals `E_p(w u)` at the critical exponent.
    fn conformal_energy(&self, u: Vec<f64>, w: Vec<f64>) -> PyResult<f64> {
        let w = PositiveField::new(w).map_err(to_py)?;
        let form = self.form.pullback(&w).map_err(to_py)?;
        let bs = self.bs.conformal(&w).map_err(to_py)?;
        functionals::energy_quotient(&form, &bs, &u, resolve_p(3, None)?, None).map_err(to_py)
    }
}

fn command(name: &str) -> PyResult<Command> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown command `{name}`")))
}

/// Runs a CLI command in-process. Returns `(exit_code, result_dict_or_None, message_or_None)`.
#[pyfunction]
#[pyo3(signature = (command_name, out_dir, refinement=3, p=None, tol=1e-10, seed=0, mesh_path=None, dim=40, seeds=1000, init="constant", levels=None))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    command_name: &str,
    out_dir: PathBuf,
    refinement: u32,
    p: Option<f64>,
    tol: f64,
    seed: u64,
    mesh_path: Option<PathBuf>,
    dim: usize,
    seeds: u64,
    init: &str,
    levels: Option<Vec<u32>>,
) -> PyResult<(i32, Option<Bound<'py, PyAny>>, Option<String>)> {
    let mut cfg = RunConfig::new(command(command_name)?, out_dir);
    cfg.refinement = refinement;
    cfg.p = p.map_or(PSpec::Critical, PSpec::Value);
    cfg.tol = tol;
    cfg.seed = seed;
    cfg.mesh_path = mesh_path;
    cfg.dim = dim;
    cfg.seeds = seeds;
    cfg.init = match init {
        "constant" => InitKind::Constant,
        "random" => InitKind::Random,
        other => return Err(PyValueError::new_err(format!("init must be `constant` or `random`, got `{other}`"))),
    };
    if let Some(l) = levels {
        cfg.levels = l;
    }
    let outcome = py.detach(|| runner::run(&cfg));
    let record = outcome.record.as_ref().map(|r| to_object(py, r)).transpose()?;
    Ok((outcome.exit_code, record, outcome.message))
}

#[pymodule]
fn yo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Ball>()?;
    m.add_function(wrap_pyfunction!(sharp_constant, m)?)?;
    m.add_function(wrap_pyfunction!(obstacle_map, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_enumerate, m)?)?;
    m.add_function(wrap_pyfunction!(energy_quotient, m)?)?;
    m.add_function(wrap_pyfunction!(control_quotient, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
