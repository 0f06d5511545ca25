//! Python bindings: grids and fields, the three steppers, the diagnostics
//! and the experiment drivers.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use chemoflow::cell::{step_n, CellStepParams};
use chemoflow::config::SimConfig;
use chemoflow::diagnostics as diag;
use chemoflow::error::RunError;
use chemoflow::experiments::{self, RunOutput};
use chemoflow::fields::{self, Grid};
use chemoflow::fluid;
use chemoflow::manufactured::MmsMode;
use chemoflow::signal::step_c;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn run_err(e: RunError) -> PyErr {
    match e {
        RunError::Config(c) => PyValueError::new_err(c.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

#[pyclass(name = "Grid", module = "chemoflow_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: Grid,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (dims, extents=None))]
    fn new(dims: Vec<usize>, extents: Option<Vec<f64>>) -> PyResult<Self> {
        let ext = extents.unwrap_or_else(|| vec![1.0; dims.len()]);
        Ok(PyGrid {
            inner: Grid::new(&dims, &ext).map_err(value_err)?,
        })
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims().to_vec()
    }

    #[getter]
    fn extents(&self) -> Vec<f64> {
        self.inner.extents().to_vec()
    }

    #[getter]
    fn spacing(&self) -> Vec<f64> {
        self.inner.spacing().to_vec()
    }

    #[getter]
    fn num_cells(&self) -> usize {
        self.inner.num_cells()
    }

    fn __repr__(&self) -> String {
        format!("Grid(dims={:?}, extents={:?})", self.inner.dims(), self.inner.extents())
    }
}

/// Cell-centred scalar with one ghost layer; values are exchanged in flat
/// cell order (last axis fastest).
#[pyclass(name = "ScalarField", module = "chemoflow_py", skip_from_py_object)]
#[derive(Clone)]
struct PyScalar {
    inner: fields::ScalarField,
}

#[pymethods]
impl PyScalar {
    #[staticmethod]
    fn constant(grid: &PyGrid, value: f64) -> Self {
        PyScalar {
            inner: fields::ScalarField::constant(&grid.inner, value),
        }
    }

    #[staticmethod]
    fn from_values(grid: &PyGrid, values: Vec<f64>) -> PyResult<Self> {
        if values.len() != grid.inner.num_cells() {
            return Err(PyValueError::new_err(format!(
                "expected {} values, got {}",
                grid.inner.num_cells(),
                values.len()
            )));
        }
        Ok(PyScalar {
            inner: fields::ScalarField::from_interior(&grid.inner, &values),
        })
    }

    fn values(&self) -> Vec<f64> {
        self.inner.interior_vec()
    }

    fn integral(&self) -> f64 {
        fields::integrate(&self.inner)
    }

    fn min(&self) -> f64 {
        self.inner.min()
    }

    fn max(&self) -> f64 {
        self.inner.max()
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid { inner: *self.inner.grid() }
    }
}

/// Staggered velocity; components are interior face values per axis.
#[pyclass(name = "VectorField", module = "chemoflow_py", skip_from_py_object)]
#[derive(Clone)]
struct PyVector {
    inner: fields::VectorField,
}

#[pymethods]
impl PyVector {
    #[staticmethod]
    fn zeros(grid: &PyGrid) -> Self {
        PyVector {
            inner: fields::VectorField::zeros(&grid.inner),
        }
    }

    #[staticmethod]
    fn from_components(grid: &PyGrid, components: Vec<Vec<f64>>) -> PyResult<Self> {
        let g = grid.inner;
        if components.len() != g.ndim() {
            return Err(PyValueError::new_err(format!("expected {} components", g.ndim())));
        }
        let probe = fields::VectorField::zeros(&g);
        for (a, comp) in components.iter().enumerate() {
            let want = probe.interior_vec(a).len();
            if comp.len() != want {
                return Err(PyValueError::new_err(format!("component {a}: expected {want} values")));
            }
        }
        Ok(PyVector {
            inner: fields::VectorField::from_interior(&g, &components),
        })
    }

    fn components(&self) -> Vec<Vec<f64>> {
        (0..self.inner.ndim()).map(|a| self.inner.interior_vec(a)).collect()
    }

    fn max_abs(&self) -> f64 {
        self.inner.max_abs()
    }

    fn max_divergence(&self) -> f64 {
        fluid::max_divergence(&self.inner)
    }

    fn kinetic(&self) -> f64 {
        fields::kinetic(&self.inner)
    }

    /// Discrete Leray projection to tolerance `tol`.
    #[pyo3(signature = (tol=1e-10))]
    fn project(&self, tol: f64) -> PyResult<PyVector> {
        let (u, _) = fluid::project(&self.inner, tol, &mut Vec::new()).map_err(value_err)?;
        Ok(PyVector { inner: u })
    }
}

/// One cell-density step with `c` and `u` frozen.
#[pyfunction]
#[pyo3(name = "step_n")]
fn py_step_n(n: &PyScalar, c: &PyScalar, u: &PyVector, m: f64, epsilon: f64, dt: f64) -> PyResult<PyScalar> {
    let params = CellStepParams::new(m, epsilon, dt).map_err(value_err)?;
    let out = step_n(&n.inner, &c.inner, &u.inner, &params).map_err(value_err)?;
    Ok(PyScalar { inner: out })
}

/// One implicit signal step.
#[pyfunction]
#[pyo3(name = "step_c")]
fn py_step_c(c: &PyScalar, n: &PyScalar, u: &PyVector, dt: f64) -> PyResult<PyScalar> {
    let out = step_c(&c.inner, &n.inner, &u.inner, dt, None).map_err(value_err)?;
    Ok(PyScalar { inner: out })
}

#[pyfunction]
fn functional_y(n: &PyScalar, c: &PyScalar, epsilon: f64, m: f64) -> PyResult<f64> {
    diag::functional_y(&n.inner, &c.inner, epsilon, m).map_err(value_err)
}

#[pyfunction]
fn dissipation_g(n: &PyScalar, c: &PyScalar, epsilon: f64, m: f64) -> PyResult<f64> {
    diag::dissipation_g(&n.inner, &c.inner, epsilon, m).map_err(value_err)
}

#[pyfunction]
fn st_bound_exponent(m: f64, p: f64) -> PyResult<f64> {
    diag::st_bound_exponent(m, p).map_err(value_err)
}

#[pyfunction]
fn gn_interp_exponent(m: f64, p: f64) -> PyResult<f64> {
    diag::gn_interp_exponent(m, p).map_err(value_err)
}

#[pyfunction]
fn ode_comparison_bound(y0: f64, a: f64, b: f64) -> PyResult<f64> {
    if !(a > 0.0 && b >= 0.0) {
        return Err(PyValueError::new_err("need a > 0 and b >= 0"));
    }
    Ok(diag::ode_comparison_bound(y0, a, b))
}

#[pyfunction]
fn verify_ode_comparison(samples: Vec<f64>, a: f64, b: f64) -> PyResult<bool> {
    if !(a > 0.0 && b >= 0.0) {
        return Err(PyValueError::new_err("need a > 0 and b >= 0"));
    }
    Ok(diag::verify_ode_comparison(&samples, a, b))
}

/// Run configuration; round-trips through TOML.
#[pyclass(name = "Config", module = "chemoflow_py", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SimConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn reference() -> Self {
        PyConfig {
            inner: SimConfig::reference(),
        }
    }

    #[staticmethod]
    fn steady(value: f64) -> Self {
        PyConfig {
            inner: SimConfig::steady(value),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: SimConfig::parse(text).map_err(value_err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.emit()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(value_err)
    }

    #[getter]
    fn m(&self) -> f64 {
        self.inner.model.m
    }

    #[setter]
    fn set_m(&mut self, v: f64) {
        self.inner.model.m = v;
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.model.epsilon
    }

    #[setter]
    fn set_epsilon(&mut self, v: f64) {
        self.inner.model.epsilon = v;
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.grid.dims.clone()
    }

    #[setter]
    fn set_dims(&mut self, v: Vec<usize>) {
        self.inner.grid.extents = vec![1.0; v.len()];
        self.inner.grid.dims = v;
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.time.dt
    }

    #[setter]
    fn set_dt(&mut self, v: f64) {
        self.inner.time.dt = v;
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.inner.time.t_end
    }

    #[setter]
    fn set_t_end(&mut self, v: f64) {
        self.inner.time.t_end = v;
    }

    #[getter]
    fn snapshot_interval(&self) -> f64 {
        self.inner.time.snapshot_interval
    }

    #[setter]
    fn set_snapshot_interval(&mut self, v: f64) {
        self.inner.time.snapshot_interval = v;
    }

    #[getter]
    fn test_functions(&self) -> usize {
        self.inner.certify.test_functions
    }

    #[setter]
    fn set_test_functions(&mut self, v: usize) {
        self.inner.certify.test_functions = v;
    }
}

/// A finished gated run.
#[pyclass(name = "Run", module = "chemoflow_py", frozen)]
struct PyRun {
    out: RunOutput,
    config: SimConfig,
}

#[pymethods]
impl PyRun {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.out.trajectory.times()
    }

    fn snapshot(&self, k: usize) -> PyResult<(PyScalar, PyScalar, PyVector)> {
        let s = self
            .out
            .trajectory
            .snapshots
            .get(k)
            .ok_or_else(|| PyValueError::new_err(format!("no snapshot {k}")))?;
        Ok((
            PyScalar { inner: s.n.clone() },
            PyScalar { inner: s.c.clone() },
            PyVector { inner: s.u.clone() },
        ))
    }

    fn stats(&self) -> Vec<(String, f64)> {
        let s = &self.out.stats;
        vec![
            ("steps".into(), s.steps as f64),
            ("max_mass_drift".into(), s.max_mass_drift),
            ("max_l1c_ratio".into(), s.max_l1c_ratio),
            ("min_n".into(), s.min_n),
            ("min_c".into(), s.min_c),
            ("max_divergence".into(), s.max_divergence),
            ("max_energy_residual".into(), s.max_energy_residual),
            ("max_y_excess".into(), s.max_y_excess),
            ("min_dissipation".into(), s.min_dissipation),
        ]
    }

    fn ledger_csv(&self) -> String {
        self.out.ledger.samples_csv()
    }

    /// Certificate text for the regime of the run's exponent.
    fn certify(&self) -> PyResult<(bool, String)> {
        let cert = experiments::certify_trajectory(&self.out.trajectory, &self.config).map_err(run_err)?;
        Ok((cert.passed(), cert.to_text()))
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        self.out.trajectory.save(std::path::Path::new(dir)).map_err(value_err)
    }
}

#[pyfunction]
fn run(py: Python<'_>, config: &PyConfig) -> PyResult<PyRun> {
    let cfg = config.inner.clone();
    let out = py.detach(|| experiments::run_single(&cfg)).map_err(run_err)?;
    Ok(PyRun { out, config: cfg })
}

fn parse_mode(s: &str) -> PyResult<MmsMode> {
    match s {
        "coupled" => Ok(MmsMode::Coupled),
        "cell" => Ok(MmsMode::Cell),
        "signal" => Ok(MmsMode::Signal),
        "fluid" => Ok(MmsMode::Fluid),
        "steady" => Ok(MmsMode::Steady),
        _ => Err(PyValueError::new_err(format!("unknown mms mode {s}"))),
    }
}

/// Manufactured-solution refinement study; returns `(passed, csv)`.
#[pyfunction]
#[pyo3(signature = (config, modes, levels=None))]
fn run_mms(py: Python<'_>, config: &PyConfig, modes: Vec<String>, levels: Option<usize>) -> PyResult<(bool, String)> {
    let modes: Vec<MmsMode> = modes.iter().map(|s| parse_mode(s)).collect::<PyResult<_>>()?;
    let cfg = config.inner.clone();
    let levels = levels.unwrap_or(cfg.mms.levels);
    let rep = py.detach(|| experiments::run_mms(&cfg, &modes, levels)).map_err(run_err)?;
    Ok((rep.passed(), rep.to_text()))
}

#[pyfunction]
fn run_epsilon_sweep(py: Python<'_>, config: &PyConfig, epsilons: Vec<f64>) -> PyResult<(bool, String)> {
    let cfg = config.inner.clone();
    let rep = py.detach(|| experiments::run_epsilon_sweep(&cfg, &epsilons)).map_err(run_err)?;
    Ok((rep.passed, rep.to_text()))
}

#[pyfunction]
fn run_regime_compare(py: Python<'_>, config: &PyConfig) -> PyResult<(bool, String)> {
    let cfg = config.inner.clone();
    let rep = py.detach(|| experiments::run_regime_compare(&cfg)).map_err(run_err)?;
    Ok((rep.passed(), rep.to_text()))
}

#[pymodule]
fn chemoflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyScalar>()?;
    m.add_class::<PyVector>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(py_step_n, m)?)?;
    m.add_function(wrap_pyfunction!(py_step_c, m)?)?;
    m.add_function(wrap_pyfunction!(functional_y, m)?)?;
    m.add_function(wrap_pyfunction!(dissipation_g, m)?)?;
    m.add_function(wrap_pyfunction!(st_bound_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(gn_interp_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(ode_comparison_bound, m)?)?;
    m.add_function(wrap_pyfunction!(verify_ode_comparison, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_mms, m)?)?;
    m.add_function(wrap_pyfunction!(run_epsilon_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_regime_compare, m)?)?;
    Ok(())
}
