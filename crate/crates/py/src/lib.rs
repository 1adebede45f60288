//! Python bindings: operating point, polytope, LMI synthesis/analysis, the
//! spectral oracle and the fluid simulator.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tcpaqm::model::{self, Gain};
use tcpaqm::nalgebra::DMatrix;
use tcpaqm::sdp::SolverOptions;
use tcpaqm::sim::{self, Controller, InitialHistory, Scenario};
use tcpaqm::stability::{self, OracleOptions};
use tcpaqm::synthesis::{self, DelaySearch, RelaxationOptions, SlackMode};

create_exception!(tcpaqm_py, NoCertificateError, PyException);
create_exception!(tcpaqm_py, ModelError, PyException);
create_exception!(tcpaqm_py, OracleInconclusiveError, PyException);

fn to_py(e: tcpaqm::Error) -> PyErr {
    use tcpaqm::Error as E;
    match e {
        E::NoCertificate { .. } | E::NoStartingPoint | E::IllConditioned(_) => NoCertificateError::new_err(e.to_string()),
        E::OracleInconclusive(_) => OracleInconclusiveError::new_err(e.to_string()),
        E::InvalidParams(_) | E::InvalidBracket(_) => PyValueError::new_err(e.to_string()),
        _ => ModelError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("expected a non-empty rectangular list of rows"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[pyclass(name = "NetworkParams", from_py_object)]
#[derive(Clone)]
pub struct PyNetworkParams {
    inner: model::NetworkParams,
}

#[pymethods]
impl PyNetworkParams {
    #[new]
    #[pyo3(signature = (n_sessions=60.0, capacity=3750.0, prop_delay=0.2, q_ref=175.0, buffer=800.0))]
    fn new(n_sessions: f64, capacity: f64, prop_delay: f64, q_ref: f64, buffer: f64) -> PyResult<Self> {
        let inner = model::NetworkParams { n_sessions, capacity, prop_delay, q_ref, buffer };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_sessions(&self) -> f64 {
        self.inner.n_sessions
    }
    #[getter]
    fn capacity(&self) -> f64 {
        self.inner.capacity
    }
    #[getter]
    fn prop_delay(&self) -> f64 {
        self.inner.prop_delay
    }
    #[getter]
    fn q_ref(&self) -> f64 {
        self.inner.q_ref
    }
    #[getter]
    fn buffer(&self) -> f64 {
        self.inner.buffer
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "NetworkParams(n_sessions={}, capacity={}, prop_delay={}, q_ref={}, buffer={})",
            p.n_sessions, p.capacity, p.prop_delay, p.q_ref, p.buffer
        )
    }
}

#[pyclass(name = "Equilibrium", from_py_object)]
#[derive(Clone)]
pub struct PyEquilibrium {
    inner: model::Equilibrium,
}

#[pymethods]
impl PyEquilibrium {
    #[getter]
    fn w0(&self) -> f64 {
        self.inner.w0
    }
    #[getter]
    fn p0(&self) -> f64 {
        self.inner.p0
    }
    #[getter]
    fn r0(&self) -> f64 {
        self.inner.r0
    }

    fn __repr__(&self) -> String {
        format!("Equilibrium(w0={}, p0={}, r0={})", self.inner.w0, self.inner.p0, self.inner.r0)
    }
}

#[pyclass(name = "LinearModel", from_py_object)]
#[derive(Clone)]
pub struct PyLinearModel {
    inner: model::LinearModel,
}

#[pymethods]
impl PyLinearModel {
    #[new]
    fn new(a: Vec<Vec<f64>>, a_d: Vec<Vec<f64>>, b: Vec<Vec<f64>>, h: f64) -> PyResult<Self> {
        let inner = model::LinearModel::new(matrix(&a)?, matrix(&a_d)?, matrix(&b)?, h).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.a)
    }
    #[getter]
    fn a_d(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.a_d)
    }
    #[getter]
    fn b(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.b)
    }
    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    /// `A_d + B·K` for the gain `k`.
    fn closed_loop_delayed(&self, k: Vec<f64>) -> Vec<Vec<f64>> {
        rows(&self.inner.closed_loop_delayed(&Gain::new(k)))
    }
}

#[pyclass(name = "Polytope", from_py_object)]
#[derive(Clone)]
pub struct PyPolytope {
    inner: model::Polytope,
}

#[pymethods]
impl PyPolytope {
    #[getter]
    fn vertices(&self) -> Vec<PyLinearModel> {
        self.inner.vertices.iter().map(|v| PyLinearModel { inner: v.clone() }).collect()
    }
    #[getter]
    fn r0_min(&self) -> f64 {
        self.inner.r0_min
    }
    #[getter]
    fn r0_max(&self) -> f64 {
        self.inner.r0_max
    }

    fn model_at(&self, r0: f64) -> PyLinearModel {
        PyLinearModel { inner: self.inner.model_at(r0) }
    }
}

fn models(ms: &[PyLinearModel]) -> Vec<model::LinearModel> {
    ms.iter().map(|m| m.inner.clone()).collect()
}

fn slack_mode(per_vertex: bool) -> SlackMode {
    if per_vertex {
        SlackMode::PerVertex
    } else {
        SlackMode::Shared
    }
}

#[pyfunction]
fn equilibrium(params: &PyNetworkParams) -> PyResult<PyEquilibrium> {
    Ok(PyEquilibrium { inner: model::equilibrium(&params.inner).map_err(to_py)? })
}

#[pyfunction]
fn linearize(params: &PyNetworkParams, eq: &PyEquilibrium) -> PyLinearModel {
    PyLinearModel { inner: model::linearize(&params.inner, &eq.inner) }
}

#[pyfunction]
fn build_polytope(params: &PyNetworkParams, r0_min: f64, r0_max: f64) -> PyResult<PyPolytope> {
    Ok(PyPolytope { inner: model::build_polytope(&params.inner, r0_min, r0_max).map_err(to_py)? })
}

#[pyfunction]
fn iod_analytic_gain(params: &PyNetworkParams, eq: &PyEquilibrium) -> Vec<f64> {
    synthesis::iod_analytic_gain(&params.inner, &eq.inner).k
}

/// Common-functional delay-independent test; returns the margin.
#[pyfunction]
fn iod_analysis(models_: Vec<PyLinearModel>, k: Vec<f64>) -> PyResult<f64> {
    let cert = synthesis::iod_analysis(&models(&models_), &Gain::new(k), &SolverOptions::default()).map_err(to_py)?;
    Ok(cert.margin)
}

/// Nominal delay-independent synthesis; returns the gain.
#[pyfunction]
fn iod_synthesize(model_: &PyLinearModel) -> PyResult<Vec<f64>> {
    let syn = synthesis::iod_synthesize(&model_.inner, &SolverOptions::default()).map_err(to_py)?;
    Ok(syn.gain.k)
}

/// Robust delay-independent synthesis; returns `(gain, vertex_margins)`.
#[pyfunction]
fn iod_synthesize_robust(poly: &PyPolytope) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let (gain, cert) = synthesis::iod_synthesize_robust(&poly.inner, &SolverOptions::default()).map_err(to_py)?;
    Ok((gain.k, cert.vertices.iter().map(|c| c.margin).collect()))
}

/// Delay-dependent analysis at delay `h`; returns the margin.
#[pyfunction]
#[pyo3(signature = (models_, k, r, h, per_vertex_slack=false))]
fn dd_analysis(models_: Vec<PyLinearModel>, k: Vec<f64>, r: usize, h: f64, per_vertex_slack: bool) -> PyResult<f64> {
    let cert = synthesis::dd_analysis_step(&models(&models_), &Gain::new(k), r, h, slack_mode(per_vertex_slack), &SolverOptions::default())
        .map_err(to_py)?;
    Ok(cert.margin)
}

/// Largest certified delay in `[1e-3, 5]` s, or `None`.
#[pyfunction]
#[pyo3(signature = (models_, k, r, per_vertex_slack=false))]
fn dd_max_delay(models_: Vec<PyLinearModel>, k: Vec<f64>, r: usize, per_vertex_slack: bool) -> PyResult<Option<f64>> {
    let c = synthesis::dd_max_delay(
        &models(&models_),
        &Gain::new(k),
        r,
        slack_mode(per_vertex_slack),
        &DelaySearch::default(),
        &SolverOptions::default(),
    )
    .map_err(to_py)?;
    Ok(c.map(|c| c.h))
}

/// Alternating delay-dependent design on a polytope.
#[pyfunction]
fn dd_relaxation<'py>(py: Python<'py>, params: &PyNetworkParams, poly: &PyPolytope, r: usize) -> PyResult<Bound<'py, PyDict>> {
    let rep = synthesis::dd_relaxation_polytope(&params.inner, &poly.inner, r, &RelaxationOptions::default()).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("gain", rep.gain.k.clone())?;
    d.set_item("h_m", rep.h_m)?;
    d.set_item("h_sequence", rep.h_sequence())?;
    d.set_item("converged", rep.converged)?;
    Ok(d)
}

/// Rightmost real part of the characteristic roots of `ẋ = A x + Ãd x(t−h)`.
#[pyfunction]
fn spectral_abscissa(a: Vec<Vec<f64>>, a_d: Vec<Vec<f64>>, h: f64) -> PyResult<f64> {
    let rep = stability::converged_spectrum(&matrix(&a)?, &matrix(&a_d)?, h, &OracleOptions::default()).map_err(to_py)?;
    Ok(rep.abscissa)
}

#[pyfunction]
fn critical_delay(a: Vec<Vec<f64>>, a_d: Vec<Vec<f64>>, lo: f64, hi: f64) -> PyResult<f64> {
    stability::critical_delay(&matrix(&a)?, &matrix(&a_d)?, lo, hi, &OracleOptions::default()).map_err(to_py)
}

/// Nonlinear fluid simulation. `controller` is `"pi"` or a two-entry gain;
/// `scenario` one of `nominal`, `fig1`, `fig2`, `fig3`.
#[pyfunction]
#[pyo3(signature = (params, controller, scenario="fig1", dt=1e-3, horizon=None, cross_rate=None))]
fn simulate<'py>(
    py: Python<'py>,
    params: &PyNetworkParams,
    controller: &Bound<'py, PyAny>,
    scenario: &str,
    dt: f64,
    horizon: Option<f64>,
    cross_rate: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params.inner;
    let eq = model::equilibrium(&p).map_err(to_py)?;
    let ctrl = if let Ok(name) = controller.extract::<String>() {
        if name != "pi" {
            return Err(PyValueError::new_err(format!("unknown controller {name:?}")));
        }
        Controller::reference_pi(&p)
    } else {
        let k: Vec<f64> = controller.extract()?;
        Controller::state_feedback(Gain::new(k), &p, &eq)
    };
    let (mut sc, hist) = match scenario {
        "nominal" => (Scenario::nominal(60.0), InitialHistory::at_equilibrium(&p, &eq)),
        "fig1" => (Scenario::fig1(), InitialHistory::EMPTY),
        "fig2" => (Scenario::fig2(), InitialHistory::EMPTY),
        "fig3" => {
            let rate = match cross_rate {
                Some(r) => r,
                None => sim::largest_safe_cross_rate(&p, &ctrl, 40.0, 45.0, 100.0, dt, &InitialHistory::EMPTY).map_err(to_py)?,
            };
            (Scenario::fig3(rate), InitialHistory::EMPTY)
        }
        other => return Err(PyValueError::new_err(format!("unknown scenario {other:?}"))),
    };
    if let Some(h) = horizon {
        sc.horizon = h;
    }
    let tr = sim::simulate_nonlinear(&p, &ctrl, &sc, dt, &hist).map_err(to_py)?;
    let m = sim::compute_metrics(&tr, p.q_ref).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("t", tr.t.clone())?;
    d.set_item("w", tr.w.clone())?;
    d.set_item("q", tr.q.clone())?;
    d.set_item("p", tr.p.clone())?;
    d.set_item("r", tr.r.clone())?;
    d.set_item("overshoot", m.overshoot)?;
    d.set_item("settling", m.settling)?;
    d.set_item("steady_state_error", m.steady_state_error)?;
    d.set_item("recovery", m.recovery)?;
    Ok(d)
}

/// Adds every class, exception and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<PyNetworkParams>()?;
    m.add_class::<PyEquilibrium>()?;
    m.add_class::<PyLinearModel>()?;
    m.add_class::<PyPolytope>()?;
    m.add("NoCertificateError", py.get_type::<NoCertificateError>())?;
    m.add("ModelError", py.get_type::<ModelError>())?;
    m.add("OracleInconclusiveError", py.get_type::<OracleInconclusiveError>())?;
    m.add_function(wrap_pyfunction!(equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(linearize, m)?)?;
    m.add_function(wrap_pyfunction!(build_polytope, m)?)?;
    m.add_function(wrap_pyfunction!(iod_analytic_gain, m)?)?;
    m.add_function(wrap_pyfunction!(iod_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(iod_synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(iod_synthesize_robust, m)?)?;
    m.add_function(wrap_pyfunction!(dd_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(dd_max_delay, m)?)?;
    m.add_function(wrap_pyfunction!(dd_relaxation, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_abscissa, m)?)?;
    m.add_function(wrap_pyfunction!(critical_delay, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}

#[pymodule]
fn tcpaqm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
