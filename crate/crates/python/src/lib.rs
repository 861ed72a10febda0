//! Python bindings for the `replica_lab` crate.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use replica_lab::experiments;
use replica_lab::model;
use replica_lab::replica::{self, MomentSpec};
use replica_lab::simulator::{self, SimConfig};

fn py_err(e: replica_lab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "ModelParams", frozen, from_py_object)]
#[derive(Clone, Copy)]
pub struct PyModelParams {
    inner: model::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (delta, gamma))]
    fn new(delta: f64, gamma: f64) -> PyResult<Self> {
        Ok(Self {
            inner: model::ModelParams::new(delta, gamma).map_err(py_err)?,
        })
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    fn tau_fast(&self) -> f64 {
        self.inner.tau_fast()
    }

    fn tau_slow(&self) -> f64 {
        self.inner.tau_slow()
    }

    fn stationary_time(&self) -> f64 {
        self.inner.stationary_time()
    }

    fn __repr__(&self) -> String {
        format!("ModelParams(delta={}, gamma={})", self.inner.delta, self.inner.gamma)
    }
}

#[pyclass(name = "SpinState", frozen, from_py_object)]
#[derive(Clone, Copy)]
pub struct PySpinState {
    inner: model::SpinState,
}

#[pymethods]
impl PySpinState {
    /// Amplitudes on the left and right wells; the norm must be 1.
    #[new]
    fn new(amp_left: Complex64, amp_right: Complex64) -> PyResult<Self> {
        Ok(Self {
            inner: model::SpinState::new(amp_left, amp_right).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn normalized(amp_left: Complex64, amp_right: Complex64) -> PyResult<Self> {
        Ok(Self {
            inner: model::SpinState::normalized(amp_left, amp_right).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn left() -> Self {
        Self { inner: model::SpinState::left() }
    }

    #[staticmethod]
    fn right() -> Self {
        Self { inner: model::SpinState::right() }
    }

    #[staticmethod]
    fn symmetric() -> Self {
        Self { inner: model::SpinState::symmetric() }
    }

    #[staticmethod]
    fn antisymmetric() -> Self {
        Self { inner: model::SpinState::antisymmetric() }
    }

    #[getter]
    fn amp_left(&self) -> Complex64 {
        self.inner.amp_left
    }

    #[getter]
    fn amp_right(&self) -> Complex64 {
        self.inner.amp_right
    }

    fn p_left(&self) -> f64 {
        self.inner.p_left()
    }

    fn p_right(&self) -> f64 {
        self.inner.p_right()
    }

    /// |a b′ − a′ b|
    fn wedge(&self, other: &PySpinState) -> f64 {
        self.inner.wedge(&other.inner)
    }

    fn __repr__(&self) -> String {
        format!("SpinState({}, {})", self.inner.amp_left, self.inner.amp_right)
    }
}

#[pyfunction]
fn closed_form_p_ll(params: &PyModelParams, t: f64) -> PyResult<f64> {
    model::closed_form_p_ll(&params.inner, t).map_err(py_err)
}

#[pyfunction]
fn closed_form_offdiag(params: &PyModelParams, t: f64) -> PyResult<Complex64> {
    model::closed_form_offdiag(&params.inner, t).map_err(py_err)
}

#[pyfunction]
fn laplace_p_ll(params: &PyModelParams, lam: f64) -> PyResult<f64> {
    model::laplace_p_ll(&params.inner, lam).map_err(py_err)
}

#[pyfunction]
fn laplace_p_ll_sq(params: &PyModelParams, lam: f64) -> PyResult<f64> {
    model::laplace_p_ll_sq(&params.inner, lam).map_err(py_err)
}

/// n!m!/(n+m+1)! as an exact (numerator, denominator) pair.
#[pyfunction]
fn beta_cross_moment(n: u32, m: u32) -> PyResult<(u128, u128)> {
    let r = model::beta_cross_moment(n, m).map_err(py_err)?;
    Ok((r.num, r.den))
}

fn moment_spec(state: Option<&PySpinState>, n_left: usize, n_right: usize) -> PyResult<MomentSpec> {
    let initial = state.map_or(model::SpinState::left(), |s| s.inner);
    MomentSpec::new(initial, n_left, n_right).map_err(py_err)
}

/// ⟨P_{S→L}ⁿ P_{S→R}ᵐ⟩ at time t.
#[pyfunction]
#[pyo3(signature = (params, n_left, n_right, t, state=None))]
fn finite_time_moment(
    py: Python<'_>,
    params: &PyModelParams,
    n_left: usize,
    n_right: usize,
    t: f64,
    state: Option<&PySpinState>,
) -> PyResult<f64> {
    let spec = moment_spec(state, n_left, n_right)?;
    let p = params.inner;
    py.detach(|| replica::finite_time_moment(&spec, &p, t)).map_err(py_err)
}

/// t → ∞ limit of ⟨P_{S→L}ⁿ P_{S→R}ᵐ⟩.
#[pyfunction]
#[pyo3(signature = (params, n_left, n_right, state=None))]
fn infinite_time_moment(
    py: Python<'_>,
    params: &PyModelParams,
    n_left: usize,
    n_right: usize,
    state: Option<&PySpinState>,
) -> PyResult<f64> {
    let spec = moment_spec(state, n_left, n_right)?;
    let p = params.inner;
    py.detach(|| replica::infinite_time_moment(&spec, &p)).map_err(py_err)
}

fn sim_config(params: &PyModelParams, dt: f64, t_final: f64, seed: u64, n_trajectories: usize) -> PyResult<SimConfig> {
    SimConfig::new(params.inner, dt, t_final, seed, n_trajectories).map_err(py_err)
}

/// Final P_left of every trajectory.
#[pyfunction]
#[pyo3(signature = (params, dt, t_final, seed, n_trajectories, state=None))]
fn run_ensemble(
    py: Python<'_>,
    params: &PyModelParams,
    dt: f64,
    t_final: f64,
    seed: u64,
    n_trajectories: usize,
    state: Option<&PySpinState>,
) -> PyResult<Vec<f64>> {
    let cfg = sim_config(params, dt, t_final, seed, n_trajectories)?;
    let initial = state.map_or(model::SpinState::left(), |s| s.inner);
    let r = py
        .detach(|| simulator::run_ensemble(&cfg, &initial, None))
        .map_err(py_err)?;
    Ok(r.final_p_left)
}

#[pyfunction]
#[pyo3(signature = (params, dt, t_final, seed, n_trajectories, state_a, state_b))]
#[allow(clippy::too_many_arguments)]
fn sensitivity<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    dt: f64,
    t_final: f64,
    seed: u64,
    n_trajectories: usize,
    state_a: &PySpinState,
    state_b: &PySpinState,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = sim_config(params, dt, t_final, seed, n_trajectories)?;
    let (a, b) = (state_a.inner, state_b.inner);
    let r = py
        .detach(|| experiments::sensitivity(&cfg, &a, &b))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("mean_sq_diff", r.mean_sq_diff)?;
    d.set_item("standard_error", r.standard_error)?;
    d.set_item("reference", r.reference)?;
    d.set_item("z_score", r.z_score)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (params, dt, t_final, seed, n_trajectories, delta_phi, t0, state=None))]
#[allow(clippy::too_many_arguments)]
fn pulse_response<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    dt: f64,
    t_final: f64,
    seed: u64,
    n_trajectories: usize,
    delta_phi: f64,
    t0: f64,
    state: Option<&PySpinState>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = sim_config(params, dt, t_final, seed, n_trajectories)?;
    let initial = state.map_or(model::SpinState::left(), |s| s.inner);
    let pulse = simulator::PulseSpec { delta_phi, t0 };
    let r = py
        .detach(|| experiments::pulse_response(&cfg, &initial, &pulse))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("mean_sq_diff", r.mean_sq_diff)?;
    d.set_item("standard_error", r.standard_error)?;
    d.set_item("correlator", r.correlator)?;
    d.set_item("predicted", r.predicted)?;
    d.set_item("z_score", r.z_score)?;
    Ok(d)
}

#[pymodule]
fn replica_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PySpinState>()?;
    m.add_function(wrap_pyfunction!(closed_form_p_ll, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_offdiag, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_p_ll, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_p_ll_sq, m)?)?;
    m.add_function(wrap_pyfunction!(beta_cross_moment, m)?)?;
    m.add_function(wrap_pyfunction!(finite_time_moment, m)?)?;
    m.add_function(wrap_pyfunction!(infinite_time_moment, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(pulse_response, m)?)?;
    m.add("N_MAX", replica::N_MAX)?;
    Ok(())
}
