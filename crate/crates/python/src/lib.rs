//! Python bindings: grids, coherent states, the Floquet operator, echo
//! series and ensembles, closed-form predictions and the Lyapunov estimator.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dispecho::analysis::{fit_decay_values, FitWindow};
use dispecho::echo::{EnsembleConfig, SigmaPolicy};
use dispecho::floquet::Direction;

fn py_err(e: dispecho::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn direction(adjoint: bool) -> Direction {
    if adjoint {
        Direction::Adjoint
    } else {
        Direction::Forward
    }
}

/// Torus of `N` sites with ħ = 2π/N.
#[pyclass(name = "TorusGrid", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyTorusGrid(dispecho::TorusGrid);

#[pymethods]
impl PyTorusGrid {
    #[new]
    fn new(n: usize) -> PyResult<Self> {
        dispecho::TorusGrid::new(n).map(Self).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn h_eff(&self) -> f64 {
        self.0.h_eff()
    }

    #[getter]
    fn default_sigma(&self) -> f64 {
        self.0.default_sigma()
    }

    /// Displacement in radians per site for `N·P/2π = m`.
    fn displacement_for(&self, m: f64) -> f64 {
        self.0.displacement_for(m)
    }

    fn positions(&self) -> Vec<f64> {
        self.0.positions()
    }

    fn __repr__(&self) -> String {
        format!("TorusGrid({})", self.0.dim())
    }
}

/// Position-basis state on a torus grid.
#[pyclass(name = "QuantumState", skip_from_py_object)]
#[derive(Clone)]
struct PyQuantumState(dispecho::QuantumState);

#[pymethods]
impl PyQuantumState {
    #[staticmethod]
    fn from_amplitudes(grid: &PyTorusGrid, amplitudes: Vec<Complex64>) -> PyResult<Self> {
        dispecho::QuantumState::from_amplitudes(grid.0, amplitudes)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn grid(&self) -> PyTorusGrid {
        PyTorusGrid(self.0.grid())
    }

    fn amplitudes(&self) -> Vec<Complex64> {
        self.0.amplitudes().to_vec()
    }

    fn norm(&self) -> f64 {
        self.0.norm()
    }

    fn inner(&self, other: &PyQuantumState) -> PyResult<Complex64> {
        dispecho::state::inner_product(&self.0, &other.0).map_err(py_err)
    }

    /// Multiplies site `l` by `exp(i·P·l)`.
    fn displaced(&self, displacement: f64) -> Self {
        Self(dispecho::state::displace(&self.0, displacement))
    }
}

/// Periodised Gaussian packet at `(x0, p0)`; `sigma` defaults to √ħ.
#[pyfunction]
#[pyo3(signature = (grid, x0, p0, sigma=None))]
fn coherent_state(
    grid: &PyTorusGrid,
    x0: f64,
    p0: f64,
    sigma: Option<f64>,
) -> PyResult<PyQuantumState> {
    let sigma = sigma.unwrap_or_else(|| grid.0.default_sigma());
    let params = dispecho::CoherentParams::new(x0, p0, sigma).map_err(py_err)?;
    Ok(PyQuantumState(dispecho::state::coherent_state(
        grid.0, &params,
    )))
}

/// Kicked-rotator Floquet operator for one grid and kick strength.
#[pyclass(name = "FloquetOperator", frozen)]
struct PyFloquetOperator(std::sync::Arc<dispecho::FloquetOperator>);

#[pymethods]
impl PyFloquetOperator {
    #[new]
    fn new(grid: &PyTorusGrid, k: f64) -> PyResult<Self> {
        let params = dispecho::KickedRotatorParams::new(grid.0, k).map_err(py_err)?;
        Ok(Self(dispecho::FloquetOperator::cached(params)))
    }

    #[getter]
    fn k(&self) -> f64 {
        self.0.params().k()
    }

    #[pyo3(signature = (state, adjoint=false))]
    fn step(&self, state: &PyQuantumState, adjoint: bool) -> PyResult<PyQuantumState> {
        self.0
            .step(&state.0, direction(adjoint))
            .map(PyQuantumState)
            .map_err(py_err)
    }

    #[pyo3(signature = (state, n, adjoint=false))]
    fn evolve(
        &self,
        py: Python<'_>,
        state: &PyQuantumState,
        n: usize,
        adjoint: bool,
    ) -> PyResult<PyQuantumState> {
        let psi = state.0.clone();
        py.detach(|| self.0.evolve(&psi, n, direction(adjoint)))
            .map(PyQuantumState)
            .map_err(py_err)
    }
}

/// Kernel `I(n)` and echo `M_D(n)` for `n = 0..=n_max`.
#[pyfunction]
fn echo_series(
    py: Python<'_>,
    state: &PyQuantumState,
    k: f64,
    displacement: f64,
    n_max: usize,
) -> PyResult<(Vec<Complex64>, Vec<f64>)> {
    let psi = state.0.clone();
    let out = py
        .detach(|| {
            let params = dispecho::KickedRotatorParams::new(psi.grid(), k)?;
            dispecho::echo_series(&psi, &params, displacement, n_max)
        })
        .map_err(py_err)?;
    Ok((out.kernel, out.echo))
}

/// Seeded ensemble average; returns one dict per displacement.
#[pyfunction]
#[pyo3(signature = (n, k, displacements, n_max, members, seed=0, sigma=None))]
#[allow(clippy::too_many_arguments)]
fn ensemble_echo<'py>(
    py: Python<'py>,
    n: usize,
    k: f64,
    displacements: Vec<f64>,
    n_max: usize,
    members: usize,
    seed: u64,
    sigma: Option<f64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let config = EnsembleConfig {
        dim: n,
        k,
        displacements,
        n_max,
        ensemble_size: members,
        sigma: sigma.map_or(SigmaPolicy::Default, SigmaPolicy::Explicit),
        seed,
    };
    let series = py
        .detach(|| dispecho::ensemble_echo(&config))
        .map_err(py_err)?;
    series
        .into_iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("displacement", s.displacement)?;
            d.set_item("np_over_2pi", s.np_over_2pi())?;
            d.set_item("mean_md", s.mean_md)?;
            d.set_item("stderr_md", s.stderr_md)?;
            d.set_item("mean_kernel", s.mean_kernel)?;
            d.set_item("mean_abs_kernel", s.mean_abs_kernel)?;
            Ok(d)
        })
        .collect()
}

// K does not enter the freeze, saturation or correlation terms
fn theory_params(
    n: usize,
    displacement: f64,
    sigma: Option<f64>,
    alpha: f64,
    d: u32,
) -> PyResult<dispecho::TheoryParams> {
    let grid = dispecho::TorusGrid::new(n).map_err(py_err)?;
    let sigma = sigma.unwrap_or_else(|| grid.default_sigma());
    Ok(
        dispecho::TheoryParams::for_grid(grid, sigma, displacement, 0.0)
            .with_alpha(alpha)
            .with_dimension(d),
    )
}

#[pyfunction]
fn lyapunov_rate(k: f64) -> PyResult<f64> {
    dispecho::lyapunov_rate(k).map_err(py_err)
}

#[pyfunction]
fn g_function(d: u32, z: f64) -> PyResult<f64> {
    dispecho::g_function(d, z).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (n, displacement, sigma=None, d=1))]
fn freeze_term(n: usize, displacement: f64, sigma: Option<f64>, d: u32) -> PyResult<f64> {
    dispecho::freeze_term(&theory_params(n, displacement, sigma, 1.0, d)?).map_err(py_err)
}

/// Closed-form echo at time `t`, clamped to `[1/N, 1]`.
#[pyfunction]
#[pyo3(signature = (n, displacement, rate, t, sigma=None, alpha=1.0, d=1))]
fn predicted_echo(
    n: usize,
    displacement: f64,
    rate: f64,
    t: f64,
    sigma: Option<f64>,
    alpha: f64,
    d: u32,
) -> PyResult<f64> {
    let params = theory_params(n, displacement, sigma, alpha, d)?;
    dispecho::predicted_echo(&params, rate, t).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (n, displacement, sigma=None, d=1))]
fn saturation_prediction(n: usize, displacement: f64, sigma: Option<f64>, d: u32) -> PyResult<f64> {
    dispecho::saturation_prediction(&theory_params(n, displacement, sigma, 1.0, d)?).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (n, displacement, sigma=None, d=1))]
fn y_correlation_prediction(
    n: usize,
    displacement: f64,
    sigma: Option<f64>,
    d: u32,
) -> PyResult<f64> {
    dispecho::y_correlation_prediction(&theory_params(n, displacement, sigma, 1.0, d)?)
        .map_err(py_err)
}

/// Benettin estimate; returns `(value, stderr)`.
#[pyfunction]
#[pyo3(signature = (k, steps, transient=1000, seed=0))]
fn benettin_lyapunov(
    py: Python<'_>,
    k: f64,
    steps: usize,
    transient: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let est = py
        .detach(|| dispecho::benettin_lyapunov(k, steps, transient, seed))
        .map_err(py_err)?;
    Ok((est.value, est.stderr))
}

/// Least-squares decay rate of `values` over `[start, end]`; returns
/// `(rate, intercept, residual)`.
#[pyfunction]
fn fit_decay(values: Vec<f64>, start: usize, end: usize) -> PyResult<(f64, f64, f64)> {
    let fit = fit_decay_values(&values, None, FitWindow::new(start, end), None).map_err(py_err)?;
    Ok((fit.rate, fit.intercept, fit.residual))
}

#[pymodule]
fn dispecho_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTorusGrid>()?;
    m.add_class::<PyQuantumState>()?;
    m.add_class::<PyFloquetOperator>()?;
    m.add_function(wrap_pyfunction!(coherent_state, m)?)?;
    m.add_function(wrap_pyfunction!(echo_series, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble_echo, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov_rate, m)?)?;
    m.add_function(wrap_pyfunction!(g_function, m)?)?;
    m.add_function(wrap_pyfunction!(freeze_term, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_echo, m)?)?;
    m.add_function(wrap_pyfunction!(saturation_prediction, m)?)?;
    m.add_function(wrap_pyfunction!(y_correlation_prediction, m)?)?;
    m.add_function(wrap_pyfunction!(benettin_lyapunov, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decay, m)?)?;
    Ok(())
}
