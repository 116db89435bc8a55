//! Python bindings: model types, single trajectories, ensembles, analytic
//! phases and the validation suite.

use memphase::ensemble::{run_basis_ensemble, run_ensemble, sweep_theta, EnsembleConfig};
use memphase::noise::{derive_seed, sample_noise, GeneratorKind};
use memphase::oracle::analytic;
use memphase::phase::{
    ensemble_phases, pancharatnam_series, pancharatnam_states, solid_angle_geodesic_closed, EnsemblePhases, Estimate,
};
use memphase::qsd::{integrate_trajectory, OOperatorSpec};
use memphase::types::{self, C64};
use memphase::validate::{self, ValidationScale};
use memphase::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidGrid(_) | Error::InvalidParameter(_) | Error::ThetaOutOfRange(_) | Error::Configuration(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn coupling_kind(name: &str) -> PyResult<types::CouplingKind> {
    match name {
        "dissipative" => Ok(types::CouplingKind::Dissipative),
        "dephasing" => Ok(types::CouplingKind::Dephasing),
        _ => Err(PyValueError::new_err(format!(
            "coupling must be 'dissipative' or 'dephasing', got {name:?}"
        ))),
    }
}

fn generator_kind(name: &str) -> PyResult<GeneratorKind> {
    match name {
        "recursive" => Ok(GeneratorKind::Recursive),
        "covariance-factor" => Ok(GeneratorKind::CovarianceFactor),
        _ => Err(PyValueError::new_err(format!(
            "generator must be 'recursive' or 'covariance-factor', got {name:?}"
        ))),
    }
}

/// `H = ωσ_z/2` coupled through `λσ₋` ("dissipative") or `λσ_z`
/// ("dephasing"), prepared at Bloch polar angle `theta`.
#[pyclass(frozen, skip_from_py_object, name = "SystemModel", module = "memphase_py")]
#[derive(Clone, Copy)]
struct PySystemModel(types::SystemModel);

#[pymethods]
impl PySystemModel {
    #[new]
    #[pyo3(signature = (omega = 1.0, coupling_strength = 1.0, coupling = "dissipative", theta = std::f64::consts::FRAC_PI_2))]
    fn new(omega: f64, coupling_strength: f64, coupling: &str, theta: f64) -> PyResult<Self> {
        types::SystemModel::new(omega, coupling_strength, coupling_kind(coupling)?, theta)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.0.omega
    }

    #[getter]
    fn coupling_strength(&self) -> f64 {
        self.0.lambda
    }

    #[getter]
    fn coupling(&self) -> &'static str {
        match self.0.coupling {
            types::CouplingKind::Dissipative => "dissipative",
            types::CouplingKind::Dephasing => "dephasing",
        }
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta
    }

    fn with_theta(&self, theta: f64) -> PyResult<Self> {
        self.0.with_theta(theta).map(Self).map_err(to_py)
    }

    /// `2π/ω`.
    fn period(&self) -> f64 {
        self.0.period()
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemModel(omega={:?}, coupling_strength={:?}, coupling={:?}, theta={:?})",
            self.0.omega,
            self.0.lambda,
            self.coupling(),
            self.0.theta
        )
    }
}

/// Lorentzian bath with correlation `(Γγ/2)·exp(−γ|τ| − iΩτ)`.
#[pyclass(frozen, skip_from_py_object, name = "BathSpectrum", module = "memphase_py")]
#[derive(Clone, Copy)]
struct PyBathSpectrum(types::BathSpectrum);

#[pymethods]
impl PyBathSpectrum {
    #[new]
    #[pyo3(signature = (inverse_memory, center_frequency = 0.0, coupling_rate = 1.0))]
    fn new(inverse_memory: f64, center_frequency: f64, coupling_rate: f64) -> PyResult<Self> {
        types::BathSpectrum::new(coupling_rate, inverse_memory, center_frequency)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn inverse_memory(&self) -> f64 {
        self.0.inverse_memory
    }

    #[getter]
    fn center_frequency(&self) -> f64 {
        self.0.center_frequency
    }

    #[getter]
    fn coupling_rate(&self) -> f64 {
        self.0.coupling_rate
    }

    /// `α(t, s)`.
    fn correlation(&self, t: f64, s: f64) -> C64 {
        memphase::noise::correlation(&self.0, t, s)
    }

    fn __repr__(&self) -> String {
        format!(
            "BathSpectrum(inverse_memory={:?}, center_frequency={:?}, coupling_rate={:?})",
            self.0.inverse_memory, self.0.center_frequency, self.0.coupling_rate
        )
    }
}

/// Uniform grid `t_j = j·t_final/n_steps`, `j = 0..=n_steps`.
#[pyclass(frozen, skip_from_py_object, name = "TimeGrid", module = "memphase_py")]
#[derive(Clone, Copy)]
struct PyTimeGrid(types::TimeGrid);

#[pymethods]
impl PyTimeGrid {
    #[new]
    fn new(t_final: f64, n_steps: usize) -> PyResult<Self> {
        types::TimeGrid::new(t_final, n_steps).map(Self).map_err(to_py)
    }

    /// Grid with step as close to `dt` as divides `t_final`.
    #[staticmethod]
    fn with_step(t_final: f64, dt: f64) -> PyResult<Self> {
        types::TimeGrid::with_step(t_final, dt).map(Self).map_err(to_py)
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.0.t_final()
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.0.n_steps()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt()
    }

    fn times(&self) -> Vec<f64> {
        self.0.times().collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("TimeGrid(t_final={:?}, n_steps={})", self.0.t_final(), self.0.n_steps())
    }
}

type Amplitudes = (C64, C64);

fn pure(s: Amplitudes) -> types::PureState {
    types::PureState::new(s.0, s.1)
}

fn amplitudes(s: &types::PureState) -> Amplitudes {
    (s.up, s.down)
}

/// `(cos θ/2, sin θ/2)`.
#[pyfunction]
fn initial_state(theta: f64) -> PyResult<Amplitudes> {
    types::initial_state(theta).map(|s| amplitudes(&s)).map_err(to_py)
}

/// Bloch vector of a nonzero, possibly unnormalized state.
#[pyfunction]
fn bloch_vector(state: Amplitudes) -> PyResult<[f64; 3]> {
    types::bloch_vector(&pure(state)).map_err(to_py)
}

/// `(gamma_tot, gamma_dyn, gamma_geo)` of a discretized state path.
#[pyfunction]
fn pancharatnam_phase(states: Vec<Amplitudes>) -> PyResult<(f64, f64, f64)> {
    let states: Vec<_> = states.into_iter().map(pure).collect();
    let d = pancharatnam_states(&states).map_err(to_py)?;
    Ok((d.gamma_tot, d.gamma_dyn, d.gamma_geo))
}

/// Solid angle enclosed by a Bloch path closed with a geodesic.
#[pyfunction]
fn solid_angle(points: Vec<[f64; 3]>) -> PyResult<f64> {
    solid_angle_geodesic_closed(&types::BlochPath(points)).map_err(to_py)
}

/// Noise path `u_j` for trajectory `index` of `root_seed`.
#[pyfunction]
#[pyo3(signature = (bath, grid, root_seed = 1, index = 0, generator = "recursive"))]
fn noise_path(
    bath: &PyBathSpectrum,
    grid: &PyTimeGrid,
    root_seed: u64,
    index: u64,
    generator: &str,
) -> PyResult<Vec<C64>> {
    let kind = generator_kind(generator)?;
    sample_noise(&bath.0, &grid.0, derive_seed(root_seed, index), kind)
        .map(|n| n.values)
        .map_err(to_py)
}

/// One trajectory from `initial_state(model.theta)`.
///
/// Returns a dict with `times`, `states`, `bloch`, `geometric_series` and the
/// final `gamma_tot`, `gamma_dyn`, `gamma_geo`, `half_solid_angle`.
#[pyfunction]
#[pyo3(signature = (model, bath, grid, root_seed = 1, index = 0, generator = "recursive"))]
fn single_trajectory<'py>(
    py: Python<'py>,
    model: &PySystemModel,
    bath: &PyBathSpectrum,
    grid: &PyTimeGrid,
    root_seed: u64,
    index: u64,
    generator: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let kind = generator_kind(generator)?;
    let (m, b, g) = (model.0, bath.0, grid.0);
    let seed = derive_seed(root_seed, index);
    let computed = py.detach(move || -> memphase::Result<_> {
        let ospec = OOperatorSpec::for_model(&m, &b, &g)?;
        let noise = sample_noise(&b, &g, seed, kind)?;
        let traj = integrate_trajectory(&m, &b, &ospec, &noise)?;
        let d = pancharatnam_states(&traj.states)?;
        let series = pancharatnam_series(&traj.states)?;
        let path = traj.bloch_path()?;
        let half = solid_angle_geodesic_closed(&path).map(|w| 0.5 * w).ok();
        Ok((traj, d, series, path, half))
    });
    let (traj, d, series, path, half) = computed.map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("seed", seed)?;
    out.set_item("times", g.times().collect::<Vec<_>>())?;
    out.set_item("states", traj.states.iter().map(amplitudes).collect::<Vec<_>>())?;
    out.set_item("bloch", path.0)?;
    out.set_item("geometric_series", series)?;
    out.set_item("gamma_tot", d.gamma_tot)?;
    out.set_item("gamma_dyn", d.gamma_dyn)?;
    out.set_item("gamma_geo", d.gamma_geo)?;
    out.set_item("half_solid_angle", half)?;
    Ok(out)
}

fn estimate_dict<'py>(py: Python<'py>, e: &Estimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", e.value)?;
    d.set_item("std_error", e.std_error)?;
    d.set_item("n_traj", e.n_traj)?;
    d.set_item("indeterminate", e.indeterminate)?;
    Ok(d)
}

fn phases_dict<'py>(py: Python<'py>, p: &EnsemblePhases) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("total", estimate_dict(py, &p.total)?)?;
    d.set_item("dynamical", estimate_dict(py, &p.dynamical)?)?;
    d.set_item("geometric", estimate_dict(py, &p.geometric)?)?;
    d.set_item("dynamical_residue", p.dynamical_residue)?;
    d.set_item("overlap_magnitude", p.overlap_magnitude)?;
    Ok(d)
}

fn ensemble_config(
    model: &PySystemModel,
    bath: &PyBathSpectrum,
    grid: &PyTimeGrid,
    n_traj: usize,
    root_seed: u64,
    generator: &str,
) -> PyResult<EnsembleConfig> {
    let mut cfg = EnsembleConfig::new(model.0, bath.0, grid.0, n_traj, root_seed);
    cfg.generator = generator_kind(generator)?;
    Ok(cfg)
}

/// Ensemble total, dynamical and geometric phases at `grid.t_final` with
/// jackknife errors. Results do not depend on `workers`.
#[pyfunction]
#[pyo3(signature = (model, bath, grid, n_traj = 20000, root_seed = 1, workers = None, generator = "recursive"))]
#[allow(clippy::too_many_arguments)]
fn ensemble<'py>(
    py: Python<'py>,
    model: &PySystemModel,
    bath: &PyBathSpectrum,
    grid: &PyTimeGrid,
    n_traj: usize,
    root_seed: u64,
    workers: Option<usize>,
    generator: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ensemble_config(model, bath, grid, n_traj, root_seed, generator)?;
    let phases = py
        .detach(move || run_ensemble(&cfg, workers, None).and_then(|b| ensemble_phases(&b)))
        .map_err(to_py)?;
    phases_dict(py, &phases)
}

/// Ensemble phases for every `theta` from one run of basis trajectories;
/// `model.theta` is ignored.
#[pyfunction]
#[pyo3(signature = (model, bath, grid, thetas, n_traj = 20000, root_seed = 1, workers = None, generator = "recursive"))]
#[allow(clippy::too_many_arguments)]
fn sweep<'py>(
    py: Python<'py>,
    model: &PySystemModel,
    bath: &PyBathSpectrum,
    grid: &PyTimeGrid,
    thetas: Vec<f64>,
    n_traj: usize,
    root_seed: u64,
    workers: Option<usize>,
    generator: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = ensemble_config(model, bath, grid, n_traj, root_seed, generator)?;
    let rows = py
        .detach(move || run_basis_ensemble(&cfg, workers, None).and_then(|b| sweep_theta(&b, &thetas)))
        .map_err(to_py)?;
    rows.iter().map(|p| phases_dict(py, p)).collect()
}

/// Analytic `(gamma_tot, gamma_dyn)` of the dissipative model at time `t`.
#[pyfunction]
fn dissipative_phases(
    theta: f64,
    omega: f64,
    coupling_strength: f64,
    bath: &PyBathSpectrum,
    t: f64,
) -> PyResult<(f64, f64)> {
    analytic::dissipative_phases_analytic(theta, omega, coupling_strength, &bath.0, t).map_err(to_py)
}

/// Markov-limit dissipative geometric phase at `t = 2π/ω`.
#[pyfunction]
fn dissipative_markov(theta: f64, omega: f64, coupling_strength: f64) -> f64 {
    analytic::dissipative_markov_value(theta, omega, coupling_strength)
}

/// Analytic geometric phase of the dephasing model at time `t`.
#[pyfunction]
fn dephasing_phase(theta: f64, omega: f64, coupling_strength: f64, bath: &PyBathSpectrum, t: f64) -> PyResult<f64> {
    analytic::dephasing_phase_analytic(theta, omega, coupling_strength, &bath.0, t).map_err(to_py)
}

/// Markov-limit dephasing geometric phase `π(cos θ − 1)` at `t = 2π/ω`.
#[pyfunction]
fn dephasing_markov(theta: f64) -> f64 {
    analytic::dephasing_markov_value(theta)
}

/// θ-independent memory-induced shift of the dephasing phase at `t = 2π/ω`.
#[pyfunction]
#[pyo3(signature = (inverse_memory, omega = 1.0, coupling_strength = 1.0, coupling_rate = 1.0))]
fn dephasing_shift(inverse_memory: f64, omega: f64, coupling_strength: f64, coupling_rate: f64) -> f64 {
    analytic::dephasing_shift(omega, coupling_strength, coupling_rate, inverse_memory)
}

/// Runs acceptance criteria (all by default) and returns one dict per
/// criterion with its checks.
#[pyfunction]
#[pyo3(signature = (criteria = None, quick = true, root_seed = None, workers = None))]
fn run_validation<'py>(
    py: Python<'py>,
    criteria: Option<Vec<u8>>,
    quick: bool,
    root_seed: Option<u64>,
    workers: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut scale = if quick {
        ValidationScale::quick()
    } else {
        ValidationScale::full()
    };
    if let Some(s) = root_seed {
        scale.root_seed = s;
    }
    scale.workers = workers;
    let ids = criteria.unwrap_or_else(|| validate::CRITERIA.iter().map(|(id, _)| *id).collect());
    let reports = py.detach(move || {
        ids.iter()
            .map(|&id| validate::run_criterion(id, &scale))
            .collect::<Vec<_>>()
    });
    reports
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("id", r.id)?;
            d.set_item("title", &r.title)?;
            d.set_item("passed", r.passed())?;
            let checks = r
                .checks
                .iter()
                .map(|c| {
                    let cd = PyDict::new(py);
                    cd.set_item("name", &c.name)?;
                    cd.set_item("deviation", c.deviation)?;
                    cd.set_item("tolerance", c.tolerance)?;
                    cd.set_item("passed", c.passed)?;
                    cd.set_item("detail", &c.detail)?;
                    Ok(cd)
                })
                .collect::<PyResult<Vec<_>>>()?;
            d.set_item("checks", checks)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn memphase_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PySystemModel>()?;
    m.add_class::<PyBathSpectrum>()?;
    m.add_class::<PyTimeGrid>()?;
    m.add_function(wrap_pyfunction!(initial_state, m)?)?;
    m.add_function(wrap_pyfunction!(bloch_vector, m)?)?;
    m.add_function(wrap_pyfunction!(pancharatnam_phase, m)?)?;
    m.add_function(wrap_pyfunction!(solid_angle, m)?)?;
    m.add_function(wrap_pyfunction!(noise_path, m)?)?;
    m.add_function(wrap_pyfunction!(single_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(dissipative_phases, m)?)?;
    m.add_function(wrap_pyfunction!(dissipative_markov, m)?)?;
    m.add_function(wrap_pyfunction!(dephasing_phase, m)?)?;
    m.add_function(wrap_pyfunction!(dephasing_markov, m)?)?;
    m.add_function(wrap_pyfunction!(dephasing_shift, m)?)?;
    m.add_function(wrap_pyfunction!(run_validation, m)?)?;
    Ok(())
}
