//! Shared value types: time grids, two-level states, density matrices and
//! the model/bath parameter records.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Uniform time grid `t_j = j·dt`, `j = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "t_final must be positive and finite, got {t_final}"
            )));
        }
        if n_steps < 2 {
            return Err(Error::InvalidGrid(format!("n_steps must be at least 2, got {n_steps}")));
        }
        Ok(Self { t_final, n_steps })
    }

    /// Grid with step as close to `dt` as possible that still lands on `t_final`.
    pub fn with_step(t_final: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        let n = (t_final / dt).round().max(2.0) as usize;
        Self::new(t_final, n)
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of sample points, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        if j == self.n_steps {
            self.t_final
        } else {
            j as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|j| self.time(j))
    }
}

/// Unnormalized two-level amplitude pair `c_up|↑⟩ + c_down|↓⟩`.
///
/// Nothing here normalizes implicitly: the integrator's raw amplitudes carry
/// the phases that the Pancharatnam formulas read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PureState {
    pub up: C64,
    pub down: C64,
}

impl PureState {
    pub const fn new(up: C64, down: C64) -> Self {
        Self { up, down }
    }

    pub fn up() -> Self {
        Self::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0))
    }

    pub fn down() -> Self {
        Self::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.up.norm_sqr() + self.down.norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> C64 {
        self.up.conj() * other.up + self.down.conj() * other.down
    }

    pub fn scale(&self, factor: C64) -> PureState {
        PureState::new(self.up * factor, self.down * factor)
    }

    pub fn scale_real(&self, factor: f64) -> PureState {
        PureState::new(self.up * factor, self.down * factor)
    }

    pub fn add(&self, other: &PureState) -> PureState {
        PureState::new(self.up + other.up, self.down + other.down)
    }

    pub fn is_finite(&self) -> bool {
        self.up.is_finite() && self.down.is_finite()
    }

    /// Largest component magnitude.
    pub fn max_abs(&self) -> f64 {
        self.up.norm().max(self.down.norm())
    }

    /// Divides by the real positive norm; the phase is untouched.
    pub fn normalized(&self, floor: f64) -> Option<PureState> {
        let n = self.norm();
        (n > floor && n.is_finite()).then(|| self.scale_real(1.0 / n))
    }
}

/// Bloch vector of a nonzero state, `(⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩)/⟨ψ|ψ⟩`.
///
/// `initial_state(θ)` maps to `(sin θ, 0, cos θ)`.
pub fn bloch_vector(state: &PureState) -> Result<[f64; 3]> {
    let n2 = state.norm_sqr();
    if !n2.is_finite() || n2 <= 0.0 {
        return Err(Error::DegenerateState);
    }
    let cross = state.up.conj() * state.down;
    Ok([
        2.0 * cross.re / n2,
        2.0 * cross.im / n2,
        (state.up.norm_sqr() - state.down.norm_sqr()) / n2,
    ])
}

/// `cos(θ/2)|↑⟩ + sin(θ/2)|↓⟩`.
pub fn initial_state(theta: f64) -> Result<PureState> {
    check_theta(theta)?;
    let (s, c) = (0.5 * theta.clamp(0.0, PI)).sin_cos();
    Ok(PureState::new(C64::new(c, 0.0), C64::new(s, 0.0)))
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    // A few ulps of slack absorb rounding in computed grids such as `k·π/n`.
    if (-1e-12..=PI + 1e-12).contains(&theta) {
        Ok(())
    } else {
        Err(Error::ThetaOutOfRange(theta))
    }
}

/// 2×2 density matrix in the `(↑, ↓)` basis. `entries[0][1] = ⟨↑|ρ|↓⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    pub entries: [[C64; 2]; 2],
}

impl DensityMatrix {
    pub fn new(entries: [[C64; 2]; 2]) -> Self {
        Self { entries }
    }

    /// `|ψ⟩⟨ψ|` for an unnormalized `ψ` (trace = norm²).
    pub fn from_pure(state: &PureState) -> Self {
        let (a, b) = (state.up, state.down);
        Self::new([[a * a.conj(), a * b.conj()], [b * a.conj(), b * b.conj()]])
    }

    pub fn zero() -> Self {
        Self::new([[C64::new(0.0, 0.0); 2]; 2])
    }

    pub fn trace(&self) -> C64 {
        self.entries[0][0] + self.entries[1][1]
    }

    pub fn determinant(&self) -> C64 {
        let m = &self.entries;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn population_up(&self) -> f64 {
        self.entries[0][0].re
    }

    pub fn population_down(&self) -> f64 {
        self.entries[1][1].re
    }

    pub fn coherence(&self) -> C64 {
        self.entries[0][1]
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let m = &self.entries;
        m[0][0].im.abs() <= tol && m[1][1].im.abs() <= tol && (m[0][1] - m[1][0].conj()).norm() <= tol
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let a = self.entries[0][0].re;
        let d = self.entries[1][1].re;
        let b = 0.5 * (self.entries[0][1] + self.entries[1][0].conj());
        0.5 * (a + d - ((a - d).powi(2) + 4.0 * b.norm_sqr()).sqrt())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let m = &self.entries;
        Self::new([
            [m[0][0] * factor, m[0][1] * factor],
            [m[1][0] * factor, m[1][1] * factor],
        ])
    }

    pub fn add(&self, other: &Self) -> Self {
        let (m, o) = (&self.entries, &other.entries);
        Self::new([
            [m[0][0] + o[0][0], m[0][1] + o[0][1]],
            [m[1][0] + o[1][0], m[1][1] + o[1][1]],
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingKind {
    /// `L = λσ₋`
    Dissipative,
    /// `L = λσ_z`
    Dephasing,
}

/// Two-level system `H = ωσ_z/2` coupled through `λσ₋` or `λσ_z`, prepared
/// at Bloch polar angle `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub omega: f64,
    pub lambda: f64,
    pub coupling: CouplingKind,
    pub theta: f64,
}

impl SystemModel {
    pub fn new(omega: f64, lambda: f64, coupling: CouplingKind, theta: f64) -> Result<Self> {
        let model = Self {
            omega,
            lambda,
            coupling,
            theta,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.omega.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "omega must be finite, got {}",
                self.omega
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        check_theta(self.theta)
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::new(self.omega, self.lambda, self.coupling, theta)
    }

    /// One period of the bare system, `2π/ω`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }
}

/// Lorentzian bath: `α(t,s) = (Γγ/2)·exp(−γ|t−s| − iΩ(t−s))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpectrum {
    /// Overall coupling rate `Γ`.
    pub coupling_rate: f64,
    /// Inverse memory time `γ`.
    pub inverse_memory: f64,
    /// Central frequency `Ω`.
    pub center_frequency: f64,
}

impl BathSpectrum {
    pub fn new(coupling_rate: f64, inverse_memory: f64, center_frequency: f64) -> Result<Self> {
        let bath = Self {
            coupling_rate,
            inverse_memory,
            center_frequency,
        };
        bath.validate()?;
        Ok(bath)
    }

    pub fn validate(&self) -> Result<()> {
        let finite =
            self.coupling_rate.is_finite() && self.inverse_memory.is_finite() && self.center_frequency.is_finite();
        if !finite {
            return Err(Error::InvalidParameter("bath parameters must be finite".into()));
        }
        if self.coupling_rate < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "coupling rate must be non-negative, got {}",
                self.coupling_rate
            )));
        }
        if self.inverse_memory <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "inverse memory time must be positive, got {}",
                self.inverse_memory
            )));
        }
        Ok(())
    }

    /// Equal-time value `α(t,t) = Γγ/2`, the stationary noise variance.
    pub fn variance(&self) -> f64 {
        0.5 * self.coupling_rate * self.inverse_memory
    }

    /// `γ + iΩ`, the complex decay rate of the kernel.
    pub fn decay(&self) -> C64 {
        C64::new(self.inverse_memory, self.center_frequency)
    }
}

/// Sequence of unit Bloch vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochPath(pub Vec<[f64; 3]>);

impl BlochPath {
    pub fn from_states(states: &[PureState]) -> Result<Self> {
        states
            .iter()
            .map(bloch_vector)
            .collect::<Result<Vec<_>>>()
            .map(BlochPath)
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
