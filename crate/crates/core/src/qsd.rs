//! Ō-operators of the two solvable models and the fixed-step integrator for
//! the linear non-Markovian QSD equation
//!
//! ```text
//! ∂_t ψ = [−iH + L·u(t) − L†Ō(t)] ψ
//! ```
//!
//! `u(t)` is the noise path (`z*_t`), linearly interpolated between grid
//! points. The equation is integrated as written: no normalization.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseRealization;
use crate::types::{initial_state, BathSpectrum, CouplingKind, PureState, SystemModel, TimeGrid, C64};

/// Amplitudes above this abort a trajectory.
pub const OVERFLOW_LIMIT: f64 = 1e100;

/// `|F|` above this is treated as a pole of the closed form.
pub const POLE_MAGNITUDE: f64 = 1e8;

pub const DEFAULT_NORM_FLOOR: f64 = 1e-12;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OOperatorKind {
    /// Closed-form `F(t)` of the dissipative model.
    DissipativeClosedForm,
    /// `F(t)` from integrating its Riccati equation.
    DissipativeRiccati,
    /// `λ∫₀ᵗα(t,s)ds` for the dephasing model.
    DephasingIntegral,
}

impl OOperatorKind {
    pub fn coupling(&self) -> CouplingKind {
        match self {
            Self::DissipativeClosedForm | Self::DissipativeRiccati => CouplingKind::Dissipative,
            Self::DephasingIntegral => CouplingKind::Dephasing,
        }
    }
}

/// Complex decay of the bath relative to the system, `c = γ − i(ω − Ω)`.
fn riccati_decay(model: &SystemModel, bath: &BathSpectrum) -> C64 {
    C64::new(bath.inverse_memory, -(model.omega - bath.center_frequency))
}

/// `Ω_p = sqrt(2λ²Γγ − c²)`, principal branch. `F(t)` is even in `Ω_p`,
/// so the branch does not matter.
pub fn omega_p(model: &SystemModel, bath: &BathSpectrum) -> C64 {
    let c = riccati_decay(model, bath);
    let lam2g = model.lambda * model.lambda * bath.coupling_rate;
    (2.0 * lam2g * bath.inverse_memory - c * c).sqrt()
}

/// `tan z` without overflow for large `|Im z|`.
fn tan_stable(z: C64) -> C64 {
    if z.im >= 0.0 {
        let w = (2.0 * I * z).exp();
        I * (1.0 - w) / (1.0 + w)
    } else {
        let w = (-2.0 * I * z).exp();
        -I * (1.0 - w) / (1.0 + w)
    }
}

/// Earliest real time at which the closed-form `F` has a pole, if any.
///
/// `F = −y'/(λy)` with `y ∝ e^{−ct/2}·cos(Ω_p t/2 − φ)`, `φ = atan(c/Ω_p)`;
/// poles are the real zeros of the cosine.
pub fn earliest_pole(model: &SystemModel, bath: &BathSpectrum) -> Option<f64> {
    if model.lambda == 0.0 {
        return None;
    }
    let c = riccati_decay(model, bath);
    let op = omega_p(model, bath);
    if op.norm() < 1e-7 * c.norm().max(1.0) {
        // y ∝ e^{−ct/2}(1 + ct/2): zero at t = −2/c.
        let t = -2.0 / c;
        return (t.im.abs() < 1e-12 * t.norm().max(1.0) && t.re > 0.0).then_some(t.re);
    }
    let phi = (c / op).atan();
    // Ω_p t/2 − φ = π/2 + kπ must be real.
    let half = op * 0.5;
    let scale = half.norm();
    if half.im.abs() <= 1e-12 * scale {
        if phi.im.abs() > 1e-12 * phi.norm().max(1.0) {
            return None;
        }
        let rate = half.re;
        let mut best: Option<f64> = None;
        for k in -4..=4 {
            let t = (std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI + phi.re) / rate;
            if t > 0.0 && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
        return best;
    }
    let t = phi.im / half.im;
    if t <= 0.0 {
        return None;
    }
    let w = half * t - phi;
    let m = (w.re - std::f64::consts::FRAC_PI_2).rem_euclid(std::f64::consts::PI);
    let dist = m.min(std::f64::consts::PI - m);
    (dist < 1e-9).then_some(t)
}

fn f_closed_unchecked(model: &SystemModel, bath: &BathSpectrum, t: f64) -> C64 {
    let lambda = model.lambda;
    if lambda == 0.0 || t == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let c = riccati_decay(model, bath);
    let op = omega_p(model, bath);
    if op.norm() < 1e-7 * c.norm().max(1.0) {
        return c * c * t / (2.0 * lambda * (c * t + 2.0));
    }
    let arg = -op * t * 0.5 + (c / op).atan();
    (c - op * tan_stable(arg)) / (2.0 * lambda)
}

/// Closed-form `F(t)` of the dissipative model, `Ō(t) = F(t)σ₋`.
///
/// Fails with [`Error::PoleDetected`] if `F` diverges anywhere in `[0, t]`.
pub fn f_coefficient_dissipative(model: &SystemModel, bath: &BathSpectrum, t: f64) -> Result<C64> {
    if let Some(tp) = earliest_pole(model, bath) {
        if tp <= t {
            return Err(Error::PoleDetected { time: tp });
        }
    }
    let f = f_closed_unchecked(model, bath, t);
    if !f.is_finite() || f.norm() > POLE_MAGNITUDE {
        return Err(Error::PoleDetected { time: t });
    }
    Ok(f)
}

/// Coefficient of `σ_z` in the dephasing Ō: `λ(Γγ/2)(1 − e^{−(γ+iΩ)t})/(γ+iΩ)`.
pub fn obar_dephasing(model: &SystemModel, bath: &BathSpectrum, t: f64) -> C64 {
    let k = bath.decay();
    model.lambda * bath.variance() * (1.0 - (-k * t).exp()) / k
}

fn riccati_rhs(model: &SystemModel, bath: &BathSpectrum, f: C64) -> C64 {
    let c = riccati_decay(model, bath);
    model.lambda * bath.variance() - c * f + model.lambda * f * f
}

/// RK4 solution of `dF/dt = λΓγ/2 − (γ − i(ω−Ω))F + λF²`, `F(0) = 0`,
/// sampled every `spacing` for `count` points.
fn riccati_table(
    model: &SystemModel,
    bath: &BathSpectrum,
    spacing: f64,
    count: usize,
    inner: usize,
) -> Result<Vec<C64>> {
    let h = spacing / inner as f64;
    let mut f = C64::new(0.0, 0.0);
    let mut out = Vec::with_capacity(count);
    out.push(f);
    for k in 1..count {
        for _ in 0..inner {
            let k1 = riccati_rhs(model, bath, f);
            let k2 = riccati_rhs(model, bath, f + 0.5 * h * k1);
            let k3 = riccati_rhs(model, bath, f + 0.5 * h * k2);
            let k4 = riccati_rhs(model, bath, f + h * k3);
            f += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if !f.is_finite() || f.norm() > POLE_MAGNITUDE {
            return Err(Error::PoleDetected {
                time: k as f64 * spacing,
            });
        }
        out.push(f);
    }
    Ok(out)
}

/// Ō coefficient sampled on a grid. Values are cached at spacing
/// `dt/(2·substeps)` so that RK4 stage times hit table entries.
#[derive(Debug, Clone, PartialEq)]
pub struct OOperatorSpec {
    kind: OOperatorKind,
    grid: TimeGrid,
    substeps: usize,
    table: Arc<[C64]>,
}

impl OOperatorSpec {
    pub fn build(kind: OOperatorKind, model: &SystemModel, bath: &BathSpectrum, grid: &TimeGrid) -> Result<Self> {
        Self::with_substeps(kind, model, bath, grid, 1)
    }

    /// The closed form appropriate for the model's coupling.
    pub fn for_model(model: &SystemModel, bath: &BathSpectrum, grid: &TimeGrid) -> Result<Self> {
        let kind = match model.coupling {
            CouplingKind::Dissipative => OOperatorKind::DissipativeClosedForm,
            CouplingKind::Dephasing => OOperatorKind::DephasingIntegral,
        };
        Self::build(kind, model, bath, grid)
    }

    pub fn with_substeps(
        kind: OOperatorKind,
        model: &SystemModel,
        bath: &BathSpectrum,
        grid: &TimeGrid,
        substeps: usize,
    ) -> Result<Self> {
        model.validate()?;
        bath.validate()?;
        if kind.coupling() != model.coupling {
            return Err(Error::Configuration(format!(
                "O-operator {kind:?} does not match {:?} coupling",
                model.coupling
            )));
        }
        let substeps = substeps.max(1);
        let per_step = 2 * substeps;
        let count = grid.n_steps() * per_step + 1;
        let spacing = grid.dt() / per_step as f64;
        let time = |k: usize| {
            if k == count - 1 {
                grid.t_final()
            } else {
                k as f64 * spacing
            }
        };
        let table: Vec<C64> = match kind {
            OOperatorKind::DissipativeClosedForm => {
                if let Some(tp) = earliest_pole(model, bath) {
                    if tp <= grid.t_final() {
                        return Err(Error::PoleDetected { time: tp });
                    }
                }
                let mut values = Vec::with_capacity(count);
                for k in 0..count {
                    let f = f_closed_unchecked(model, bath, time(k));
                    if !f.is_finite() || f.norm() > POLE_MAGNITUDE {
                        return Err(Error::PoleDetected { time: time(k) });
                    }
                    values.push(f);
                }
                values
            }
            OOperatorKind::DissipativeRiccati => {
                let inner = ((spacing * 2000.0).ceil() as usize).clamp(4, 1000);
                riccati_table(model, bath, spacing, count, inner)?
            }
            OOperatorKind::DephasingIntegral => (0..count).map(|k| obar_dephasing(model, bath, time(k))).collect(),
        };
        Ok(Self {
            kind,
            grid: *grid,
            substeps,
            table: table.into(),
        })
    }

    pub fn kind(&self) -> OOperatorKind {
        self.kind
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Value at grid point `j`.
    pub fn at(&self, j: usize) -> C64 {
        self.table[j * 2 * self.substeps]
    }

    pub fn grid_values(&self) -> Vec<C64> {
        (0..self.grid.len()).map(|j| self.at(j)).collect()
    }

    fn fine(&self, k: usize) -> C64 {
        self.table[k]
    }
}

/// The QSD generator `h(t) = −iH + L·u − L†Ō` for one model.
#[derive(Debug, Clone, Copy)]
pub struct Generator {
    half_omega: f64,
    lambda: f64,
    coupling: CouplingKind,
}

impl Generator {
    pub fn new(model: &SystemModel) -> Self {
        Self {
            half_omega: 0.5 * model.omega,
            lambda: model.lambda,
            coupling: model.coupling,
        }
    }

    /// `h·ψ` for noise value `u` and Ō coefficient `obar`.
    #[inline]
    pub fn apply(&self, u: C64, obar: C64, s: &PureState) -> PureState {
        let rot = C64::new(0.0, self.half_omega);
        match self.coupling {
            CouplingKind::Dissipative => PureState::new(
                (-rot - self.lambda * obar) * s.up,
                rot * s.down + self.lambda * u * s.up,
            ),
            CouplingKind::Dephasing => {
                let shift = self.lambda * obar;
                let drive = self.lambda * u;
                PureState::new((-rot + drive - shift) * s.up, (rot - drive - shift) * s.down)
            }
        }
    }

    /// `⟨ψ|h|ψ⟩`.
    pub fn expectation(&self, u: C64, obar: C64, s: &PureState) -> C64 {
        s.inner(&self.apply(u, obar, s))
    }

    /// `⟨a|h|b⟩`.
    pub fn matrix_element(&self, u: C64, obar: C64, a: &PureState, b: &PureState) -> C64 {
        a.inner(&self.apply(u, obar, b))
    }
}

/// Time series of unnormalized states `ψ_{z*}(t_j)` along one noise path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<PureState>,
    pub noise_seed: u64,
    pub model: SystemModel,
    pub bath: BathSpectrum,
    /// Noise values `u_j` the trajectory was driven with.
    pub noise: Arc<[C64]>,
    /// Ō coefficient at the grid points.
    pub obar: Arc<[C64]>,
}

impl Trajectory {
    pub fn generator(&self) -> Generator {
        Generator::new(&self.model)
    }

    /// `⟨ψ_j|h(t_j)|ψ_j⟩`.
    pub fn generator_expectation(&self, j: usize) -> C64 {
        self.generator()
            .expectation(self.noise[j], self.obar[j], &self.states[j])
    }

    pub fn bloch_path(&self) -> Result<crate::types::BlochPath> {
        crate::types::BlochPath::from_states(&self.states)
    }
}

/// Integrates several initial states along the same noise path.
///
/// Returns one state series per initial state. Each grid interval is split
/// into `ospec.substeps()` RK4 steps.
pub fn integrate_states(
    model: &SystemModel,
    ospec: &OOperatorSpec,
    noise: &NoiseRealization,
    initials: &[PureState],
) -> Result<Vec<Vec<PureState>>> {
    check_consistency(model, ospec, noise)?;
    let grid = noise.grid;
    let n = grid.n_steps();
    let m = ospec.substeps;
    let h = grid.dt() / m as f64;
    let gen = Generator::new(model);
    let mut out: Vec<Vec<PureState>> = initials
        .iter()
        .map(|s| {
            let mut v = Vec::with_capacity(grid.len());
            v.push(*s);
            v
        })
        .collect();
    let mut current: Vec<PureState> = initials.to_vec();
    for j in 0..n {
        let (u0, u1) = (noise.values[j], noise.values[j + 1]);
        for sub in 0..m {
            let frac0 = sub as f64 / m as f64;
            let ua = u0 + (u1 - u0) * frac0;
            let um = u0 + (u1 - u0) * ((sub as f64 + 0.5) / m as f64);
            let ub = u0 + (u1 - u0) * ((sub + 1) as f64 / m as f64);
            let k0 = (j * m + sub) * 2;
            let (oa, om, ob) = (ospec.fine(k0), ospec.fine(k0 + 1), ospec.fine(k0 + 2));
            for s in current.iter_mut() {
                *s = rk4_step(&gen, s, h, (ua, oa), (um, om), (ub, ob));
            }
        }
        for (series, s) in out.iter_mut().zip(current.iter()) {
            if !s.is_finite() || s.max_abs() > OVERFLOW_LIMIT {
                return Err(Error::Overflow { time: grid.time(j + 1) });
            }
            series.push(*s);
        }
    }
    Ok(out)
}

#[inline]
fn rk4_step(gen: &Generator, s: &PureState, h: f64, start: (C64, C64), mid: (C64, C64), end: (C64, C64)) -> PureState {
    let k1 = gen.apply(start.0, start.1, s);
    let k2 = gen.apply(mid.0, mid.1, &s.add(&k1.scale_real(0.5 * h)));
    let k3 = gen.apply(mid.0, mid.1, &s.add(&k2.scale_real(0.5 * h)));
    let k4 = gen.apply(end.0, end.1, &s.add(&k3.scale_real(h)));
    let incr = k1
        .add(&k2.scale_real(2.0))
        .add(&k3.scale_real(2.0))
        .add(&k4)
        .scale_real(h / 6.0);
    s.add(&incr)
}

fn check_consistency(model: &SystemModel, ospec: &OOperatorSpec, noise: &NoiseRealization) -> Result<()> {
    if noise.grid != ospec.grid {
        return Err(Error::Configuration(
            "noise grid differs from the O-operator grid".into(),
        ));
    }
    if ospec.kind.coupling() != model.coupling {
        return Err(Error::Configuration(format!(
            "O-operator {:?} does not match {:?} coupling",
            ospec.kind, model.coupling
        )));
    }
    if noise.values.len() != noise.grid.len() {
        return Err(Error::Configuration(format!(
            "noise has {} values for a grid of {} points",
            noise.values.len(),
            noise.grid.len()
        )));
    }
    Ok(())
}

/// One QSD trajectory from `initial_state(model.theta)`.
pub fn integrate_trajectory(
    model: &SystemModel,
    bath: &BathSpectrum,
    ospec: &OOperatorSpec,
    noise: &NoiseRealization,
) -> Result<Trajectory> {
    let psi0 = initial_state(model.theta)?;
    let states = integrate_states(model, ospec, noise, &[psi0])?
        .pop()
        .expect("one initial state");
    Ok(Trajectory {
        grid: noise.grid,
        states,
        noise_seed: noise.seed,
        model: *model,
        bath: *bath,
        noise: noise.values.clone().into(),
        obar: ospec.grid_values().into(),
    })
}

/// Divides every state by its norm. Phases are untouched.
pub fn normalize_trajectory(traj: &Trajectory, floor: f64) -> Result<Trajectory> {
    let states = traj
        .states
        .iter()
        .enumerate()
        .map(|(index, s)| s.normalized(floor).ok_or(Error::VanishingNorm { index, floor }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { states, ..traj.clone() })
}

/// The `|↑⟩` and `|↓⟩` solutions along one noise path. The equation is
/// linear, so any initial state's trajectory is a superposition of these.
#[derive(Debug, Clone)]
pub struct BasisTrajectories {
    pub up: Vec<PureState>,
    pub down: Vec<PureState>,
}

impl BasisTrajectories {
    pub fn integrate(model: &SystemModel, ospec: &OOperatorSpec, noise: &NoiseRealization) -> Result<Self> {
        let mut v = integrate_states(model, ospec, noise, &[PureState::up(), PureState::down()])?;
        let down = v.pop().expect("two series");
        let up = v.pop().expect("two series");
        Ok(Self { up, down })
    }

    /// States of the trajectory started from `initial_state(theta)`.
    pub fn superpose(&self, theta: f64) -> Result<Vec<PureState>> {
        let psi0 = initial_state(theta)?;
        let (a, b) = (psi0.up.re, psi0.down.re);
        Ok(self
            .up
            .iter()
            .zip(self.down.iter())
            .map(|(u, d)| u.scale_real(a).add(&d.scale_real(b)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_noise, GeneratorKind};
    use std::f64::consts::PI;

    fn diss(theta: f64) -> SystemModel {
        SystemModel::new(1.0, 1.0, CouplingKind::Dissipative, theta).unwrap()
    }

    #[test]
    fn f_vanishes_at_origin() {
        let b = BathSpectrum::new(1.0, 1.0, 0.0).unwrap();
        assert_eq!(
            f_coefficient_dissipative(&diss(1.0), &b, 0.0).unwrap(),
            C64::new(0.0, 0.0)
        );
        // Formula itself (not the short-circuit) is zero at t = 0 to rounding.
        let c = riccati_decay(&diss(1.0), &b);
        let op = omega_p(&diss(1.0), &b);
        let raw = (c - op * tan_stable((c / op).atan())) / 2.0;
        assert!(raw.norm() < 1e-14);
    }

    #[test]
    fn stable_tangent_matches_library_tangent() {
        for z in [
            C64::new(0.3, 0.2),
            C64::new(-1.1, -0.7),
            C64::new(2.0, 3.0),
            C64::new(0.1, -5.0),
        ] {
            assert!((tan_stable(z) - z.tan()).norm() < 1e-13, "{z}");
        }
        let far = tan_stable(C64::new(0.4, 800.0));
        assert!((far - I).norm() < 1e-15);
        let far = tan_stable(C64::new(0.4, -800.0));
        assert!((far + I).norm() < 1e-15);
    }

    #[test]
    fn markov_fixed_point() {
        let b = BathSpectrum::new(1.0, 1000.0, 0.0).unwrap();
        let f = f_coefficient_dissipative(&diss(1.0), &b, 50.0).unwrap();
        assert!((f - C64::new(0.5, 0.0)).norm() < 1e-3, "{f}");
    }

    #[test]
    fn resonant_strong_coupling_has_a_pole() {
        // ω = Ω makes the Riccati equation real; γ < 2λ²Γ puts a zero of y on
        // the real axis.
        let model = SystemModel::new(1.0, 1.0, CouplingKind::Dissipative, 1.0).unwrap();
        let b = BathSpectrum::new(1.0, 0.5, 1.0).unwrap();
        let tp = earliest_pole(&model, &b).expect("pole");
        // Ω_p² = 2·0.5 − 0.25 = 0.75; φ = atan(0.5/√0.75); t = (π + 2φ)/Ω_p
        let op = 0.75f64.sqrt();
        let expected = (PI + 2.0 * (0.5 / op).atan()) / op;
        assert!((tp - expected).abs() < 1e-12);
        assert!(matches!(
            f_coefficient_dissipative(&model, &b, tp + 0.1),
            Err(Error::PoleDetected { .. })
        ));
        assert!(f_coefficient_dissipative(&model, &b, tp - 0.1).is_ok());
        let grid = TimeGrid::new(10.0, 1000).unwrap();
        assert!(matches!(
            OOperatorSpec::build(OOperatorKind::DissipativeClosedForm, &model, &b, &grid),
            Err(Error::PoleDetected { .. })
        ));
        assert!(matches!(
            OOperatorSpec::build(OOperatorKind::DissipativeRiccati, &model, &b, &grid),
            Err(Error::PoleDetected { .. })
        ));
    }

    #[test]
    fn figure_parameters_have_no_pole() {
        for g in [0.1, 0.5, 1.0, 1.2, 100.0] {
            let b = BathSpectrum::new(1.0, g, 0.0).unwrap();
            assert_eq!(earliest_pole(&diss(1.0), &b), None);
        }
    }

    #[test]
    fn dephasing_obar_limits() {
        let model = SystemModel::new(1.0, 1.0, CouplingKind::Dephasing, 1.0).unwrap();
        let b = BathSpectrum::new(1.0, 1.0, 0.0).unwrap();
        assert_eq!(obar_dephasing(&model, &b, 0.0), C64::new(0.0, 0.0));
        assert!((obar_dephasing(&model, &b, 60.0) - C64::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn mismatched_ospec_is_rejected() {
        let model = diss(1.0);
        let b = BathSpectrum::new(1.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        assert!(matches!(
            OOperatorSpec::build(OOperatorKind::DephasingIntegral, &model, &b, &grid),
            Err(Error::Configuration(_))
        ));
        let ospec = OOperatorSpec::for_model(&model, &b, &grid).unwrap();
        let other = TimeGrid::new(1.0, 20).unwrap();
        let noise = sample_noise(&b, &other, 1, GeneratorKind::Recursive).unwrap();
        assert!(matches!(
            integrate_trajectory(&model, &b, &ospec, &noise),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn uncoupled_rotation_is_exact() {
        let theta = 1.3;
        let model = SystemModel::new(1.0, 0.0, CouplingKind::Dissipative, theta).unwrap();
        let b = BathSpectrum::new(1.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(2.0 * PI, 2000).unwrap();
        let ospec = OOperatorSpec::for_model(&model, &b, &grid).unwrap();
        let noise = sample_noise(&b, &grid, 9, GeneratorKind::Recursive).unwrap();
        let traj = integrate_trajectory(&model, &b, &ospec, &noise).unwrap();
        for (j, s) in traj.states.iter().enumerate() {
            let t = grid.time(j);
            let up = C64::from_polar((0.5 * theta).cos(), -0.5 * t);
            let down = C64::from_polar((0.5 * theta).sin(), 0.5 * t);
            assert!((s.up - up).norm() < 1e-12 && (s.down - down).norm() < 1e-12);
            assert!((s.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dark_state_stays_dark() {
        let model = diss(PI);
        let b = BathSpectrum::new(1.0, 0.5, 0.0).unwrap();
        let grid = TimeGrid::new(6.0, 600).unwrap();
        let ospec = OOperatorSpec::for_model(&model, &b, &grid).unwrap();
        for seed in 0..5 {
            let noise = sample_noise(&b, &grid, seed, GeneratorKind::Recursive).unwrap();
            let traj = integrate_trajectory(&model, &b, &ospec, &noise).unwrap();
            for (j, s) in traj.states.iter().enumerate() {
                let expected = C64::from_polar(1.0, 0.5 * grid.time(j));
                assert!(s.up.norm() < 1e-15);
                assert!((s.down - expected).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn normalization() {
        let model = diss(1.0);
        let b = BathSpectrum::new(1.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let mut traj = Trajectory {
            grid,
            states: vec![PureState::new(C64::new(2.0, 0.0), C64::new(0.0, 0.0)); 5],
            noise_seed: 0,
            model,
            bath: b,
            noise: vec![C64::new(0.0, 0.0); 5].into(),
            obar: vec![C64::new(0.0, 0.0); 5].into(),
        };
        let n = normalize_trajectory(&traj, DEFAULT_NORM_FLOOR).unwrap();
        assert!(n.states.iter().all(|s| *s == PureState::up()));
        let again = normalize_trajectory(&n, DEFAULT_NORM_FLOOR).unwrap();
        assert!(again
            .states
            .iter()
            .zip(n.states.iter())
            .all(|(a, b)| (a.up - b.up).norm() < 1e-15 && (a.down - b.down).norm() < 1e-15));
        traj.states[3] = PureState::new(C64::new(1e-14, 0.0), C64::new(0.0, 0.0));
        assert_eq!(
            normalize_trajectory(&traj, DEFAULT_NORM_FLOOR),
            Err(Error::VanishingNorm {
                index: 3,
                floor: DEFAULT_NORM_FLOOR
            })
        );
    }

    #[test]
    fn normalization_keeps_bloch_vectors() {
        let model = diss(1.0);
        let b = BathSpectrum::new(1.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(3.0, 300).unwrap();
        let ospec = OOperatorSpec::for_model(&model, &b, &grid).unwrap();
        let noise = sample_noise(&b, &grid, 5, GeneratorKind::Recursive).unwrap();
        let traj = integrate_trajectory(&model, &b, &ospec, &noise).unwrap();
        let n = normalize_trajectory(&traj, DEFAULT_NORM_FLOOR).unwrap();
        for (a, c) in traj
            .bloch_path()
            .unwrap()
            .points()
            .iter()
            .zip(n.bloch_path().unwrap().points())
        {
            for k in 0..3 {
                assert!((a[k] - c[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn overflow_is_reported_with_time() {
        // Dephasing drive with huge λ makes the linear norm explode.
        let model = SystemModel::new(1.0, 400.0, CouplingKind::Dephasing, 1.0).unwrap();
        let b = BathSpectrum::new(1.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(5.0, 5000).unwrap();
        let ospec = OOperatorSpec::for_model(&model, &b, &grid).unwrap();
        let noise = sample_noise(&b, &grid, 2, GeneratorKind::Recursive).unwrap();
        match integrate_trajectory(&model, &b, &ospec, &noise) {
            Err(Error::Overflow { time }) => assert!(time > 0.0 && time <= 5.0),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn basis_superposition_reproduces_direct_integration() {
        let model = diss(0.8);
        let b = BathSpectrum::new(1.0, 0.7, 0.2).unwrap();
        let grid = TimeGrid::new(3.0, 300).unwrap();
        let ospec = OOperatorSpec::for_model(&model, &b, &grid).unwrap();
        let noise = sample_noise(&b, &grid, 11, GeneratorKind::Recursive).unwrap();
        let direct = integrate_trajectory(&model, &b, &ospec, &noise).unwrap();
        let basis = BasisTrajectories::integrate(&model, &ospec, &noise).unwrap();
        let combined = basis.superpose(0.8).unwrap();
        for (a, c) in direct.states.iter().zip(combined.iter()) {
            assert!((a.up - c.up).norm() < 1e-12 && (a.down - c.down).norm() < 1e-12);
        }
    }
}
