//! Closed-form phases of the two solvable models.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::qsd::{earliest_pole, f_coefficient_dissipative};
use crate::stats::nearest_branch;
use crate::types::{BathSpectrum, CouplingKind, DensityMatrix, SystemModel, C64};

use super::quadrature::integrate;

const QUAD_TOL: f64 = 1e-13;

fn dissipative_model(theta: f64, omega: f64, lambda: f64) -> Result<SystemModel> {
    SystemModel::new(omega, lambda, CouplingKind::Dissipative, theta)
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "time must be finite and >= 0, got {t}"
        )))
    }
}

fn check_pole(model: &SystemModel, bath: &BathSpectrum, t: f64) -> Result<()> {
    match earliest_pole(model, bath) {
        Some(tp) if tp <= t => Err(Error::PoleDetected { time: tp }),
        _ => Ok(()),
    }
}

/// Number of panels used to follow phases continuously up to `t`.
fn panels(omega: f64, t: f64) -> usize {
    (20.0 * t * (omega.abs() + 1.0)).ceil().max(64.0) as usize
}

/// `F` without the per-call pole test; callers check the window once.
fn f_value(model: &SystemModel, bath: &BathSpectrum, s: f64) -> C64 {
    f_coefficient_dissipative(model, bath, s).unwrap_or(C64::new(f64::NAN, f64::NAN))
}

/// `g(t) = ∫₀ᵗ F(s) ds` by adaptive quadrature of the closed form.
pub fn g_integral(model: &SystemModel, bath: &BathSpectrum, t: f64) -> Result<C64> {
    check_time(t)?;
    check_pole(model, bath, t)?;
    integrate(|s| f_value(model, bath, s), 0.0, t, QUAD_TOL, QUAD_TOL)
}

/// Exact reduced density of the dissipative model:
/// `ρ_↑↑ = cos²(θ/2)e^{−2λRe g}`, `ρ_↑↓ = c_↑ b̄` with
/// `c_↑ = cos(θ/2)e^{−iωt/2−λg}`, `b = sin(θ/2)e^{iωt/2}`.
pub fn dissipative_density_analytic(model: &SystemModel, bath: &BathSpectrum, t: f64) -> Result<DensityMatrix> {
    let g = g_integral(model, bath, t)?;
    let (s, c) = (0.5 * model.theta).sin_cos();
    let up = c * (C64::new(0.0, -0.5 * model.omega * t) - model.lambda * g).exp();
    let down = C64::from_polar(s, 0.5 * model.omega * t);
    let uu = up.norm_sqr();
    let ud = up * down.conj();
    Ok(DensityMatrix::new([
        [C64::new(uu, 0.0), ud],
        [ud.conj(), C64::new(1.0 - uu, 0.0)],
    ]))
}

/// Analytic ensemble phases `(γ̄_tot, γ̄_dyn)` of the dissipative model:
///
/// ```text
/// γ̄_tot = −arg{e^{−iωt/2}[1 − cosθ + e^{iωt−λg*(t)}(1 + cosθ)]}
/// γ̄_dyn = ∫₀ᵗ ω/2 − e^{−2λRe g(s)}cos²(θ/2)[ω + 2λ Im F(s)] ds
/// ```
///
/// with `γ̄_tot` unwrapped continuously from `0` at `t = 0`.
pub fn dissipative_phases_analytic(
    theta: f64,
    omega: f64,
    lambda: f64,
    bath: &BathSpectrum,
    t: f64,
) -> Result<(f64, f64)> {
    let model = dissipative_model(theta, omega, lambda)?;
    bath.validate()?;
    check_time(t)?;
    check_pole(&model, bath, t)?;
    let cos2 = (0.5 * theta).cos().powi(2);
    let total_arg = |s: f64, g: C64| -> C64 {
        let inner = (1.0 - theta.cos()) + (C64::new(0.0, omega * s) - lambda * g.conj()).exp() * (1.0 + theta.cos());
        C64::new(0.0, -0.5 * omega * s).exp() * inner
    };

    let m = panels(omega, t);
    let mut g = C64::new(0.0, 0.0);
    let mut dynamical = 0.0;
    let mut last = total_arg(0.0, g);
    let mut tot = -last.arg();
    for k in 0..m {
        let a = t * k as f64 / m as f64;
        let b = t * (k + 1) as f64 / m as f64;
        let g_a = g;
        let seg = integrate(
            |s| {
                let gs = g_a
                    + integrate(|x| f_value(&model, bath, x), a, s, QUAD_TOL, QUAD_TOL)
                        .unwrap_or(C64::new(f64::NAN, f64::NAN));
                let f = f_value(&model, bath, s);
                C64::new(
                    0.5 * omega - (-2.0 * lambda * gs.re).exp() * cos2 * (omega + 2.0 * lambda * f.im),
                    0.0,
                )
            },
            a,
            b,
            QUAD_TOL,
            QUAD_TOL,
        )?;
        dynamical += seg.re;
        g += integrate(|s| f_value(&model, bath, s), a, b, QUAD_TOL, QUAD_TOL)?;
        let next = total_arg(b, g);
        if next.norm() == 0.0 {
            return Err(Error::UndefinedTotalPhase);
        }
        tot -= (next / last).arg();
        last = next;
    }
    let tot = nearest_branch(-last.arg(), tot);
    Ok((tot, dynamical))
}

/// `ω(cosθ + 1)(1 − e^{−2πλ²/ω})/(2λ²)`, the Markov-limit value at
/// `t = 2π/ω`; `π(cosθ + 1)` at `λ = 0`.
pub fn dissipative_markov_value(theta: f64, omega: f64, lambda: f64) -> f64 {
    let x = 2.0 * PI * lambda * lambda / omega;
    let factor = if x == 0.0 { 1.0 } else { -(-x).exp_m1() / x };
    PI * (theta.cos() + 1.0) * factor
}

/// Strong-memory expansion `π(cosθ + 1)(1 − γΓλ²/2)`.
pub fn dissipative_strong_memory_value(theta: f64, gamma: f64, coupling_rate: f64, lambda: f64) -> f64 {
    PI * (theta.cos() + 1.0) * (1.0 - 0.5 * gamma * coupling_rate * lambda * lambda)
}

/// The first term of the dephasing phase, `arg[(cosθ + 1 − (cosθ − 1)e^{iωs})·e^{E(s)}]`,
/// as a complex number whose argument is taken.
fn dephasing_bracket(theta: f64, omega: f64, lambda: f64, bath: &BathSpectrum, s: f64) -> C64 {
    let k = bath.decay();
    let gl = bath.inverse_memory * bath.coupling_rate * lambda * lambda;
    let exponent = -gl * (k * s + (-k * s).exp() - 1.0) / (2.0 * k * k) - C64::new(0.0, 0.5 * omega * s);
    let pre = (theta.cos() + 1.0) - (theta.cos() - 1.0) * C64::new(0.0, omega * s).exp();
    // Only the phase matters; drop the real part of the exponent to keep the
    // magnitude bounded.
    pre * C64::new(0.0, exponent.im).exp()
}

fn dephasing_subtracted(theta: f64, omega: f64, lambda: f64, bath: &BathSpectrum, t: f64) -> f64 {
    let (g, om) = (bath.inverse_memory, bath.center_frequency);
    let gl = g * bath.coupling_rate * lambda * lambda;
    let q = g * g + om * om;
    let e = (-g * t).exp();
    let bracket = 2.0
        * gl
        * (om * (g * (g * t - 2.0) + om * om * t)
            + e * ((g * g - om * om) * (om * t).sin() + 2.0 * g * om * (om * t).cos()))
        - omega * t * q * q * theta.cos();
    bracket / (2.0 * q * q)
}

/// Analytic ensemble geometric phase of the dephasing model at time `t`,
/// with the argument term unwrapped continuously from `t = 0`.
pub fn dephasing_phase_analytic(theta: f64, omega: f64, lambda: f64, bath: &BathSpectrum, t: f64) -> Result<f64> {
    SystemModel::new(omega, lambda, CouplingKind::Dephasing, theta)?;
    bath.validate()?;
    check_time(t)?;
    if bath.inverse_memory <= 0.0 {
        return Err(Error::InvalidParameter("dephasing formula requires gamma > 0".into()));
    }
    let m = panels(omega.abs() + bath.center_frequency.abs(), t);
    let mut last = dephasing_bracket(theta, omega, lambda, bath, 0.0);
    let mut acc = last.arg();
    for k in 1..=m {
        let s = t * k as f64 / m as f64;
        let next = dephasing_bracket(theta, omega, lambda, bath, s);
        if next.norm() == 0.0 {
            return Err(Error::UndefinedTotalPhase);
        }
        acc += (next / last).arg();
        last = next;
    }
    Ok(acc - dephasing_subtracted(theta, omega, lambda, bath, t))
}

/// The dephasing phase at `t = 2π/ω` in closed form.
pub fn dephasing_phase_at_period(theta: f64, omega: f64, lambda: f64, bath: &BathSpectrum) -> f64 {
    let (g, om, gc) = (bath.inverse_memory, bath.center_frequency, bath.coupling_rate);
    let l2 = lambda * lambda;
    let q = g * g + om * om;
    let main = -PI * q * (g * g * omega + g * gc * l2 * om + omega * om * om)
        + g * g * gc * l2 * omega * om
        + PI * omega * q * q * theta.cos();
    let angle = 2.0 * PI * om / omega;
    let tail = g * gc * l2 * omega * ((om * om - g * g) * angle.sin() - 2.0 * g * om * angle.cos());
    (2.0 * main + (-2.0 * PI * g / omega).exp() * tail) / (2.0 * omega * q * q)
}

/// θ-independent shift `γ_G^(M) − γ̄_G` for `Ω = ω` at `t = 2π/ω`:
/// `γΓλ²[π(γ² + ω²) + γω(e^{−2πγ/ω} − 1)]/(γ² + ω²)²`.
pub fn dephasing_shift(omega: f64, lambda: f64, coupling_rate: f64, gamma: f64) -> f64 {
    let q = gamma * gamma + omega * omega;
    gamma * coupling_rate * lambda * lambda * (PI * q + gamma * omega * (-2.0 * PI * gamma / omega).exp_m1()) / (q * q)
}

/// Large-γ expansion `π(cosθ − 1) − πΓλ²Ω/(γω) + Γλ²Ω/γ²`.
pub fn dephasing_large_gamma(theta: f64, omega: f64, lambda: f64, bath: &BathSpectrum) -> f64 {
    let (g, om) = (bath.inverse_memory, bath.center_frequency);
    let a = bath.coupling_rate * lambda * lambda * om;
    PI * (theta.cos() - 1.0) - PI * a / (g * omega) + a / (g * g)
}

/// Markov (and closed-system) dephasing value `π(cosθ − 1)`.
pub fn dephasing_markov_value(theta: f64) -> f64 {
    PI * (theta.cos() - 1.0)
}
