//! Brute-force simulations of the full system–bath Hamiltonian with a
//! discretized bath.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::types::{check_theta, BathSpectrum, DensityMatrix, TimeGrid, C64};

use super::quadrature::integrate;

/// Finite set of bath modes `(ω_k, g_k)` approximating a Lorentzian bath.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedBath {
    pub frequencies: Vec<f64>,
    pub couplings: Vec<C64>,
    /// Photon cutoff per mode. The single-excitation and coherent-state
    /// oracles are exact and do not use it.
    pub fock_truncation: Option<usize>,
    /// The continuum this discretization stands for.
    pub target: BathSpectrum,
    /// Declared bound on `max_τ |Σ_k|g_k|²e^{−iω_kτ} − α(τ)|`.
    pub fit_tolerance: f64,
}

impl DiscretizedBath {
    /// `k` modes evenly spaced over `[Ω − W, Ω + W]` with
    /// `|g_k|² = J(ω_k)Δω`, `J(ω) = (Γγ²/2π)/((ω − Ω)² + γ²)`.
    ///
    /// The fit tolerance defaults to `1e−3·Γγ/2`.
    pub fn uniform(bath: &BathSpectrum, k: usize, half_width: f64) -> Result<Self> {
        bath.validate()?;
        if k < 2 || !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "discretized bath needs k >= 2 modes and a positive half width, got k = {k}, W = {half_width}"
            )));
        }
        let dw = 2.0 * half_width / (k - 1) as f64;
        let (gc, gam, om) = (bath.coupling_rate, bath.inverse_memory, bath.center_frequency);
        let frequencies: Vec<f64> = (0..k).map(|j| om - half_width + j as f64 * dw).collect();
        let couplings = frequencies
            .iter()
            .map(|w| {
                let j = gc * gam * gam / (2.0 * PI) / ((w - om).powi(2) + gam * gam);
                C64::new((j * dw).sqrt(), 0.0)
            })
            .collect();
        Ok(Self {
            frequencies,
            couplings,
            fock_truncation: None,
            target: *bath,
            fit_tolerance: 1e-3 * bath.variance(),
        })
    }

    pub fn with_fit_tolerance(mut self, tolerance: f64) -> Self {
        self.fit_tolerance = tolerance;
        self
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.frequencies[1] - self.frequencies[0]
    }

    /// `2π/Δω`: beyond this the discrete bath revives.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * PI / self.spacing()
    }

    /// `Σ_k |g_k|² e^{−iω_kτ}`.
    pub fn correlation(&self, tau: f64) -> C64 {
        self.frequencies
            .iter()
            .zip(&self.couplings)
            .map(|(w, g)| g.norm_sqr() * C64::new(0.0, -w * tau).exp())
            .sum()
    }

    /// Largest deviation from the target correlation over `[0, t_max]`.
    pub fn fit_residual(&self, t_max: f64, samples: usize) -> f64 {
        let samples = samples.max(2);
        (0..samples)
            .map(|j| {
                let tau = t_max * j as f64 / (samples - 1) as f64;
                let exact = self.target.variance()
                    * C64::new(-self.target.inverse_memory * tau, -self.target.center_frequency * tau).exp();
                (self.correlation(tau) - exact).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Fails if the window is past the recurrence time or the fit residual
    /// exceeds the declared tolerance.
    pub fn check_window(&self, t_max: f64) -> Result<()> {
        if t_max >= self.recurrence_time() {
            return Err(Error::InvalidParameter(format!(
                "window {t_max} reaches the bath recurrence time {}",
                self.recurrence_time()
            )));
        }
        let residual = self.fit_residual(t_max, 401);
        if residual > self.fit_tolerance {
            return Err(Error::BathFit {
                residual,
                tolerance: self.fit_tolerance,
            });
        }
        Ok(())
    }
}

/// Exact reduced density of the dissipative model with a discretized bath.
///
/// The excitation number is conserved, so `|↑,vac⟩` and `|↓,1_k⟩` evolve
/// under a `(K+1)`-dimensional Hamiltonian, diagonalized once. `|↓,vac⟩` is
/// an eigenstate with energy `−ω/2`.
pub fn brute_force_dissipative_density(
    theta: f64,
    omega: f64,
    lambda: f64,
    dbath: &DiscretizedBath,
    grid: &TimeGrid,
) -> Result<Vec<DensityMatrix>> {
    check_theta(theta)?;
    dbath.check_window(grid.t_final())?;
    if dbath.couplings.iter().any(|g| g.im != 0.0) {
        return Err(Error::InvalidParameter(
            "single-excitation oracle expects real couplings".into(),
        ));
    }
    let k = dbath.len();
    let mut h = DMatrix::<f64>::zeros(k + 1, k + 1);
    h[(0, 0)] = 0.5 * omega;
    for j in 0..k {
        let g = lambda * dbath.couplings[j].re;
        h[(0, j + 1)] = g;
        h[(j + 1, 0)] = g;
        h[(j + 1, j + 1)] = -0.5 * omega + dbath.frequencies[j];
    }
    let eig = SymmetricEigen::new(h);
    let (s, c) = (0.5 * theta).sin_cos();
    // Component of the initial |↑,vac⟩ amplitude on each eigenvector.
    let weights: DVector<f64> = eig.eigenvectors.row(0).transpose() * c;
    Ok(grid
        .times()
        .map(|t| {
            let up: C64 = (0..=k)
                .map(|n| eig.eigenvectors[(0, n)] * weights[n] * C64::new(0.0, -eig.eigenvalues[n] * t).exp())
                .sum();
            let down = C64::from_polar(s, 0.5 * omega * t);
            let uu = up.norm_sqr();
            let ud = up * down.conj();
            DensityMatrix::new([[C64::new(uu, 0.0), ud], [ud.conj(), C64::new(1.0 - uu, 0.0)]])
        })
        .collect())
}

/// `∫₀ᵗ dτ ∫₀^τ ds Re α(τ, s)` by nested adaptive quadrature.
pub fn decoherence_exponent(bath: &BathSpectrum, t: f64) -> Result<f64> {
    let inner = |tau: f64| -> C64 {
        integrate(
            |s| {
                let d = tau - s;
                C64::new(
                    bath.variance() * (-bath.inverse_memory * d).exp() * (bath.center_frequency * d).cos(),
                    0.0,
                )
            },
            0.0,
            tau,
            1e-15,
            1e-14,
        )
        .unwrap_or(C64::new(f64::NAN, 0.0))
    };
    Ok(integrate(inner, 0.0, t, 1e-14, 1e-13)?.re)
}

/// Exact coherence `⟨↑|ρ(t)|↓⟩` of the dephasing model,
/// `ρ_↑↓(0)·e^{−iωt}·exp(−4λ²∫₀ᵗ∫₀^τ Re α)`. Populations are constant.
pub fn brute_force_dephasing_coherence(
    theta: f64,
    omega: f64,
    lambda: f64,
    bath: &BathSpectrum,
    t: f64,
) -> Result<C64> {
    check_theta(theta)?;
    bath.validate()?;
    let rho0 = 0.5 * theta.sin();
    let decay = (-4.0 * lambda * lambda * decoherence_exponent(bath, t)?).exp();
    Ok(C64::from_polar(rho0 * decay, -omega * t))
}

/// `sin²(xt/2)/x²`, continuous at `x = 0`.
fn sin_half_sq_over_sq(x: f64, t: f64) -> f64 {
    if (x * t).abs() < 1e-4 {
        let y = x * t;
        0.25 * t * t * (1.0 - y * y / 12.0)
    } else {
        (0.5 * x * t).sin().powi(2) / (x * x)
    }
}

/// The same coherence from the discretized bath, by coherent-state algebra:
/// under `σ_z = ±1` each mode is displaced to `±β_k(t)` with
/// `|β_k|² = 4λ²|g_k|² sin²(ω_k t/2)/ω_k²`, and the coherence picks up
/// `Π_k ⟨−β_k|β_k⟩ = exp(−2Σ_k|β_k|²)`.
pub fn discretized_dephasing_coherence(
    theta: f64,
    omega: f64,
    lambda: f64,
    dbath: &DiscretizedBath,
    t: f64,
) -> Result<C64> {
    check_theta(theta)?;
    dbath.check_window(t)?;
    let exponent: f64 = dbath
        .frequencies
        .iter()
        .zip(&dbath.couplings)
        .map(|(w, g)| 8.0 * lambda * lambda * g.norm_sqr() * sin_half_sq_over_sq(*w, t))
        .sum();
    Ok(C64::from_polar(0.5 * theta.sin() * (-exponent).exp(), -omega * t))
}
