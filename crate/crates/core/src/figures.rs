//! Figure data: a single trajectory with its
//! solid-angle overlay, and θ sweeps of the ensemble geometric phase for
//! both models.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ensemble::{run_basis_ensemble, sweep_theta, Checkpoint, EnsembleConfig};
use crate::error::Result;
use crate::noise::{derive_seed, sample_noise, GeneratorKind};
use crate::oracle::{
    dephasing_markov_value, dephasing_phase_analytic, dephasing_shift, dissipative_markov_value,
    dissipative_phases_analytic,
};
use crate::phase::{pancharatnam_series, solid_angle_geodesic_closed};
use crate::qsd::{integrate_trajectory, OOperatorSpec};
use crate::stats::{nearest_branch, wrap_angle};
use crate::types::{BathSpectrum, BlochPath, CouplingKind, SystemModel, TimeGrid};

/// γ values of the dissipative sweep.
pub const FIGURE2_GAMMAS: [f64; 4] = [0.1, 0.5, 1.2, 100.0];
/// γ values of the dephasing sweep.
pub const FIGURE3_GAMMAS: [f64; 4] = [100.0, 7.0, 0.3, 0.7];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Figure1Row {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Pancharatnam phase of the path up to `t`.
    pub gamma_geo: f64,
    /// Half the geodesic-closed solid angle of the same path.
    pub half_solid_angle: f64,
}

/// One dissipative trajectory (`ω = λ = 1`, `θ = 1`, `Γ = γ = 1`, `Ω = 0`
/// by default) sampled at `samples` evenly spaced times.
pub fn figure1(
    model: &SystemModel,
    bath: &BathSpectrum,
    grid: &TimeGrid,
    root_seed: u64,
    samples: usize,
) -> Result<Vec<Figure1Row>> {
    let ospec = OOperatorSpec::for_model(model, bath, grid)?;
    let noise = sample_noise(bath, grid, derive_seed(root_seed, 0), GeneratorKind::Recursive)?;
    let traj = integrate_trajectory(model, bath, &ospec, &noise)?;
    let path = traj.bloch_path()?;
    let series = pancharatnam_series(&traj.states)?;
    let n = grid.n_steps();
    let samples = samples.clamp(2, n + 1);
    let mut indices: Vec<usize> = (0..samples).map(|k| k * n / (samples - 1)).collect();
    indices.dedup();
    indices
        .into_iter()
        .map(|j| {
            let prefix = BlochPath(path.points()[..=j].to_vec());
            let half = 0.5 * solid_angle_geodesic_closed(&prefix)?;
            let p = path.points()[j];
            // Report the Pancharatnam value on the branch of the solid angle.
            Ok(Figure1Row {
                t: grid.time(j),
                x: p[0],
                y: p[1],
                z: p[2],
                gamma_geo: nearest_branch(series[j], half),
                half_solid_angle: half,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub analytic: f64,
    pub ensemble: f64,
    pub std_error: f64,
    /// Markov-limit reference on which branch values are reported.
    pub markov: f64,
    pub indeterminate: bool,
}

impl SweepRow {
    /// `|ensemble − analytic|` modulo 2π.
    pub fn deviation(&self) -> f64 {
        wrap_angle(self.ensemble - self.analytic).abs()
    }
}

/// Inputs shared by the θ sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub omega: f64,
    pub lambda: f64,
    pub coupling_rate: f64,
    pub n_traj: usize,
    pub dt: f64,
    pub root_seed: u64,
    pub workers: Option<usize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            omega: 1.0,
            lambda: 1.0,
            coupling_rate: 1.0,
            n_traj: 20_000,
            dt: 1e-3,
            root_seed: 1,
            workers: None,
        }
    }
}

fn sweep(
    coupling: CouplingKind,
    bath: &BathSpectrum,
    thetas: &[f64],
    s: &SweepSettings,
    checkpoint: Option<&Checkpoint>,
) -> Result<Vec<SweepRow>> {
    let model = SystemModel::new(s.omega, s.lambda, coupling, 0.0)?;
    let t = model.period();
    let grid = TimeGrid::with_step(t, s.dt)?;
    let cfg = EnsembleConfig::new(model, *bath, grid, s.n_traj, s.root_seed);
    let blocks = run_basis_ensemble(&cfg, s.workers, checkpoint)?;
    let phases = sweep_theta(&blocks, thetas)?;
    thetas
        .iter()
        .zip(phases)
        .map(|(&theta, p)| {
            let (analytic, markov) = match coupling {
                CouplingKind::Dissipative => {
                    let (tot, dyn_) = dissipative_phases_analytic(theta, s.omega, s.lambda, bath, t)?;
                    (tot - dyn_, dissipative_markov_value(theta, s.omega, s.lambda))
                }
                CouplingKind::Dephasing => (
                    dephasing_phase_analytic(theta, s.omega, s.lambda, bath, t)?,
                    dephasing_markov_value(theta),
                ),
            };
            Ok(SweepRow {
                theta,
                analytic: nearest_branch(analytic, markov),
                ensemble: nearest_branch(p.geometric.value, markov),
                std_error: p.geometric.std_error,
                markov,
                indeterminate: p.geometric.indeterminate,
            })
        })
        .collect()
}

/// Dissipative θ sweep at `t = 2π/ω`, `Ω = 0`.
pub fn figure2_curve(
    gamma: f64,
    thetas: &[f64],
    s: &SweepSettings,
    checkpoint: Option<&Checkpoint>,
) -> Result<Vec<SweepRow>> {
    let bath = BathSpectrum::new(s.coupling_rate, gamma, 0.0)?;
    sweep(CouplingKind::Dissipative, &bath, thetas, s, checkpoint)
}

/// Dephasing θ sweep at `t = 2π/ω` with bath center `omega_center`
/// (`Ω = ω` in the `figure3` data).
pub fn figure3_curve(
    gamma: f64,
    omega_center: f64,
    thetas: &[f64],
    s: &SweepSettings,
    checkpoint: Option<&Checkpoint>,
) -> Result<Vec<SweepRow>> {
    let bath = BathSpectrum::new(s.coupling_rate, gamma, omega_center)?;
    sweep(CouplingKind::Dephasing, &bath, thetas, s, checkpoint)
}

/// Shift `γ_G^(M) − γ̄_G` implied by a dephasing sweep row.
pub fn implied_shift(row: &SweepRow) -> f64 {
    nearest_branch(row.markov - row.ensemble, 0.0)
}

/// `(γ*, shift(γ*))` maximizing the shift over a log-spaced scan of
/// `[gamma_lo, gamma_hi]`, refined by golden-section search.
pub fn shift_maximum(omega: f64, lambda: f64, coupling_rate: f64, gamma_lo: f64, gamma_hi: f64) -> (f64, f64) {
    let f = |g: f64| dephasing_shift(omega, lambda, coupling_rate, g);
    let n = 400;
    let (llo, lhi) = (gamma_lo.ln(), gamma_hi.ln());
    let scan: Vec<f64> = (0..=n)
        .map(|k| (llo + (lhi - llo) * k as f64 / n as f64).exp())
        .collect();
    let best = (0..=n).max_by(|&a, &b| f(scan[a]).total_cmp(&f(scan[b]))).unwrap_or(0);
    let (mut a, mut b) = (scan[best.saturating_sub(1)], scan[(best + 1).min(n)]);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let g = 0.5 * (a + b);
    (g, f(g))
}

/// `π(cosθ − 1)`, kept for symmetry with the dissipative reference.
pub fn closed_system_dephasing(theta: f64) -> f64 {
    PI * (theta.cos() - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_peak_location() {
        let (g, v) = shift_maximum(1.0, 1.0, 1.0, 0.01, 100.0);
        assert!((g - 1.0).abs() < 0.1, "{g}");
        assert!((v - 1.32).abs() < 0.01, "{v}");
    }

    #[test]
    fn figure1_small_run() {
        let model = SystemModel::new(1.0, 1.0, CouplingKind::Dissipative, 1.0).unwrap();
        let bath = BathSpectrum::new(1.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(2.0 * PI, 2000).unwrap();
        let rows = figure1(&model, &bath, &grid, 5, 50).unwrap();
        assert_eq!(rows.len(), 50);
        for r in rows {
            assert!((r.gamma_geo - r.half_solid_angle).abs() < 1e-2, "{r:?}");
        }
    }
}
