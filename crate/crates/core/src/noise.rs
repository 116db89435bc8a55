//! Bath correlation function and colored Gaussian noise synthesis.
//!
//! The stored noise value `u_j` is the quantity multiplying `L` in the QSD
//! equation, i.e. `z*_t` at `t_j`. Its statistics are fixed by
//!
//! ```text
//! M[u_j] = 0,   M[conj(u_j)·u_k] = α(t_j, t_k),   M[u_j·u_k] = 0,
//! ```
//!
//! with `α(t,s) = (Γγ/2)·exp(−γ|t−s| − iΩ(t−s))`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BathSpectrum, TimeGrid, C64};

/// Largest grid the dense covariance factorization accepts.
pub const MAX_FACTOR_POINTS: usize = 8193;

/// `α(t,s) = (Γγ/2)·exp(−γ|t−s| − iΩ(t−s))`.
pub fn correlation(bath: &BathSpectrum, t: f64, s: f64) -> C64 {
    let tau = t - s;
    let decay = C64::new(-bath.inverse_memory * tau.abs(), -bath.center_frequency * tau);
    bath.variance() * decay.exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Exact one-step recursion of the complex Ornstein–Uhlenbeck process; O(n).
    Recursive,
    /// Cholesky factor of the assembled kernel matrix times white noise; O(n²).
    CovarianceFactor,
}

/// One discretized noise path `u_j ≈ z*_{t_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub grid: TimeGrid,
    pub values: Vec<C64>,
    pub seed: u64,
    pub kind: GeneratorKind,
}

impl NoiseRealization {
    /// Linear interpolation between grid values.
    pub fn value_at(&self, t: f64) -> C64 {
        let dt = self.grid.dt();
        let x = (t / dt).clamp(0.0, self.grid.n_steps() as f64);
        let j = (x.floor() as usize).min(self.grid.n_steps() - 1);
        let frac = x - j as f64;
        self.values[j] + (self.values[j + 1] - self.values[j]) * frac
    }
}

/// Per-trajectory seed from a root seed and a trajectory index (SplitMix64
/// finalizer over the mixed pair). Independent of evaluation order.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Standard circular complex Gaussian, `M[|w|²] = 1`, `M[w²] = 0`.
fn circular_gaussian<R: rand::Rng>(rng: &mut R) -> C64 {
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    C64::new(x, y) * std::f64::consts::FRAC_1_SQRT_2
}

/// Reusable sampler for one `(bath, grid, kind)` triple. The covariance
/// factor, when used, is computed once and shared.
#[derive(Debug, Clone)]
pub struct NoiseGenerator {
    bath: BathSpectrum,
    grid: TimeGrid,
    kind: GeneratorKind,
    factor: Option<Arc<DMatrix<C64>>>,
}

impl NoiseGenerator {
    pub fn new(bath: &BathSpectrum, grid: &TimeGrid, kind: GeneratorKind) -> Result<Self> {
        bath.validate()?;
        let factor = match kind {
            GeneratorKind::CovarianceFactor if bath.variance() > 0.0 => Some(Arc::new(covariance_factor(bath, grid)?)),
            _ => None,
        };
        Ok(Self {
            bath: *bath,
            grid: *grid,
            kind,
            factor,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn sample(&self, seed: u64) -> NoiseRealization {
        let mut values = Vec::with_capacity(self.grid.len());
        self.sample_into(seed, &mut values);
        NoiseRealization {
            grid: self.grid,
            values,
            seed,
            kind: self.kind,
        }
    }

    /// Fills `out` with the noise path for `seed`, reusing its allocation.
    pub fn sample_into(&self, seed: u64, out: &mut Vec<C64>) {
        let n = self.grid.len();
        out.clear();
        let variance = self.bath.variance();
        if variance == 0.0 {
            out.resize(n, C64::new(0.0, 0.0));
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match (&self.kind, &self.factor) {
            (GeneratorKind::CovarianceFactor, Some(l)) => {
                let white: Vec<C64> = (0..n).map(|_| circular_gaussian(&mut rng)).collect();
                for j in 0..n {
                    let mut acc = C64::new(0.0, 0.0);
                    for (k, w) in white.iter().enumerate().take(j + 1) {
                        acc += l[(j, k)] * w;
                    }
                    out.push(acc);
                }
            }
            _ => {
                let dt = self.grid.dt();
                let step = (-self.bath.decay() * dt).exp();
                let kick = (variance * (1.0 - (-2.0 * self.bath.inverse_memory * dt).exp())).sqrt();
                let mut zeta = variance.sqrt() * circular_gaussian(&mut rng);
                out.push(zeta.conj());
                for _ in 1..n {
                    zeta = step * zeta + kick * circular_gaussian(&mut rng);
                    out.push(zeta.conj());
                }
            }
        }
    }
}

/// Lower Cholesky factor `L` of `A_jk = M[u_j·conj(u_k)] = α(t_k, t_j)`.
fn covariance_factor(bath: &BathSpectrum, grid: &TimeGrid) -> Result<DMatrix<C64>> {
    let n = grid.len();
    if n > MAX_FACTOR_POINTS {
        return Err(Error::InvalidParameter(format!(
            "covariance-factor generator supports at most {MAX_FACTOR_POINTS} grid points, got {n}"
        )));
    }
    let times: Vec<f64> = grid.times().collect();
    let a = DMatrix::from_fn(n, n, |j, k| correlation(bath, times[k], times[j]));
    a.cholesky().map(|c| c.unpack()).ok_or(Error::Factorization {
        t_final: grid.t_final(),
        n_steps: grid.n_steps(),
    })
}

/// One noise path. Builds a fresh generator; use [`NoiseGenerator`] when
/// sampling many paths on the same grid.
pub fn sample_noise(bath: &BathSpectrum, grid: &TimeGrid, seed: u64, kind: GeneratorKind) -> Result<NoiseRealization> {
    Ok(NoiseGenerator::new(bath, grid, kind)?.sample(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bath(g: f64, gamma: f64, omega: f64) -> BathSpectrum {
        BathSpectrum::new(g, gamma, omega).unwrap()
    }

    #[test]
    fn correlation_at_coincidence() {
        let a = correlation(&bath(1.0, 2.0, 0.0), 0.7, 0.7);
        assert_eq!(a, C64::new(1.0, 0.0));
    }

    #[test]
    fn correlation_half_period_value() {
        // Γγ/2 · e^{−π} · e^{−iπ}
        let a = correlation(&bath(1.0, 1.0, 1.0), std::f64::consts::PI, 0.0);
        let expected = -0.5 * (-std::f64::consts::PI).exp();
        assert!((a.re - expected).abs() < 1e-15);
        assert!(a.im.abs() < 1e-15);
        assert!((a.re + 0.021_606_959_3).abs() < 1e-9);
    }

    #[test]
    fn correlation_is_hermitian() {
        let b = bath(1.3, 0.7, 2.1);
        for &(t, s) in &[(0.0, 1.0), (2.5, 0.3), (1.1, 1.1), (-3.0, 4.0)] {
            assert!((correlation(&b, t, s) - correlation(&b, s, t).conj()).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_kernel_gives_zero_noise() {
        let grid = TimeGrid::new(1.0, 50).unwrap();
        for kind in [GeneratorKind::Recursive, GeneratorKind::CovarianceFactor] {
            let n = sample_noise(&bath(0.0, 1.0, 0.0), &grid, 3, kind).unwrap();
            assert_eq!(n.values.len(), 51);
            assert!(n.values.iter().all(|z| *z == C64::new(0.0, 0.0)));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let b = bath(1.0, 1.0, 0.5);
        for kind in [GeneratorKind::Recursive, GeneratorKind::CovarianceFactor] {
            let a = sample_noise(&b, &grid, 42, kind).unwrap();
            let c = sample_noise(&b, &grid, 42, kind).unwrap();
            let d = sample_noise(&b, &grid, 43, kind).unwrap();
            assert_eq!(a.values, c.values);
            assert_ne!(a.values, d.values);
            assert!(a.values.iter().all(|z| z.is_finite()));
        }
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen: Vec<u64> = (0..1000).map(|i| derive_seed(7, i)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 1000);
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn interpolation_hits_grid_values() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let n = sample_noise(&bath(1.0, 1.0, 0.0), &grid, 1, GeneratorKind::Recursive).unwrap();
        assert!((n.value_at(0.3) - n.values[3]).norm() < 1e-12);
        let mid = n.value_at(0.35);
        assert!((mid - 0.5 * (n.values[3] + n.values[4])).norm() < 1e-12);
        assert_eq!(n.value_at(1.0), n.values[10]);
    }

    #[test]
    fn oversized_grid_is_rejected() {
        let grid = TimeGrid::new(1.0, MAX_FACTOR_POINTS).unwrap();
        let err = NoiseGenerator::new(&bath(1.0, 1.0, 0.0), &grid, GeneratorKind::CovarianceFactor).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }
}
