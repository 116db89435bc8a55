//! Total, dynamical and geometric phases of single trajectories and of
//! trajectory ensembles, plus the Bloch-sphere solid-angle cross-check.
//!
//! Conventions: `γ_tot = arg⟨ψ_0|ψ_N⟩`, `γ_dyn = Σ_j arg⟨ψ_j|ψ_{j+1}⟩` and
//! `γ_G = γ_tot − γ_dyn = −arg[⟨ψ_0|ψ_1⟩⋯⟨ψ_{N−1}|ψ_N⟩⟨ψ_N|ψ_0⟩]`.
//! `γ_tot` is unwrapped continuously along the path, so the reported values
//! are specific representatives; use [`wrap_angle`] or [`nearest_branch`] to
//! compare modulo 2π.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsd::{Generator, Trajectory, DEFAULT_NORM_FLOOR};
use crate::stats::{jackknife_error, jackknife_error_complex, nearest_branch, wrap_angle, ComplexSum};
use crate::types::{BlochPath, CouplingKind, DensityMatrix, PureState, SystemModel, TimeGrid, C64};

/// Overlaps of normalized neighbors below this are treated as orthogonal.
pub const OVERLAP_FLOOR: f64 = 1e-12;

/// An ensemble average is "indeterminate" below this many standard errors.
pub const INDETERMINATE_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseDecomposition {
    pub gamma_tot: f64,
    pub gamma_dyn: f64,
    pub gamma_geo: f64,
    pub n_traj: usize,
    pub std_error: f64,
}

impl PhaseDecomposition {
    pub fn principal_geo(&self) -> f64 {
        wrap_angle(self.gamma_geo)
    }
}

/// A phase estimate with its jackknife error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    /// Unwrapped representative.
    pub value: f64,
    pub std_error: f64,
    pub n_traj: usize,
    /// The averaged quantity was within [`INDETERMINATE_RATIO`] standard
    /// errors of zero; the phase is not resolved.
    pub indeterminate: bool,
}

impl Estimate {
    pub fn principal(&self) -> f64 {
        wrap_angle(self.value)
    }
}

fn normalized_states(states: &[PureState]) -> Result<Vec<PureState>> {
    states
        .iter()
        .enumerate()
        .map(|(index, s)| {
            s.normalized(DEFAULT_NORM_FLOOR).ok_or(Error::VanishingNorm {
                index,
                floor: DEFAULT_NORM_FLOOR,
            })
        })
        .collect()
}

/// Continuous phase of `series`, skipping entries with magnitude below
/// `floor`. The last entry must be resolvable.
fn unwrap_skipping(series: &[C64], floor: f64) -> Option<f64> {
    let mut acc = 0.0;
    let mut last: Option<C64> = None;
    for z in series {
        if z.norm() < floor {
            continue;
        }
        acc = match last {
            None => z.arg(),
            Some(prev) => acc + (z / prev).arg(),
        };
        last = Some(*z);
    }
    let end = series.last()?;
    (end.norm() >= floor).then_some(acc)
}

/// Pancharatnam decomposition of a chain of (unnormalized) states.
pub fn pancharatnam_states(states: &[PureState]) -> Result<PhaseDecomposition> {
    let psi = normalized_states(states)?;
    let Some(first) = psi.first() else {
        return Err(Error::InvalidParameter("empty state chain".into()));
    };
    let mut gamma_dyn = 0.0;
    for (index, w) in psi.windows(2).enumerate() {
        let link = w[0].inner(&w[1]);
        if link.norm() < OVERLAP_FLOOR {
            return Err(Error::UndefinedPhase { index });
        }
        gamma_dyn += link.arg();
    }
    let overlaps: Vec<C64> = psi.iter().map(|s| first.inner(s)).collect();
    let gamma_tot = unwrap_skipping(&overlaps, OVERLAP_FLOOR).ok_or(Error::UndefinedTotalPhase)?;
    Ok(PhaseDecomposition {
        gamma_tot,
        gamma_dyn,
        gamma_geo: gamma_tot - gamma_dyn,
        n_traj: 1,
        std_error: 0.0,
    })
}

/// Pancharatnam phase of one trajectory.
pub fn pancharatnam_phase(traj: &Trajectory) -> Result<PhaseDecomposition> {
    pancharatnam_states(&traj.states)
}

/// `γ_G(t_k)` for every prefix `ψ_0..ψ_k` of the chain.
pub fn pancharatnam_series(states: &[PureState]) -> Result<Vec<f64>> {
    let psi = normalized_states(states)?;
    let mut out = Vec::with_capacity(psi.len());
    out.push(0.0);
    let mut dyn_acc = 0.0;
    let mut tot = 0.0;
    let mut last_overlap = psi[0].inner(&psi[0]);
    for k in 1..psi.len() {
        let link = psi[k - 1].inner(&psi[k]);
        if link.norm() < OVERLAP_FLOOR {
            return Err(Error::UndefinedPhase { index: k - 1 });
        }
        dyn_acc += link.arg();
        let ov = psi[0].inner(&psi[k]);
        if ov.norm() >= OVERLAP_FLOOR {
            tot += (ov / last_overlap).arg();
            last_overlap = ov;
            out.push(tot - dyn_acc);
        } else {
            out.push(f64::NAN);
        }
    }
    Ok(out)
}

/// Geometric phase from the reference section `χ = ξ·ψ̃`,
/// `ξ = ⟨ψ̃(t)|ψ̃(0)⟩/|⟨ψ̃(t)|ψ̃(0)⟩|`, as `i∫⟨χ|∂_tχ⟩dt`.
///
/// The section part `i∫ξ̇ξ*dt` is accumulated from the exact phase
/// increments of `ξ`; the state part `i∫⟨ψ̃|∂_tψ̃⟩dt` uses forward
/// differences. The result differs from the Pancharatnam value by a
/// discretization error that vanishes as the step shrinks.
pub fn reference_section_states(states: &[PureState]) -> Result<f64> {
    let psi = normalized_states(states)?;
    let xi: Vec<C64> = psi
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let o = s.inner(&psi[0]);
            if o.norm() < OVERLAP_FLOOR {
                Err(Error::SectionUndefined { index })
            } else {
                Ok(o / o.norm())
            }
        })
        .collect::<Result<_>>()?;
    let mut section = 0.0;
    let mut state_part = 0.0;
    for j in 0..psi.len() - 1 {
        section -= (xi[j + 1] * xi[j].conj()).arg();
        let diff = psi[j + 1].add(&psi[j].scale_real(-1.0));
        state_part -= psi[j].inner(&diff).im;
    }
    Ok(section + state_part)
}

pub fn reference_section_phase(traj: &Trajectory) -> Result<f64> {
    reference_section_states(&traj.states)
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn unit(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = dot(&v, &v).sqrt();
    (n > 1e-12).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

/// Signed solid angle of the spherical triangle `(a, b, c)`, positive for
/// counterclockwise order seen from outside.
fn triangle_solid_angle(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    let num = dot(a, &cross(b, c));
    let den = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
    2.0 * num.atan2(den)
}

/// Points along the minor great-circle arc from `a` to `b` (exclusive of
/// both ends), at most `spacing` radians apart.
fn geodesic_points(a: &[f64; 3], b: &[f64; 3], spacing: f64) -> Result<Vec<[f64; 3]>> {
    let cosang = dot(a, b).clamp(-1.0, 1.0);
    let angle = cosang.acos();
    if angle < 1e-15 {
        return Ok(Vec::new());
    }
    if std::f64::consts::PI - angle < 1e-9 {
        return Err(Error::GeodesicAmbiguous);
    }
    let n = ((angle / spacing.max(1e-6)).ceil() as usize).max(1);
    let sin = angle.sin();
    Ok((1..n)
        .map(|k| {
            let s = angle * k as f64 / n as f64;
            let wa = (angle - s).sin() / sin;
            let wb = s.sin() / sin;
            [wa * a[0] + wb * b[0], wa * a[1] + wb * b[1], wa * a[2] + wb * b[2]]
        })
        .collect())
}

fn fan_area(points: &[[f64; 3]], apex: &[f64; 3]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| triangle_solid_angle(apex, &points[i], &points[(i + 1) % n]))
        .sum()
}

fn wrap_solid_angle(x: f64) -> f64 {
    let four_pi = 4.0 * std::f64::consts::PI;
    let mut y = x.rem_euclid(four_pi);
    if y > 2.0 * std::f64::consts::PI {
        y -= four_pi;
    }
    y
}

/// Solid angle enclosed by the path closed with the minor geodesic from its
/// last point back to its first, in `(−2π, 2π]`.
///
/// Sign: positive for clockwise traversal seen from outside the sphere, so
/// that half the returned value is the geometric phase of a two-level
/// state following the path (mod 2π).
pub fn solid_angle_geodesic_closed(path: &BlochPath) -> Result<f64> {
    let pts = path.points();
    if pts.len() < 2 {
        return Ok(0.0);
    }
    if pts.iter().any(|p| (dot(p, p) - 1.0).abs() > 1e-9) {
        return Err(Error::InvalidParameter("Bloch path points must be unit vectors".into()));
    }
    let mean_step = pts
        .windows(2)
        .map(|w| dot(&w[0], &w[1]).clamp(-1.0, 1.0).acos())
        .sum::<f64>()
        / (pts.len() - 1) as f64;
    let last = pts[pts.len() - 1];
    let mut closed: Vec<[f64; 3]> = pts.to_vec();
    closed.extend(geodesic_points(&last, &pts[0], mean_step.max(1e-3))?);

    // Two fan apexes kept far from the antipodes of every vertex.
    let mut candidates: Vec<[f64; 3]> = vec![
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
    ];
    let centroid = closed
        .iter()
        .fold([0.0; 3], |acc, p| [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]);
    if let Some(c) = unit(centroid) {
        candidates.push(c);
    }
    let mut scored: Vec<(f64, [f64; 3])> = candidates
        .into_iter()
        .map(|apex| {
            let clearance = closed.iter().map(|p| 1.0 + dot(&apex, p)).fold(f64::INFINITY, f64::min);
            (clearance, apex)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let a1 = wrap_solid_angle(fan_area(&closed, &scored[0].1));
    let a2 = wrap_solid_angle(fan_area(&closed, &scored[1].1));
    let gap = wrap_solid_angle(a1 - a2).abs();
    if gap > 1e-9 {
        return Err(Error::NumericalDegeneracy(format!(
            "fan areas disagree by {gap:.3e} sr"
        )));
    }
    Ok(wrap_solid_angle(-a1))
}

/// Per-block sums over trajectories sharing one grid, model and bath.
///
/// Series are plain sums; the scalar end-point quantities use compensated
/// summation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSums {
    pub count: usize,
    /// `Σ ⟨ψ(0)|ψ(t_j)⟩`, `j = 0..=n`.
    pub overlap: Vec<C64>,
    /// `Σ ⟨ψ(t_j)|ψ(t_{j+1})⟩`, `j = 0..n`.
    pub links: Vec<C64>,
    /// `Σ ⟨ψ(0)|ψ(T)⟩`.
    pub final_overlap: ComplexSum,
    /// `Σ ∫⟨ψ|h|ψ⟩dt` (trapezoid rule on the grid).
    pub dyn_integral: ComplexSum,
    /// `Σ |ψ(t_j)⟩⟨ψ(t_j)|`; empty unless requested.
    pub density: Vec<DensityMatrix>,
}

impl EnsembleSums {
    pub fn new(grid: &TimeGrid, with_density: bool) -> Self {
        let n = grid.n_steps();
        Self {
            count: 0,
            overlap: vec![C64::new(0.0, 0.0); n + 1],
            links: vec![C64::new(0.0, 0.0); n],
            final_overlap: ComplexSum::default(),
            dyn_integral: ComplexSum::default(),
            density: if with_density {
                vec![DensityMatrix::zero(); n + 1]
            } else {
                Vec::new()
            },
        }
    }

    pub fn n_steps(&self) -> usize {
        self.links.len()
    }

    /// Adds one trajectory's unnormalized states. `noise` and `obar` are the
    /// grid values entering the generator.
    pub fn accumulate(&mut self, states: &[PureState], generator: &Generator, noise: &[C64], obar: &[C64], dt: f64) {
        let n = self.n_steps();
        debug_assert_eq!(states.len(), n + 1);
        let psi0 = states[0];
        let mut integral = C64::new(0.0, 0.0);
        for j in 0..=n {
            let s = &states[j];
            self.overlap[j] += psi0.inner(s);
            if j < n {
                self.links[j] += s.inner(&states[j + 1]);
            }
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            integral += w * generator.expectation(noise[j], obar[j], s);
            if !self.density.is_empty() {
                self.density[j] = self.density[j].add(&DensityMatrix::from_pure(s));
            }
        }
        self.final_overlap.add(psi0.inner(&states[n]));
        self.dyn_integral.add(integral * dt);
        self.count += 1;
    }

    pub fn accumulate_trajectory(&mut self, traj: &Trajectory) {
        self.accumulate(&traj.states, &traj.generator(), &traj.noise, &traj.obar, traj.grid.dt());
    }

    pub fn merge(&mut self, other: &EnsembleSums) {
        self.count += other.count;
        for (a, b) in self.overlap.iter_mut().zip(other.overlap.iter()) {
            *a += b;
        }
        for (a, b) in self.links.iter_mut().zip(other.links.iter()) {
            *a += b;
        }
        self.final_overlap.merge(&other.final_overlap);
        self.dyn_integral.merge(&other.dyn_integral);
        if self.density.is_empty() && !other.density.is_empty() && self.count == other.count {
            self.density = other.density.clone();
        } else {
            for (a, b) in self.density.iter_mut().zip(other.density.iter()) {
                *a = a.add(b);
            }
        }
    }

    fn total(blocks: &[EnsembleSums]) -> Result<EnsembleSums> {
        let mut it = blocks.iter();
        let mut acc = it
            .next()
            .cloned()
            .ok_or_else(|| Error::Configuration("empty ensemble".into()))?;
        for b in it {
            if b.n_steps() != acc.n_steps() {
                return Err(Error::Configuration("ensemble blocks have mismatched grids".into()));
            }
            acc.merge(b);
        }
        if acc.count == 0 {
            return Err(Error::Configuration("empty ensemble".into()));
        }
        Ok(acc)
    }

    /// Mean density matrices `M[|ψ⟩⟨ψ|]` on the grid.
    pub fn mean_density(&self) -> Vec<DensityMatrix> {
        let inv = 1.0 / self.count as f64;
        self.density.iter().map(|d| d.scaled(inv)).collect()
    }
}

/// Leave-one-block-out complements of the total, paired with their counts.
fn complements(blocks: &[EnsembleSums], total: &EnsembleSums) -> Vec<(C64, C64, usize)> {
    blocks
        .iter()
        .map(|b| {
            (
                total.final_overlap.value() - b.final_overlap.value(),
                total.dyn_integral.value() - b.dyn_integral.value(),
                total.count - b.count,
            )
        })
        .collect()
}

/// All ensemble estimates for one initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePhases {
    pub total: Estimate,
    pub dynamical: Estimate,
    /// `γ̄_tot − γ̄_dyn`.
    pub geometric: Estimate,
    /// Mean imaginary part of `−i∫⟨ψ|h|ψ⟩dt`; zero in expectation.
    pub dynamical_residue: f64,
    /// `|M⟨ψ(0)|ψ(T)⟩|`.
    pub overlap_magnitude: f64,
}

impl EnsemblePhases {
    pub fn decomposition(&self) -> PhaseDecomposition {
        PhaseDecomposition {
            gamma_tot: self.total.value,
            gamma_dyn: self.dynamical.value,
            gamma_geo: self.geometric.value,
            n_traj: self.geometric.n_traj,
            std_error: self.geometric.std_error,
        }
    }
}

/// Total, dynamical and geometric phase from block sums.
pub fn ensemble_phases(blocks: &[EnsembleSums]) -> Result<EnsemblePhases> {
    let total = EnsembleSums::total(blocks)?;
    let n = total.count as f64;
    let mean_series: Vec<C64> = total.overlap.iter().map(|z| z / n).collect();
    let final_mean = total.final_overlap.value() / n;
    let tot_full = match unwrap_skipping(&mean_series, 1e-300) {
        Some(v) => nearest_branch(final_mean.arg(), v),
        None => return Err(Error::UndefinedTotalPhase),
    };
    let dyn_mean = total.dyn_integral.value() / n;
    let dyn_full = dyn_mean.im;

    let comps = if blocks.len() >= 2 {
        complements(blocks, &total)
    } else {
        Vec::new()
    };
    let tot_reps: Vec<f64> = comps
        .iter()
        .map(|(ov, _, c)| nearest_branch((ov / *c as f64).arg(), tot_full))
        .collect();
    let dyn_reps: Vec<f64> = comps.iter().map(|(_, d, c)| d.im / *c as f64).collect();
    let geo_reps: Vec<f64> = tot_reps.iter().zip(&dyn_reps).map(|(t, d)| t - d).collect();
    let ov_reps: Vec<C64> = comps.iter().map(|(ov, _, c)| ov / *c as f64).collect();
    let ov_error = jackknife_error_complex(&ov_reps);
    let count = total.count;
    let indeterminate = ov_reps.len() >= 2 && final_mean.norm() < INDETERMINATE_RATIO * ov_error;
    Ok(EnsemblePhases {
        total: Estimate {
            value: tot_full,
            std_error: jackknife_error(&tot_reps),
            n_traj: count,
            indeterminate,
        },
        dynamical: Estimate {
            value: dyn_full,
            std_error: jackknife_error(&dyn_reps),
            n_traj: count,
            indeterminate: false,
        },
        geometric: Estimate {
            value: tot_full - dyn_full,
            std_error: jackknife_error(&geo_reps),
            n_traj: count,
            indeterminate,
        },
        dynamical_residue: -dyn_mean.re,
        overlap_magnitude: final_mean.norm(),
    })
}

/// Product-formula geometric phase `−arg(I)` with
/// `I = Π_j M⟨ψ(t_j)|ψ(t_{j+1})⟩ · M⟨ψ(T)|ψ(0)⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductPhase {
    pub estimate: Estimate,
    /// `log|I|`.
    pub log_magnitude: f64,
}

pub fn ensemble_product_phase(blocks: &[EnsembleSums]) -> Result<ProductPhase> {
    let phases = ensemble_phases(blocks)?;
    let total = EnsembleSums::total(blocks)?;
    let n = total.count as f64;
    let tot = phases.total.value;
    let use_jackknife = blocks.len() >= 2;

    let mut link_args = 0.0;
    let mut log_mag = (total.final_overlap.value() / n).norm().ln();
    for (index, sum) in total.links.iter().enumerate() {
        let mean = sum / n;
        if use_jackknife {
            let reps: Vec<C64> = blocks
                .iter()
                .map(|b| (sum - b.links[index]) / (total.count - b.count) as f64)
                .collect();
            let se = jackknife_error_complex(&reps);
            if mean.norm() < INDETERMINATE_RATIO * se {
                return Err(Error::IndeterminateLink {
                    index,
                    magnitude: mean.norm(),
                    std_error: se,
                });
            }
        } else if mean.norm() == 0.0 {
            return Err(Error::UndefinedPhase { index });
        }
        link_args += mean.arg();
        log_mag += mean.norm().ln();
    }
    let value = tot - link_args;

    let reps: Vec<f64> = if use_jackknife {
        blocks
            .iter()
            .map(|b| {
                let c = (total.count - b.count) as f64;
                let t = nearest_branch(((total.final_overlap.value() - b.final_overlap.value()) / c).arg(), tot);
                let l: f64 = total.links.iter().zip(&b.links).map(|(s, x)| ((s - x) / c).arg()).sum();
                t - l
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(ProductPhase {
        estimate: Estimate {
            value,
            std_error: jackknife_error(&reps),
            n_traj: total.count,
            indeterminate: phases.total.indeterminate,
        },
        log_magnitude: log_mag,
    })
}

/// Dynamical phase from the ensemble density for a noise-independent Ō:
/// `γ̄_dyn = −∫dτ {Tr[H ρ(τ)] + 2 Im Tr[L†Ō(τ) ρ(τ)]}`.
pub fn dynamical_phase_from_density(
    blocks: &[EnsembleSums],
    model: &SystemModel,
    obar: &[C64],
    grid: &TimeGrid,
) -> Result<Estimate> {
    let total = EnsembleSums::total(blocks)?;
    if total.density.len() != grid.len() || obar.len() != grid.len() {
        return Err(Error::Configuration(
            "density sums or Ō values do not match the grid".into(),
        ));
    }
    let integrate = |rho: &mut dyn Iterator<Item = DensityMatrix>, count: f64| -> f64 {
        let dt = grid.dt();
        let n = grid.n_steps();
        let mut acc = 0.0;
        for (j, d) in rho.enumerate() {
            let d = d.scaled(1.0 / count);
            let energy = 0.5 * model.omega * (d.population_up() - d.population_down());
            let lo = match model.coupling {
                CouplingKind::Dissipative => model.lambda * obar[j] * d.entries[0][0],
                CouplingKind::Dephasing => model.lambda * obar[j] * d.trace(),
            };
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            acc += w * (energy + 2.0 * lo.im);
        }
        -acc * dt
    };
    let full = integrate(&mut total.density.iter().copied(), total.count as f64);
    let reps: Vec<f64> = if blocks.len() >= 2 {
        blocks
            .iter()
            .map(|b| {
                let mut it = total
                    .density
                    .iter()
                    .zip(&b.density)
                    .map(|(t, x)| t.add(&x.scaled(-1.0)));
                integrate(&mut it, (total.count - b.count) as f64)
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(Estimate {
        value: full,
        std_error: jackknife_error(&reps),
        n_traj: total.count,
        indeterminate: false,
    })
}

/// Splits a trajectory collection into at most `blocks` contiguous blocks.
pub fn block_sums(trajs: &[Trajectory], blocks: usize, with_density: bool) -> Result<Vec<EnsembleSums>> {
    let first = trajs
        .first()
        .ok_or_else(|| Error::Configuration("empty trajectory collection".into()))?;
    for t in trajs {
        if t.grid != first.grid || t.model != first.model || t.bath != first.bath {
            return Err(Error::Configuration(
                "trajectories do not share grid, model and bath".into(),
            ));
        }
    }
    Ok(crate::stats::block_ranges(trajs.len(), blocks)
        .into_iter()
        .map(|r| {
            let mut s = EnsembleSums::new(&first.grid, with_density);
            for t in &trajs[r] {
                s.accumulate_trajectory(t);
            }
            s
        })
        .collect())
}

/// Default number of jackknife blocks.
pub const DEFAULT_BLOCKS: usize = 50;

/// `γ̄_dyn = −i∫M⟨ψ|h|ψ⟩dτ`.
pub fn ensemble_dynamical_phase(trajs: &[Trajectory]) -> Result<Estimate> {
    Ok(ensemble_phases(&block_sums(trajs, DEFAULT_BLOCKS, false)?)?.dynamical)
}

/// `γ̄_tot = arg M⟨ψ(0)|ψ(T)⟩`.
pub fn ensemble_total_phase(trajs: &[Trajectory]) -> Result<Estimate> {
    Ok(ensemble_phases(&block_sums(trajs, DEFAULT_BLOCKS, false)?)?.total)
}

/// `γ̄_G = −arg(I)` from the product of averaged overlaps.
pub fn ensemble_geometric_phase_product(trajs: &[Trajectory]) -> Result<Estimate> {
    Ok(ensemble_product_phase(&block_sums(trajs, DEFAULT_BLOCKS, false)?)?.estimate)
}

/// `γ̄_tot − γ̄_dyn` with jackknife error.
pub fn ensemble_phase_decomposition(trajs: &[Trajectory]) -> Result<PhaseDecomposition> {
    Ok(ensemble_phases(&block_sums(trajs, DEFAULT_BLOCKS, false)?)?.decomposition())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_noise, GeneratorKind};
    use crate::qsd::{integrate_trajectory, OOperatorSpec};
    use crate::types::{initial_state, BathSpectrum};
    use std::f64::consts::PI;

    fn closed_chain(theta: f64, n: usize, t_final: f64) -> Vec<PureState> {
        (0..=n)
            .map(|j| {
                let t = t_final * j as f64 / n as f64;
                PureState::new(
                    C64::from_polar((0.5 * theta).cos(), -0.5 * t),
                    C64::from_polar((0.5 * theta).sin(), 0.5 * t),
                )
            })
            .collect()
    }

    #[test]
    fn constant_chain_has_no_phase() {
        let s = vec![initial_state(0.7).unwrap(); 20];
        let p = pancharatnam_states(&s).unwrap();
        assert_eq!((p.gamma_tot, p.gamma_dyn, p.gamma_geo), (0.0, 0.0, 0.0));
        assert_eq!(reference_section_states(&s).unwrap(), 0.0);
    }

    #[test]
    fn closed_system_cycle() {
        for &theta in &[0.3, 1.0, 2.0, 2.8] {
            let p = pancharatnam_states(&closed_chain(theta, 4001, 2.0 * PI)).unwrap();
            let expected = PI * (theta.cos() - 1.0);
            assert!(wrap_angle(p.gamma_geo - expected).abs() < 1e-6, "theta {theta}: {p:?}");
            assert!((p.gamma_dyn + PI * theta.cos()).abs() < 1e-6);
        }
    }

    #[test]
    fn reference_section_closed_equator() {
        let r = reference_section_states(&closed_chain(PI / 2.0, 2001, 2.0 * PI)).unwrap();
        assert!(wrap_angle(r + PI).abs() < 1e-3, "{r}");
    }

    #[test]
    fn orthogonal_neighbors_are_rejected() {
        let s = vec![PureState::up(), PureState::down()];
        assert_eq!(pancharatnam_states(&s), Err(Error::UndefinedPhase { index: 0 }));
    }

    #[test]
    fn orthogonal_end_points_are_rejected() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = vec![
            PureState::up(),
            PureState::new(C64::new(h, 0.0), C64::new(h, 0.0)),
            PureState::down(),
        ];
        assert_eq!(pancharatnam_states(&s), Err(Error::UndefinedTotalPhase));
        assert_eq!(reference_section_states(&s), Err(Error::SectionUndefined { index: 2 }));
    }

    #[test]
    fn solid_angle_basics() {
        let equator: Vec<[f64; 3]> = (0..=400)
            .map(|k| {
                let phi = 2.0 * PI * k as f64 / 400.0;
                [phi.cos(), phi.sin(), 0.0]
            })
            .collect();
        let a = solid_angle_geodesic_closed(&BlochPath(equator)).unwrap();
        assert!((a - 2.0 * PI).abs() < 1e-9, "{a}");
        let single = BlochPath(vec![[0.0, 0.6, 0.8]; 5]);
        assert_eq!(solid_angle_geodesic_closed(&single).unwrap(), 0.0);
        let antipodal = BlochPath(vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]]);
        assert_eq!(solid_angle_geodesic_closed(&antipodal), Err(Error::GeodesicAmbiguous));
    }

    #[test]
    fn half_solid_angle_of_a_cap_is_the_closed_system_phase() {
        let theta = 1.0;
        let chain = closed_chain(theta, 3000, 2.0 * PI);
        let path = BlochPath::from_states(&chain).unwrap();
        let half = 0.5 * solid_angle_geodesic_closed(&path).unwrap();
        // The chord polygon and the chain carry the same phase exactly.
        let chain_phase = pancharatnam_states(&chain).unwrap().gamma_geo;
        assert!(wrap_angle(half - chain_phase).abs() < 1e-9, "{half} {chain_phase}");
        assert!(wrap_angle(half - PI * (theta.cos() - 1.0)).abs() < 1e-5);
    }

    fn qsd_ensemble(model: SystemModel, bath: BathSpectrum, grid: TimeGrid, n: u64) -> Vec<Trajectory> {
        let ospec = OOperatorSpec::for_model(&model, &bath, &grid).unwrap();
        (0..n)
            .map(|seed| {
                let noise = sample_noise(&bath, &grid, seed, GeneratorKind::Recursive).unwrap();
                integrate_trajectory(&model, &bath, &ospec, &noise).unwrap()
            })
            .collect()
    }

    #[test]
    fn uncoupled_ensemble_reduces_to_single_trajectory() {
        let model = SystemModel::new(1.0, 0.0, CouplingKind::Dissipative, 1.1).unwrap();
        let bath = BathSpectrum::new(1.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(2.0 * PI, 1000).unwrap();
        let trajs = qsd_ensemble(model, bath, grid, 8);
        let single = pancharatnam_phase(&trajs[0]).unwrap();
        let prod = ensemble_geometric_phase_product(&trajs).unwrap();
        assert!((prod.value - single.gamma_geo).abs() < 1e-10);
        assert!(prod.std_error < 1e-12);
        let dyn_ = ensemble_dynamical_phase(&trajs).unwrap();
        assert!((dyn_.value + 0.5 * 1.1f64.cos() * 2.0 * PI).abs() < 1e-6);
        let half = TimeGrid::new(1.0, 100).unwrap();
        let short = qsd_ensemble(model.with_theta(PI / 2.0).unwrap(), bath, half, 4);
        assert!(ensemble_total_phase(&short).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn mismatched_ensembles_are_rejected() {
        let bath = BathSpectrum::new(1.0, 1.0, 0.0).unwrap();
        let model = SystemModel::new(1.0, 1.0, CouplingKind::Dissipative, 1.0).unwrap();
        let mut a = qsd_ensemble(model, bath, TimeGrid::new(1.0, 50).unwrap(), 2);
        a.extend(qsd_ensemble(model, bath, TimeGrid::new(1.0, 60).unwrap(), 2));
        assert!(matches!(ensemble_dynamical_phase(&a), Err(Error::Configuration(_))));
        assert!(matches!(ensemble_total_phase(&[]), Err(Error::Configuration(_))));
    }

    #[test]
    fn decomposition_identity_holds_for_qsd_ensembles() {
        let model = SystemModel::new(1.0, 1.0, CouplingKind::Dissipative, 1.0).unwrap();
        let bath = BathSpectrum::new(1.0, 1.0, 0.0).unwrap();
        let trajs = qsd_ensemble(model, bath, TimeGrid::new(2.0, 400).unwrap(), 200);
        let d = ensemble_phase_decomposition(&trajs).unwrap();
        assert!((d.gamma_tot - d.gamma_dyn - d.gamma_geo).abs() < 1e-12);
        assert!(d.std_error > 0.0 && d.n_traj == 200);
    }
}
