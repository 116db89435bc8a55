//! Parallel, reproducible trajectory ensembles.
//!
//! Trajectory `i` always uses noise seed `derive_seed(root_seed, i)` and
//! belongs to the contiguous block `i·B/N`. Blocks are summed sequentially
//! in index order and combined in block order, so results do not depend on
//! the number of workers. Finished blocks can be checkpointed to disk and
//! reused by a later run with the same configuration.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{derive_seed, GeneratorKind, NoiseGenerator};
use crate::phase::{ensemble_phases, EnsemblePhases, EnsembleSums, DEFAULT_BLOCKS};
use crate::qsd::{integrate_states, Generator, OOperatorKind, OOperatorSpec};
use crate::stats::{block_ranges, ComplexSum};
use crate::types::{initial_state, BathSpectrum, CouplingKind, PureState, SystemModel, TimeGrid, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub model: SystemModel,
    pub bath: BathSpectrum,
    pub grid: TimeGrid,
    pub n_traj: usize,
    pub root_seed: u64,
    pub generator: GeneratorKind,
    /// Jackknife blocks; clamped to `n_traj`.
    pub blocks: usize,
    /// RK4 steps per grid interval.
    pub substeps: usize,
    /// Defaults to the closed form for the model's coupling.
    pub o_operator: Option<OOperatorKind>,
    /// Accumulate `M[|ψ⟩⟨ψ|]` on the grid.
    pub with_density: bool,
}

impl EnsembleConfig {
    pub fn new(model: SystemModel, bath: BathSpectrum, grid: TimeGrid, n_traj: usize, root_seed: u64) -> Self {
        Self {
            model,
            bath,
            grid,
            n_traj,
            root_seed,
            generator: GeneratorKind::Recursive,
            blocks: DEFAULT_BLOCKS,
            substeps: 1,
            o_operator: None,
            with_density: false,
        }
    }

    fn o_kind(&self) -> OOperatorKind {
        self.o_operator.unwrap_or(match self.model.coupling {
            CouplingKind::Dissipative => OOperatorKind::DissipativeClosedForm,
            CouplingKind::Dephasing => OOperatorKind::DephasingIntegral,
        })
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.bath.validate()?;
        if self.n_traj == 0 {
            return Err(Error::Configuration("n_traj must be positive".into()));
        }
        if self.blocks == 0 {
            return Err(Error::Configuration("blocks must be positive".into()));
        }
        Ok(())
    }

    fn ranges(&self) -> Vec<Range<usize>> {
        block_ranges(self.n_traj, self.blocks)
    }
}

/// Where and how finished blocks are stored.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct StoredBlock<T> {
    fingerprint: String,
    index: usize,
    block: T,
}

impl Checkpoint {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn path(&self, tag: &str, index: usize) -> PathBuf {
        self.dir.join(format!("{tag}-block-{index:04}.json"))
    }

    fn load<T: DeserializeOwned>(&self, tag: &str, index: usize, fingerprint: &str) -> Result<Option<T>> {
        let path = self.path(tag, index);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        let stored: StoredBlock<T> =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if stored.fingerprint != fingerprint || stored.index != index {
            return Err(Error::Checkpoint(format!(
                "{} was written by a different configuration",
                path.display()
            )));
        }
        Ok(Some(stored.block))
    }

    fn store<T: Serialize>(&self, tag: &str, index: usize, fingerprint: &str, block: &T) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| io_error(&self.dir, e))?;
        let path = self.path(tag, index);
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string(&StoredBlock {
            fingerprint: fingerprint.to_owned(),
            index,
            block,
        })
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(&tmp, text).map_err(|e| io_error(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| io_error(&path, e))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Checkpoint(format!("{}: {e}", path.display()))
}

fn fingerprint(cfg: &EnsembleConfig, tag: &str) -> Result<String> {
    let mut c = *cfg;
    if tag == "basis" {
        // The basis run does not depend on the initial state.
        c.model.theta = 0.0;
    }
    serde_json::to_string(&c).map_err(|e| Error::Checkpoint(e.to_string()))
}

/// Runs `make` on every block in parallel (optionally on a dedicated pool
/// of `workers` threads), reusing checkpointed blocks.
fn run_blocks<T, F>(
    cfg: &EnsembleConfig,
    tag: &str,
    workers: Option<usize>,
    checkpoint: Option<&Checkpoint>,
    make: F,
) -> Result<Vec<T>>
where
    T: Send + Serialize + DeserializeOwned,
    F: Fn(Range<usize>) -> Result<T> + Sync,
{
    cfg.validate()?;
    let fp = fingerprint(cfg, tag)?;
    let ranges = cfg.ranges();
    let job = || -> Result<Vec<T>> {
        ranges
            .par_iter()
            .enumerate()
            .map(|(index, range)| {
                if let Some(cp) = checkpoint {
                    if let Some(block) = cp.load(tag, index, &fp)? {
                        return Ok(block);
                    }
                }
                let block = make(range.clone())?;
                if let Some(cp) = checkpoint {
                    cp.store(tag, index, &fp, &block)?;
                }
                Ok(block)
            })
            .collect()
    };
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Configuration(format!("cannot start worker pool: {e}")))?
            .install(job),
        None => job(),
    }
}

struct Setup {
    noise: NoiseGenerator,
    ospec: OOperatorSpec,
    obar: Vec<C64>,
    generator: Generator,
}

fn setup(cfg: &EnsembleConfig) -> Result<Setup> {
    let noise = NoiseGenerator::new(&cfg.bath, &cfg.grid, cfg.generator)?;
    let ospec = OOperatorSpec::with_substeps(cfg.o_kind(), &cfg.model, &cfg.bath, &cfg.grid, cfg.substeps)?;
    let obar = ospec.grid_values();
    Ok(Setup {
        noise,
        ospec,
        obar,
        generator: Generator::new(&cfg.model),
    })
}

fn wrap_seed(seed: u64) -> impl Fn(Error) -> Error {
    move |e| Error::Trajectory {
        seed,
        source: Box::new(e),
    }
}

/// Streams `cfg.n_traj` trajectories from `initial_state(theta)` into
/// per-block sums.
pub fn run_ensemble(
    cfg: &EnsembleConfig,
    workers: Option<usize>,
    checkpoint: Option<&Checkpoint>,
) -> Result<Vec<EnsembleSums>> {
    let s = setup(cfg)?;
    let psi0 = initial_state(cfg.model.theta)?;
    run_blocks(cfg, "theta", workers, checkpoint, |range| {
        let mut sums = EnsembleSums::new(&cfg.grid, cfg.with_density);
        for i in range {
            let seed = derive_seed(cfg.root_seed, i as u64);
            let noise = s.noise.sample(seed);
            let states = integrate_states(&cfg.model, &s.ospec, &noise, &[psi0])
                .map_err(wrap_seed(seed))?
                .pop()
                .expect("one initial state");
            sums.accumulate(&states, &s.generator, &noise.values, &s.obar, cfg.grid.dt());
        }
        Ok(sums)
    })
}

type Pair = [[C64; 2]; 2];

const ZERO_PAIR: Pair = [[C64::new(0.0, 0.0); 2]; 2];

/// Block sums of the `|↑⟩`/`|↓⟩` basis trajectories; any initial state
/// `v = (v₀, v₁)` is recovered by bilinear projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSums {
    pub count: usize,
    /// `[j][a][b] = Σ ⟨e_a|ψ_b(t_j)⟩`.
    pub overlap: Vec<Pair>,
    /// `[j][a][b] = Σ ⟨ψ_a(t_j)|ψ_b(t_{j+1})⟩`.
    pub links: Vec<Pair>,
    pub final_overlap: [[ComplexSum; 2]; 2],
    /// `[a][b] = Σ ∫⟨ψ_a|h|ψ_b⟩dt` (trapezoid).
    pub dyn_integral: [[ComplexSum; 2]; 2],
}

fn component(s: &PureState, a: usize) -> C64 {
    if a == 0 {
        s.up
    } else {
        s.down
    }
}

impl BasisSums {
    pub fn new(grid: &TimeGrid) -> Self {
        Self {
            count: 0,
            overlap: vec![ZERO_PAIR; grid.len()],
            links: vec![ZERO_PAIR; grid.n_steps()],
            final_overlap: Default::default(),
            dyn_integral: Default::default(),
        }
    }

    pub fn accumulate(
        &mut self,
        basis: [&[PureState]; 2],
        generator: &Generator,
        noise: &[C64],
        obar: &[C64],
        dt: f64,
    ) {
        let n = self.links.len();
        let mut integral = ZERO_PAIR;
        for j in 0..=n {
            let w = if j == 0 || j == n { 0.5 * dt } else { dt };
            for a in 0..2 {
                for b in 0..2 {
                    self.overlap[j][a][b] += component(&basis[b][j], a);
                    if j < n {
                        self.links[j][a][b] += basis[a][j].inner(&basis[b][j + 1]);
                    }
                    integral[a][b] += w * generator.matrix_element(noise[j], obar[j], &basis[a][j], &basis[b][j]);
                }
            }
        }
        for (a, row) in integral.iter().enumerate() {
            for (b, value) in row.iter().enumerate() {
                self.final_overlap[a][b].add(component(&basis[b][n], a));
                self.dyn_integral[a][b].add(*value);
            }
        }
        self.count += 1;
    }

    /// Sums for the initial state `initial_state(theta)`.
    pub fn project(&self, theta: f64) -> Result<EnsembleSums> {
        let psi0 = initial_state(theta)?;
        let v = [psi0.up.re, psi0.down.re];
        let form = |p: &Pair| -> C64 {
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..2 {
                for b in 0..2 {
                    acc += v[a] * v[b] * p[a][b];
                }
            }
            acc
        };
        let scalar = |p: &[[ComplexSum; 2]; 2]| -> ComplexSum {
            let mut acc = ComplexSum::default();
            for a in 0..2 {
                for b in 0..2 {
                    acc.add(v[a] * v[b] * p[a][b].value());
                }
            }
            acc
        };
        Ok(EnsembleSums {
            count: self.count,
            overlap: self.overlap.iter().map(form).collect(),
            links: self.links.iter().map(form).collect(),
            final_overlap: scalar(&self.final_overlap),
            dyn_integral: scalar(&self.dyn_integral),
            density: Vec::new(),
        })
    }
}

/// Basis-trajectory ensemble; `cfg.model.theta` is ignored.
pub fn run_basis_ensemble(
    cfg: &EnsembleConfig,
    workers: Option<usize>,
    checkpoint: Option<&Checkpoint>,
) -> Result<Vec<BasisSums>> {
    let s = setup(cfg)?;
    run_blocks(cfg, "basis", workers, checkpoint, |range| {
        let mut sums = BasisSums::new(&cfg.grid);
        for i in range {
            let seed = derive_seed(cfg.root_seed, i as u64);
            let noise = s.noise.sample(seed);
            let v = integrate_states(&cfg.model, &s.ospec, &noise, &[PureState::up(), PureState::down()])
                .map_err(wrap_seed(seed))?;
            sums.accumulate([&v[0], &v[1]], &s.generator, &noise.values, &s.obar, cfg.grid.dt());
        }
        Ok(sums)
    })
}

/// Ensemble phases for every `theta` from one basis run.
pub fn sweep_theta(blocks: &[BasisSums], thetas: &[f64]) -> Result<Vec<EnsemblePhases>> {
    thetas
        .iter()
        .map(|&theta| {
            let projected = blocks.iter().map(|b| b.project(theta)).collect::<Result<Vec<_>>>()?;
            ensemble_phases(&projected)
        })
        .collect()
}

/// Evenly spaced `θ_k = kπ/(n−1)`, `k = 0..n`.
pub fn theta_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|k| std::f64::consts::PI * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::ensemble_product_phase;

    fn config(n: usize) -> EnsembleConfig {
        let model = SystemModel::new(1.0, 1.0, CouplingKind::Dissipative, 1.0).unwrap();
        let bath = BathSpectrum::new(1.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let mut c = EnsembleConfig::new(model, bath, grid, n, 11);
        c.blocks = 8;
        c
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = config(64);
        let a = run_ensemble(&cfg, Some(1), None).unwrap();
        let b = run_ensemble(&cfg, Some(4), None).unwrap();
        assert_eq!(a, b);
        let pa = ensemble_phases(&a).unwrap();
        let pb = ensemble_phases(&b).unwrap();
        assert_eq!(pa.geometric.value.to_bits(), pb.geometric.value.to_bits());
    }

    #[test]
    fn basis_projection_matches_direct_run() {
        let cfg = config(40);
        let direct = ensemble_phases(&run_ensemble(&cfg, None, None).unwrap()).unwrap();
        let basis = run_basis_ensemble(&cfg, None, None).unwrap();
        let swept = sweep_theta(&basis, &[cfg.model.theta]).unwrap()[0];
        assert!((direct.geometric.value - swept.geometric.value).abs() < 1e-10);
        assert!((direct.geometric.std_error - swept.geometric.std_error).abs() < 1e-10);
        let big = config(800);
        let basis = run_basis_ensemble(&big, None, None).unwrap();
        let projected: Vec<_> = basis.iter().map(|b| b.project(big.model.theta).unwrap()).collect();
        let p1 = ensemble_product_phase(&projected).unwrap().estimate.value;
        let p2 = ensemble_product_phase(&run_ensemble(&big, None, None).unwrap())
            .unwrap()
            .estimate
            .value;
        assert!((p1 - p2).abs() < 1e-10);
    }

    #[test]
    fn checkpoint_resume_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cp = Checkpoint::new(dir.path());
        let cfg = config(32);
        let first = run_basis_ensemble(&cfg, Some(2), Some(&cp)).unwrap();
        // Drop half the blocks to simulate an interrupted run.
        for k in 0..4 {
            fs::remove_file(cp.path("basis", k)).unwrap();
        }
        let resumed = run_basis_ensemble(&cfg, Some(3), Some(&cp)).unwrap();
        assert_eq!(first, resumed);
        let mut other = cfg;
        other.root_seed = 12;
        assert!(matches!(
            run_basis_ensemble(&other, None, Some(&cp)),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn failures_carry_the_seed() {
        let model = SystemModel::new(1.0, 400.0, CouplingKind::Dephasing, 1.0).unwrap();
        let bath = BathSpectrum::new(1.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let cfg = EnsembleConfig::new(model, bath, grid, 4, 3);
        match run_ensemble(&cfg, None, None) {
            Err(Error::Trajectory { seed, source }) => {
                assert!((0..4).any(|i| derive_seed(3, i) == seed));
                assert!(matches!(*source, Error::Overflow { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn theta_grid_endpoints() {
        let g = theta_grid(9);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[8], std::f64::consts::PI);
    }
}
