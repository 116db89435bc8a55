//! Run configuration: a TOML document with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use memphase::noise::GeneratorKind;
use memphase::{BathSpectrum, CouplingKind, SystemModel, TimeGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SingleTrajectory,
    #[default]
    Ensemble,
    AnalyticOnly,
    Figure1,
    Figure2,
    Figure3,
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Summary,
    #[default]
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn summary(self) -> bool {
        matches!(self, Format::Summary | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub omega: f64,
    pub lambda: f64,
    pub coupling: CouplingKind,
    pub theta: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            omega: 1.0,
            lambda: 1.0,
            coupling: CouplingKind::Dissipative,
            theta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BathSection {
    pub coupling_rate: f64,
    pub inverse_memory: f64,
    pub center_frequency: f64,
}

impl Default for BathSection {
    fn default() -> Self {
        Self {
            coupling_rate: 1.0,
            inverse_memory: 1.0,
            center_frequency: 0.0,
        }
    }
}

/// `t_final` defaults to one period `2π/ω`; give at most one of `n_steps`
/// and `dt` (default `dt = 1e-3`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub t_final: Option<f64>,
    pub n_steps: Option<usize>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_traj: usize,
    pub root_seed: u64,
    pub generator: GeneratorKind,
    pub blocks: usize,
    pub substeps: usize,
    pub workers: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n_traj: 20_000,
            root_seed: 1,
            generator: GeneratorKind::Recursive,
            blocks: memphase::phase::DEFAULT_BLOCKS,
            substeps: 1,
            workers: None,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// θ points of sweeps and analytic tables.
    pub n_theta: usize,
    /// γ values of the figure2 or figure3 sweep; the built-in lists when absent.
    pub gammas: Option<Vec<f64>>,
    /// Rows of the figure 1 table.
    pub samples: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            n_theta: 9,
            gammas: None,
            samples: 629,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("memphase-out"),
            format: Format::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSection {
    /// Standard errors allowed between an ensemble estimate and its oracle.
    pub sigma: f64,
    /// Pointwise solid-angle tolerance of single trajectories, rad.
    pub solid_angle: f64,
    /// Absolute tolerance of analytic identities.
    pub analytic: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self {
            sigma: 3.0,
            solid_angle: 1e-2,
            analytic: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    /// Reduced sample sizes for smoke runs.
    pub quick: bool,
    /// Criteria to run; all when empty.
    pub criteria: Vec<u8>,
    /// Root seed of the suites; `ensemble.root_seed` is not used here.
    pub root_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub model: ModelSection,
    pub bath: BathSection,
    pub grid: GridSection,
    pub ensemble: EnsembleSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
    pub tolerances: ToleranceSection,
    pub validate: ValidateSection,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path)
    }

    pub fn system_model(&self) -> Result<SystemModel, ConfigError> {
        let m = &self.model;
        SystemModel::new(m.omega, m.lambda, m.coupling, m.theta).map_err(|e| ConfigError(format!("[model] {e}")))
    }

    pub fn bath_spectrum(&self) -> Result<BathSpectrum, ConfigError> {
        let b = &self.bath;
        BathSpectrum::new(b.coupling_rate, b.inverse_memory, b.center_frequency)
            .map_err(|e| ConfigError(format!("[bath] {e}")))
    }

    pub fn time_grid(&self) -> Result<TimeGrid, ConfigError> {
        let t = match self.grid.t_final {
            Some(t) => t,
            None => self.system_model()?.period(),
        };
        let g = match (self.grid.n_steps, self.grid.dt) {
            (Some(_), Some(_)) => {
                return Err(ConfigError("[grid] give either n_steps or dt, not both".into()));
            }
            (Some(n), None) => TimeGrid::new(t, n),
            (None, dt) => TimeGrid::with_step(t, dt.unwrap_or(1e-3)),
        };
        g.map_err(|e| ConfigError(format!("[grid] {e}")))
    }

    /// Step used by the figure sweeps.
    pub fn sweep_dt(&self) -> f64 {
        self.grid.dt.unwrap_or(1e-3)
    }

    /// Checks every field the selected mode reads, and that the output
    /// directory can be written.
    pub fn check(&self) -> Result<(), ConfigError> {
        self.system_model()?;
        self.bath_spectrum()?;
        if self.ensemble.n_traj == 0 {
            return Err(ConfigError("[ensemble] n_traj must be at least 1".into()));
        }
        if self.ensemble.blocks == 0 {
            return Err(ConfigError("[ensemble] blocks must be at least 1".into()));
        }
        if self.ensemble.workers == Some(0) {
            return Err(ConfigError("[ensemble] workers must be at least 1".into()));
        }
        if self.sweep.n_theta == 0 {
            return Err(ConfigError("[sweep] n_theta must be at least 1".into()));
        }
        if let Some(g) = &self.sweep.gammas {
            if g.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(ConfigError("[sweep] gammas must be positive".into()));
            }
        }
        if !(self.tolerances.sigma > 0.0 && self.tolerances.solid_angle > 0.0 && self.tolerances.analytic > 0.0) {
            return Err(ConfigError("[tolerances] tolerances must be positive".into()));
        }
        if let Some(c) = self.validate.criteria.iter().find(|c| !(1..=7).contains(*c)) {
            return Err(ConfigError(format!("[validate] no criterion {c}; criteria are 1 to 7")));
        }
        match self.mode {
            Mode::Figure1 | Mode::Figure2 | Mode::Figure3 => {
                let dt = self.sweep_dt();
                if dt.is_nan() || dt <= 0.0 {
                    return Err(ConfigError("[grid] dt must be positive".into()));
                }
            }
            _ => {
                self.time_grid()?;
            }
        }
        fs::create_dir_all(&self.output.dir)
            .map_err(|e| ConfigError(format!("output directory {}: {e}", self.output.dir.display())))?;
        let probe = self.output.dir.join(".memphase-write-probe");
        fs::write(&probe, b"")
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| {
                ConfigError(format!(
                    "output directory {} is not writable: {e}",
                    self.output.dir.display()
                ))
            })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_toml("", Path::new("x.toml")).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::from_toml("[model]\nomgea = 2.0\n", Path::new("x.toml")).unwrap_err();
        assert!(e.0.contains("omgea"), "{e}");
        assert!(e.0.contains("line 2"), "{e}");
    }

    #[test]
    fn kebab_case_enums() {
        let c = RunConfig::from_toml(
            "mode = \"analytic-only\"\n[model]\ncoupling = \"dephasing\"\n[ensemble]\ngenerator = \"covariance-factor\"\n",
            Path::new("x.toml"),
        )
        .unwrap();
        assert_eq!(c.mode, Mode::AnalyticOnly);
        assert_eq!(c.model.coupling, CouplingKind::Dephasing);
        assert_eq!(c.ensemble.generator, GeneratorKind::CovarianceFactor);
    }

    #[test]
    fn grid_step_and_count_conflict() {
        let mut c = RunConfig::default();
        c.grid.n_steps = Some(10);
        c.grid.dt = Some(0.1);
        assert!(c.time_grid().is_err());
        c.grid.dt = None;
        assert_eq!(c.time_grid().unwrap().n_steps(), 10);
    }
}
