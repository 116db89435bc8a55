//! `memphase`: ensemble runs, figure data and the validation suite.
//!
//! Exit codes: 0 when every check passes, 1 on a check failure or a
//! computation error, 2 on a configuration error.

mod config;
mod modes;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::{Format, Mode, RunConfig};
use modes::{Output, RunError};
use record::write_summary;

#[derive(Debug, Parser)]
#[command(
    name = "memphase",
    version,
    about = "Geometric phases of non-Markovian two-level systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the mode named in the configuration (default: ensemble).
    Run {
        /// Override the configured mode.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Oracle and ensemble cross-checks, one group per acceptance criterion.
    Validate {
        /// Reduced sample sizes.
        #[arg(long)]
        quick: bool,
        /// Criteria to run, e.g. `--criteria 1,7`; all by default.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
    },
    /// Single trajectory with its solid-angle overlay.
    Figure1,
    /// Dissipative θ sweeps, one table per γ.
    Figure2,
    /// Dephasing θ sweeps with the memory-induced shift, one table per γ.
    Figure3,
}

#[derive(Debug, Args)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root seed of the per-trajectory seed derivation, also used by `validate`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Trajectories per ensemble.
    #[arg(long, global = true)]
    n_traj: Option<usize>,
    /// Integration step.
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

fn resolve(cli: &Cli) -> Result<RunConfig, config::ConfigError> {
    let mut cfg = match &cli.overrides.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(d) = &o.out {
        cfg.output.dir = d.clone();
    }
    if let Some(s) = o.seed {
        cfg.ensemble.root_seed = s;
        cfg.validate.root_seed = Some(s);
    }
    if o.workers.is_some() {
        cfg.ensemble.workers = o.workers;
    }
    if let Some(n) = o.n_traj {
        cfg.ensemble.n_traj = n;
    }
    if let Some(dt) = o.dt {
        cfg.grid.dt = Some(dt);
        cfg.grid.n_steps = None;
    }
    if let Some(f) = o.format {
        cfg.output.format = f;
    }
    match &cli.command {
        Command::Run { mode } => {
            if let Some(m) = mode {
                cfg.mode = *m;
            }
        }
        Command::Validate { quick, criteria } => {
            cfg.mode = Mode::Validate;
            cfg.validate.quick |= *quick;
            if !criteria.is_empty() {
                cfg.validate.criteria = criteria.clone();
            }
        }
        Command::Figure1 => cfg.mode = Mode::Figure1,
        Command::Figure2 => cfg.mode = Mode::Figure2,
        Command::Figure3 => cfg.mode = Mode::Figure3,
    }
    cfg.check()?;
    Ok(cfg)
}

fn execute(cfg: &RunConfig) -> Result<Output, RunError> {
    match cfg.mode {
        Mode::SingleTrajectory => modes::single_trajectory(cfg),
        Mode::Ensemble => modes::ensemble(cfg),
        Mode::AnalyticOnly => modes::analytic_only(cfg),
        Mode::Figure1 => modes::figure_1(cfg),
        Mode::Figure2 => modes::figure_2(cfg),
        Mode::Figure3 => modes::figure_3(cfg),
        Mode::Validate => modes::validate(cfg),
    }
}

fn export(cfg: &RunConfig, out: &mut Output) -> std::io::Result<()> {
    let dir = &cfg.output.dir;
    if cfg.output.format.csv() {
        for t in &out.tables {
            let path = t.write(dir)?;
            eprintln!("wrote {}", path.display());
        }
        out.record.tables = out.tables.iter().map(|t| t.file_name.clone()).collect();
    }
    if cfg.output.format.summary() {
        let path = write_summary(&out.record, dir, "summary.toml")?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    let started = Instant::now();
    let mut out = match execute(&cfg) {
        Ok(o) => o,
        Err(RunError::Config(e)) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
        Err(RunError::Compute(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    out.record.sanitize();
    if let Err(e) = export(&cfg, &mut out) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let failures: Vec<_> = out.record.checks.iter().filter(|c| !c.passed).collect();
    let failed_quantities = out.record.quantities.iter().filter(|q| q.passed == Some(false)).count();
    eprintln!(
        "{:?}: {} checks, {} failed; {} quantities, {} outside tolerance; wall clock {:.2?}",
        cfg.mode,
        out.record.checks.len(),
        failures.len(),
        out.record.quantities.len(),
        failed_quantities,
        started.elapsed()
    );
    for c in failures.iter().take(20) {
        eprintln!(
            "  FAIL {}: deviation {:?}, tolerance {} ({})",
            c.name, c.deviation, c.tolerance, c.detail
        );
    }
    if out.record.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
