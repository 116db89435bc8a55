//! One function per run mode. Each fills a [`ResultRecord`] and the CSV
//! tables that go with it.

use memphase::ensemble::{run_ensemble, theta_grid, Checkpoint, EnsembleConfig};
use memphase::figures::{
    figure1, figure2_curve, figure3_curve, implied_shift, SweepRow, SweepSettings, FIGURE2_GAMMAS, FIGURE3_GAMMAS,
};
use memphase::noise::{derive_seed, sample_noise};
use memphase::oracle::{
    dephasing_markov_value, dephasing_phase_analytic, dephasing_shift, dissipative_markov_value,
    dissipative_phases_analytic,
};
use memphase::phase::{
    ensemble_phases, pancharatnam_series, pancharatnam_states, reference_section_states, solid_angle_geodesic_closed,
};
use memphase::qsd::{integrate_trajectory, OOperatorSpec};
use memphase::stats::{nearest_branch, wrap_angle};
use memphase::validate::{run_criterion, ValidationScale, CRITERIA, ROUNDING_FLOOR};
use memphase::{bloch_vector, CouplingKind};

use crate::config::{ConfigError, RunConfig};
use crate::record::{num, CheckRow, Quantity, ResultRecord, Table};

/// A failure that is not a check verdict.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Compute(memphase::Error),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<memphase::Error> for RunError {
    fn from(e: memphase::Error) -> Self {
        Self::Compute(e)
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(e) => write!(f, "configuration error: {e}"),
            Self::Compute(e) => write!(f, "{e}"),
        }
    }
}

pub struct Output {
    pub record: ResultRecord,
    pub tables: Vec<Table>,
}

fn checkpoint(cfg: &RunConfig, tag: &str) -> Option<Checkpoint> {
    cfg.ensemble
        .checkpoint_dir
        .as_ref()
        .map(|d| Checkpoint::new(d.join(tag)))
}

/// Reference on which analytic phases at one period are reported.
fn markov_reference(coupling: CouplingKind, theta: f64, omega: f64, lambda: f64) -> f64 {
    match coupling {
        CouplingKind::Dissipative => dissipative_markov_value(theta, omega, lambda),
        CouplingKind::Dephasing => dephasing_markov_value(theta),
    }
}

pub fn single_trajectory(cfg: &RunConfig) -> Result<Output, RunError> {
    let model = cfg.system_model()?;
    let bath = cfg.bath_spectrum()?;
    let grid = cfg.time_grid()?;
    let mut record = ResultRecord::new(cfg);
    let ospec = OOperatorSpec::with_substeps(
        match model.coupling {
            CouplingKind::Dissipative => memphase::qsd::OOperatorKind::DissipativeClosedForm,
            CouplingKind::Dephasing => memphase::qsd::OOperatorKind::DephasingIntegral,
        },
        &model,
        &bath,
        &grid,
        cfg.ensemble.substeps,
    )?;
    let seed = derive_seed(cfg.ensemble.root_seed, 0);
    let noise = sample_noise(&bath, &grid, seed, cfg.ensemble.generator)?;
    let traj = integrate_trajectory(&model, &bath, &ospec, &noise).map_err(|e| memphase::Error::Trajectory {
        seed,
        source: Box::new(e),
    })?;
    let d = pancharatnam_states(&traj.states)?;
    let series = pancharatnam_series(&traj.states)?;
    record.push_quantity(Quantity::plain("gamma_tot", d.gamma_tot));
    record.push_quantity(Quantity::plain("gamma_dyn", d.gamma_dyn));
    record.push_quantity(Quantity::plain("gamma_geo", d.gamma_geo));
    match reference_section_states(&traj.states) {
        Ok(r) => record.push_quantity(Quantity::plain("gamma_geo_reference_section", r)),
        Err(e) => eprintln!("reference section skipped: {e}"),
    }
    let path = traj.bloch_path()?;
    match solid_angle_geodesic_closed(&path) {
        Ok(omega) => {
            let half = 0.5 * omega;
            let tol = cfg.tolerances.solid_angle;
            record.push_quantity(Quantity::plain("half_solid_angle", half).against(
                d.gamma_geo,
                wrap_angle(half - d.gamma_geo).abs(),
                tol,
            ));
        }
        Err(e) => record.push_check(CheckRow {
            criterion: None,
            name: "half solid angle".into(),
            deviation: None,
            tolerance: cfg.tolerances.solid_angle,
            passed: false,
            detail: e.to_string(),
        }),
    }
    let mut t = Table::new(
        "trajectory.csv",
        &[
            "t [1/omega]",
            "c_up_re",
            "c_up_im",
            "c_down_re",
            "c_down_im",
            "norm",
            "x",
            "y",
            "z",
            "gamma_G [rad]",
        ],
    );
    for (j, s) in traj.states.iter().enumerate() {
        let b = bloch_vector(s)?;
        t.push(vec![
            num(grid.time(j)),
            num(s.up.re),
            num(s.up.im),
            num(s.down.re),
            num(s.down.im),
            num(s.norm()),
            num(b[0]),
            num(b[1]),
            num(b[2]),
            num(series[j]),
        ]);
    }
    Ok(Output {
        record,
        tables: vec![t],
    })
}

pub fn ensemble(cfg: &RunConfig) -> Result<Output, RunError> {
    let model = cfg.system_model()?;
    let bath = cfg.bath_spectrum()?;
    let grid = cfg.time_grid()?;
    let mut ec = EnsembleConfig::new(model, bath, grid, cfg.ensemble.n_traj, cfg.ensemble.root_seed);
    ec.generator = cfg.ensemble.generator;
    ec.blocks = cfg.ensemble.blocks;
    ec.substeps = cfg.ensemble.substeps;
    let blocks = run_ensemble(&ec, cfg.ensemble.workers, checkpoint(cfg, "ensemble").as_ref())?;
    let ph = ensemble_phases(&blocks)?;
    let mut record = ResultRecord::new(cfg);
    let t = grid.t_final();
    let (o_tot, o_dyn, o_geo) = match model.coupling {
        CouplingKind::Dissipative => {
            let (tot, dyn_) = dissipative_phases_analytic(model.theta, model.omega, model.lambda, &bath, t)?;
            (Some(tot), Some(dyn_), tot - dyn_)
        }
        CouplingKind::Dephasing => (
            None,
            None,
            dephasing_phase_analytic(model.theta, model.omega, model.lambda, &bath, t)?,
        ),
    };
    let sigma = cfg.tolerances.sigma;
    let compare = |name: &str, est: memphase::phase::Estimate, oracle: Option<f64>, wrap: bool| {
        let q = Quantity::plain(name, est.value).with_error(est.std_error);
        match oracle {
            Some(o) => {
                let dev = if wrap {
                    wrap_angle(est.value - o).abs()
                } else {
                    (est.value - o).abs()
                };
                q.against(o, dev, (sigma * est.std_error).max(ROUNDING_FLOOR))
            }
            None => q,
        }
    };
    record.push_quantity(compare("gamma_tot", ph.total, o_tot, true));
    record.push_quantity(compare("gamma_dyn", ph.dynamical, o_dyn, false));
    record.push_quantity(compare("gamma_geo", ph.geometric, Some(o_geo), true));
    record.push_quantity(Quantity::plain("dynamical_residue", ph.dynamical_residue));
    record.push_quantity(Quantity::plain("overlap_magnitude", ph.overlap_magnitude));
    let mut table = Table::new(
        "ensemble.csv",
        &[
            "theta [rad]",
            "gamma_tot [rad]",
            "gamma_tot_std_error [rad]",
            "gamma_dyn [rad]",
            "gamma_dyn_std_error [rad]",
            "gamma_G_ensemble [rad]",
            "std_error [rad]",
            "gamma_G_analytic [rad]",
        ],
    );
    table.push(vec![
        num(model.theta),
        num(ph.total.value),
        num(ph.total.std_error),
        num(ph.dynamical.value),
        num(ph.dynamical.std_error),
        num(ph.geometric.value),
        num(ph.geometric.std_error),
        num(o_geo),
    ]);
    Ok(Output {
        record,
        tables: vec![table],
    })
}

pub fn analytic_only(cfg: &RunConfig) -> Result<Output, RunError> {
    let model = cfg.system_model()?;
    let bath = cfg.bath_spectrum()?;
    let t = cfg.time_grid()?.t_final();
    let at_period = (t - model.period()).abs() <= 1e-12 * model.period();
    let mut record = ResultRecord::new(cfg);
    let mut table = Table::new("analytic.csv", &["theta [rad]", "gamma_G_analytic [rad]"]);
    for theta in theta_grid(cfg.sweep.n_theta) {
        let value = match model.coupling {
            CouplingKind::Dissipative => {
                let (tot, dyn_) = dissipative_phases_analytic(theta, model.omega, model.lambda, &bath, t)?;
                tot - dyn_
            }
            CouplingKind::Dephasing => dephasing_phase_analytic(theta, model.omega, model.lambda, &bath, t)?,
        };
        let value = if at_period {
            nearest_branch(
                value,
                markov_reference(model.coupling, theta, model.omega, model.lambda),
            )
        } else {
            value
        };
        record.push_quantity(Quantity::plain(format!("gamma_G_analytic(theta={theta})"), value));
        table.push(vec![num(theta), num(value)]);
    }
    Ok(Output {
        record,
        tables: vec![table],
    })
}

pub fn figure_1(cfg: &RunConfig) -> Result<Output, RunError> {
    let model = cfg.system_model()?;
    let bath = cfg.bath_spectrum()?;
    let grid = cfg.time_grid()?;
    let rows = figure1(&model, &bath, &grid, cfg.ensemble.root_seed, cfg.sweep.samples)?;
    let mut record = ResultRecord::new(cfg);
    let mut table = Table::new(
        "figure1.csv",
        &["t [1/omega]", "x", "y", "z", "gamma_G [rad]", "half_solid_angle [rad]"],
    );
    let mut worst: f64 = 0.0;
    for r in &rows {
        worst = worst.max(wrap_angle(r.gamma_geo - r.half_solid_angle).abs());
        table.push(vec![
            num(r.t),
            num(r.x),
            num(r.y),
            num(r.z),
            num(r.gamma_geo),
            num(r.half_solid_angle),
        ]);
    }
    let tol = cfg.tolerances.solid_angle;
    record.push_check(CheckRow {
        criterion: Some(1),
        name: "Pancharatnam phase vs half solid angle, pointwise".into(),
        deviation: Some(worst),
        tolerance: tol,
        passed: worst <= tol,
        detail: format!("{} samples", rows.len()),
    });
    Ok(Output {
        record,
        tables: vec![table],
    })
}

fn sweep_settings(cfg: &RunConfig) -> SweepSettings {
    SweepSettings {
        omega: cfg.model.omega,
        lambda: cfg.model.lambda,
        coupling_rate: cfg.bath.coupling_rate,
        n_traj: cfg.ensemble.n_traj,
        dt: cfg.sweep_dt(),
        root_seed: cfg.ensemble.root_seed,
        workers: cfg.ensemble.workers,
    }
}

fn sweep_check(gamma: f64, r: &SweepRow, sigma: f64) -> CheckRow {
    let tol = (sigma * r.std_error).max(ROUNDING_FLOOR);
    let dev = r.deviation();
    CheckRow {
        criterion: None,
        name: format!("gamma={gamma} theta={}", r.theta),
        deviation: Some(dev),
        tolerance: tol,
        passed: dev <= tol,
        detail: format!("ensemble {} ± {}, analytic {}", r.ensemble, r.std_error, r.analytic),
    }
}

pub fn figure_2(cfg: &RunConfig) -> Result<Output, RunError> {
    let s = sweep_settings(cfg);
    let thetas = theta_grid(cfg.sweep.n_theta);
    let gammas = cfg.sweep.gammas.clone().unwrap_or(FIGURE2_GAMMAS.to_vec());
    let mut record = ResultRecord::new(cfg);
    let mut tables = Vec::new();
    for gamma in gammas {
        let rows = figure2_curve(
            gamma,
            &thetas,
            &s,
            checkpoint(cfg, &format!("figure2-gamma-{gamma}")).as_ref(),
        )?;
        let mut t = Table::new(
            format!("figure2_gamma_{gamma}.csv"),
            &[
                "theta [rad]",
                "gamma_G_analytic [rad]",
                "gamma_G_ensemble [rad]",
                "std_error [rad]",
                "gamma_G_markov [rad]",
            ],
        );
        for r in &rows {
            record.push_check(sweep_check(gamma, r, cfg.tolerances.sigma));
            t.push(vec![
                num(r.theta),
                num(r.analytic),
                num(r.ensemble),
                num(r.std_error),
                num(r.markov),
            ]);
        }
        tables.push(t);
    }
    Ok(Output { record, tables })
}

pub fn figure_3(cfg: &RunConfig) -> Result<Output, RunError> {
    let s = sweep_settings(cfg);
    let thetas = theta_grid(cfg.sweep.n_theta);
    let gammas = cfg.sweep.gammas.clone().unwrap_or(FIGURE3_GAMMAS.to_vec());
    let mut record = ResultRecord::new(cfg);
    let mut tables = Vec::new();
    let sigma = cfg.tolerances.sigma;
    for gamma in gammas {
        // Bath centered on the system frequency.
        let rows = figure3_curve(
            gamma,
            cfg.model.omega,
            &thetas,
            &s,
            checkpoint(cfg, &format!("figure3-gamma-{gamma}")).as_ref(),
        )?;
        let shift = dephasing_shift(cfg.model.omega, cfg.model.lambda, cfg.bath.coupling_rate, gamma);
        let mut t = Table::new(
            format!("figure3_gamma_{gamma}.csv"),
            &[
                "theta [rad]",
                "gamma_G_analytic [rad]",
                "gamma_G_ensemble [rad]",
                "std_error [rad]",
                "gamma_G_markov [rad]",
                "shift_analytic [rad]",
                "shift_ensemble [rad]",
            ],
        );
        let mut spread: f64 = 0.0;
        for r in &rows {
            let analytic_shift = r.markov - r.analytic;
            spread = spread.max(wrap_angle(analytic_shift - shift).abs());
            let ens = implied_shift(r);
            let dev = wrap_angle(ens - shift).abs();
            let tol = (sigma * r.std_error).max(ROUNDING_FLOOR);
            record.push_check(CheckRow {
                criterion: None,
                name: format!("gamma={gamma} theta={} ensemble shift", r.theta),
                deviation: Some(dev),
                tolerance: tol,
                passed: dev <= tol,
                detail: format!("ensemble {ens} ± {}, analytic {shift}", r.std_error),
            });
            t.push(vec![
                num(r.theta),
                num(r.analytic),
                num(r.ensemble),
                num(r.std_error),
                num(r.markov),
                num(shift),
                num(ens),
            ]);
        }
        record.push_check(CheckRow {
            criterion: None,
            name: format!("gamma={gamma} analytic shift independent of theta"),
            deviation: Some(spread),
            tolerance: cfg.tolerances.analytic,
            passed: spread <= cfg.tolerances.analytic,
            detail: format!("shift {shift}"),
        });
        tables.push(t);
    }
    Ok(Output { record, tables })
}

pub fn validate(cfg: &RunConfig) -> Result<Output, RunError> {
    let mut scale = if cfg.validate.quick {
        ValidationScale::quick()
    } else {
        ValidationScale::full()
    };
    if let Some(s) = cfg.validate.root_seed {
        scale.root_seed = s;
    }
    scale.workers = cfg.ensemble.workers;
    let ids: Vec<u8> = if cfg.validate.criteria.is_empty() {
        CRITERIA.iter().map(|(id, _)| *id).collect()
    } else {
        cfg.validate.criteria.clone()
    };
    let mut record = ResultRecord::new(cfg);
    record.provenance.root_seed = scale.root_seed;
    let mut table = Table::new(
        "validate.csv",
        &["criterion", "name", "deviation", "tolerance", "passed"],
    );
    for id in ids {
        let started = std::time::Instant::now();
        let report = run_criterion(id, &scale);
        eprintln!(
            "criterion {id} ({}): {} in {:.1?}",
            report.title,
            if report.passed() { "PASS" } else { "FAIL" },
            started.elapsed()
        );
        for c in &report.checks {
            let row = CheckRow::from_outcome(Some(id), c);
            table.push(vec![
                id.to_string(),
                row.name.clone(),
                row.deviation.map(num).unwrap_or_default(),
                num(row.tolerance),
                row.passed.to_string(),
            ]);
            record.push_check(row);
        }
    }
    Ok(Output {
        record,
        tables: vec![table],
    })
}
