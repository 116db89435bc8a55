use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn memphase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memphase"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_dir(dir: &Path) -> String {
    dir.to_str().unwrap().to_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|c| c.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn analytic_dephasing_at_zero_detuning_is_closed_system_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mode = \"analytic-only\"\n[model]\ncoupling = \"dephasing\"\n[bath]\ninverse_memory = 0.7\ncenter_frequency = 0.0\n[sweep]\nn_theta = 11\n",
    );
    let o = memphase(&["run", "--config", &cfg, "--out", &out_dir(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("analytic.csv"));
    assert_eq!(header, ["theta [rad]", "gamma_G_analytic [rad]"]);
    assert_eq!(rows.len(), 11);
    for r in rows {
        assert!((r[1] - PI * (r[0].cos() - 1.0)).abs() < 1e-12, "{r:?}");
    }
}

/// Runs twice into the same directory; the summary echoes the output path,
/// so separate directories would differ in that line alone.
fn run_twice(args: &[&str], second: &[&str], files: &[&str]) -> (Vec<Vec<u8>>, Vec<Vec<u8>>) {
    let dir = tempfile::tempdir().unwrap();
    let out = out_dir(dir.path());
    let mut collected = Vec::new();
    for extra in [args, second] {
        let mut all: Vec<&str> = extra.to_vec();
        all.extend(["--out", &out]);
        let o = memphase(&all);
        assert!(
            matches!(o.status.code(), Some(0 | 1)),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        collected.push(
            files
                .iter()
                .map(|f| fs::read(dir.path().join(f)).unwrap())
                .collect::<Vec<_>>(),
        );
    }
    let second = collected.pop().unwrap();
    (collected.pop().unwrap(), second)
}

#[test]
fn single_trajectory_output_is_byte_identical() {
    let args = ["run", "--mode", "single-trajectory", "--seed", "42", "--dt", "0.01"];
    let (a, b) = run_twice(&args, &args, &["trajectory.csv", "summary.toml"]);
    assert!(a.iter().all(|x| !x.is_empty()));
    assert_eq!(a, b);
    let summary = String::from_utf8(a[1].clone()).unwrap();
    assert!(summary.contains("root_seed = 42"), "{summary}");
    assert!(summary.contains("half_solid_angle"), "{summary}");
}

#[test]
fn ensemble_output_is_independent_of_worker_count() {
    let base = ["run", "--n-traj", "200", "--dt", "0.01", "--workers"];
    let one: Vec<&str> = base.iter().copied().chain(["1"]).collect();
    let three: Vec<&str> = base.iter().copied().chain(["3"]).collect();
    let (a, b) = run_twice(&one, &three, &["ensemble.csv", "summary.toml"]);
    assert_eq!(a[0], b[0]);
    // The echoed configuration differs only in the worker count.
    let sa = String::from_utf8(a[1].clone()).unwrap();
    let sb = String::from_utf8(b[1].clone()).unwrap();
    assert_eq!(sa.replace("workers = 1", "workers = 3"), sb);
}

#[test]
fn figure2_writes_one_table_per_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sweep]\nn_theta = 3\n");
    let o = memphase(&[
        "figure2",
        "--config",
        &cfg,
        "--n-traj",
        "100",
        "--dt",
        "0.01",
        "--out",
        &out_dir(dir.path()),
    ]);
    assert!(
        matches!(o.status.code(), Some(0 | 1)),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for g in ["0.1", "0.5", "1.2", "100"] {
        let (header, rows) = read_csv(&dir.path().join(format!("figure2_gamma_{g}.csv")));
        assert_eq!(
            &header[..4],
            [
                "theta [rad]",
                "gamma_G_analytic [rad]",
                "gamma_G_ensemble [rad]",
                "std_error [rad]"
            ]
        );
        assert_eq!(rows.len(), 3);
    }
    let summary = fs::read_to_string(dir.path().join("summary.toml")).unwrap();
    assert!(summary.contains("figure2_gamma_100.csv"));
}

#[test]
fn figure3_analytic_shift_is_constant_per_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sweep]\nn_theta = 4\ngammas = [0.3, 7.0]\n");
    let o = memphase(&[
        "figure3",
        "--config",
        &cfg,
        "--n-traj",
        "100",
        "--dt",
        "0.01",
        "--format",
        "csv",
        "--out",
        &out_dir(dir.path()),
    ]);
    assert!(
        matches!(o.status.code(), Some(0 | 1)),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(!dir.path().join("summary.toml").exists());
    for g in ["0.3", "7"] {
        let (header, rows) = read_csv(&dir.path().join(format!("figure3_gamma_{g}.csv")));
        let a = header.iter().position(|h| h == "gamma_G_analytic [rad]").unwrap();
        let m = header.iter().position(|h| h == "gamma_G_markov [rad]").unwrap();
        let s = header.iter().position(|h| h == "shift_analytic [rad]").unwrap();
        for r in &rows {
            assert!((r[m] - r[a] - r[s]).abs() < 1e-10, "{r:?}");
        }
    }
}

#[test]
fn figure1_overlay_agrees_pointwise() {
    let dir = tempfile::tempdir().unwrap();
    let o = memphase(&["figure1", "--out", &out_dir(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&dir.path().join("figure1.csv"));
    assert!(rows.len() > 100);
    for r in rows {
        assert!((r[4] - r[5]).abs() < 1e-2, "{r:?}");
    }
}

#[test]
fn validate_property_suite_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = memphase(&["validate", "--quick", "--criteria", "7", "--out", &out_dir(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("summary.toml")).unwrap();
    assert!(summary.contains("root_seed = 20240601"), "{summary}");
    for key in ["name = ", "deviation = ", "tolerance = ", "passed = "] {
        assert!(summary.contains(key), "{key} missing");
    }
    assert!(dir.path().join("validate.csv").exists());
}

#[test]
fn unknown_config_key_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[bath]\ngamma = 1.0\n");
    let o = memphase(&["run", "--config", &cfg, "--out", &out_dir(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("gamma") && err.contains("line"), "{err}");
}

#[test]
fn invalid_values_are_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    for text in [
        "[model]\ntheta = 4.0\n",
        "[ensemble]\nn_traj = 0\n",
        "[grid]\nn_steps = 10\ndt = 0.1\n",
        "[validate]\ncriteria = [8]\n",
    ] {
        let cfg = write_config(dir.path(), text);
        let o = memphase(&["run", "--config", &cfg, "--out", &out_dir(dir.path())]);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{text}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn unwritable_output_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("not-a-dir");
    fs::write(&file, "").unwrap();
    let o = memphase(&["run", "--mode", "analytic-only", "--out", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn riccati_pole_is_reported_as_a_computation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[bath]\ninverse_memory = 1.0\ncenter_frequency = 1.0\n[ensemble]\nn_traj = 10\n",
    );
    let o = memphase(&["run", "--config", &cfg, "--dt", "0.01", "--out", &out_dir(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverges"));
}
