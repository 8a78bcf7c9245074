use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eqmanifold_lab::report::JsonReport;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn eqlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("LAB_LOG", "off")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

const HETEROGENEOUS: &str = r#"
[economy]
id = "het"
resources = [2.0, 2.0]
consumers = [
    { family = "cobb-douglas", alpha = [0.6, 0.4] },
    { family = "cobb-douglas", alpha = [0.4, 0.6] },
]
[grid]
lower = [0.5, 0.0]
upper = [3.5, 2.0]
points = [5, 5]
"#;

#[test]
fn default_helicoid_check_succeeds_without_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = eqlab(&["helicoid-check"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["helicoid-check.csv", "helicoid-check.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn format_selects_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = eqlab(&["helicoid-check", "--format", "json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("helicoid-check.json").exists());
    assert!(!dir.path().join("helicoid-check.csv").exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("sede = 1\n{HETEROGENEOUS}"));
    let out = eqlab(&["curvature-scan", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn invalid_values_report_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("[tolerances]\nminimal = -1.0\n{HETEROGENEOUS}"));
    let out = eqlab(&["curvature-scan", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tolerances.minimal"));

    let out = eqlab(&["entropy", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_and_bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = eqlab(&["entropy", "--config", "/nonexistent/run.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = eqlab(&["entropy"], dir.path());
    assert_eq!(out.status.code(), Some(2), "entropy needs an economy");
    let out = eqlab(&["helicoid-check", "--format", "xml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = eqlab(&["no-such-scenario"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenario_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("helicoid.toml");
    let out = eqlab(&["entropy", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_points_above_threshold_exit_3_but_still_write() {
    // At negative wealth of consumer 1 the relative price leaves the cone.
    let dir = tempfile::tempdir().unwrap();
    let body = HETEROGENEOUS.replace("lower = [0.5, 0.0]", "lower = [-10.0, 0.0]").replace("upper = [3.5, 2.0]", "upper = [-9.0, 2.0]");
    let cfg = write_config(dir.path(), &body);
    let out_dir = dir.path().join("out");
    let out = eqlab(&["curvature-scan", "--config", cfg.to_str().unwrap()], &out_dir);
    assert_eq!(out.status.code(), Some(3));
    let report: JsonReport = serde_json::from_slice(&fs::read(out_dir.join("curvature-scan.json")).unwrap()).unwrap();
    assert!(report.summary.failure_fraction > 0.25);
    assert!(report.rows.iter().any(|r| r.flags.iter().any(|f| f.starts_with("error"))));
}

#[test]
fn failed_check_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[helicoid]\nhyperplanes = 5\nspecs = [{ n = 2, k = 1, a = [0.0], b = 1.0 }]\ndegenerate = []\n",
    );
    let out = eqlab(&["helicoid-check", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degeneracy"));
}

#[test]
fn regression_sweeps_land_in_expected_cells() {
    let dir = tempfile::tempdir().unwrap();
    for (cfg, cell) in [
        ("identical-cd.toml", "unique/minimal"),
        ("mirror-ces.toml", "multiple/non-minimal"),
        ("heterogeneous-cd.toml", "multiple/non-minimal"),
    ] {
        let path = config(cfg);
        let out_dir = dir.path().join(cfg);
        let out = eqlab(&["conjecture-sweep", "--config", path.to_str().unwrap()], &out_dir);
        assert_eq!(out.status.code(), Some(0), "{cfg}: {}", String::from_utf8_lossy(&out.stderr));
        let report: JsonReport = serde_json::from_slice(&fs::read(out_dir.join("conjecture-sweep.json")).unwrap()).unwrap();
        let table = report.summary.contingency.unwrap();
        assert_eq!(table.cell(), cell, "{cfg}");
        assert!(!table.anomaly);
        assert!(out_dir.join("conjecture-sweep-plot.csv").exists());
    }
}

#[test]
fn positive_endowments_alone_make_curved_cobb_douglas_anomalous() {
    // Cobb-Douglas equilibria are unique on the positive orthant, so a sweep
    // that never leaves it sees uniqueness next to curvature.
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{HETEROGENEOUS}\n[endowments.random]\ncount = 20\nlower = [0.0, 0.0]\nupper = [2.0, 2.0]\n");
    let cfg = write_config(dir.path(), &body);
    let out_dir = dir.path().join("out");
    let out = eqlab(&["conjecture-sweep", "--config", cfg.to_str().unwrap()], &out_dir);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("conjecture-anomaly"));
    let csv = fs::read_to_string(out_dir.join("conjecture-sweep.csv")).unwrap();
    assert!(csv.contains("conjecture-anomaly"));
}

#[test]
fn seed_flag_overrides_config_and_changes_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("heterogeneous-cd.toml");
    let run = |seed: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = eqlab(&["equilibria", "--config", cfg.to_str().unwrap(), "--seed", seed], &out_dir);
        assert_eq!(out.status.code(), Some(0));
        fs::read(out_dir.join("equilibria.csv")).unwrap()
    };
    let a = run("5", "a");
    let b = run("5", "b");
    let c = run("6", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let report: JsonReport = serde_json::from_slice(&fs::read(dir.path().join("a/equilibria.json")).unwrap()).unwrap();
    assert_eq!(report.seed, 5);
    assert_eq!(report.config.seed, 5);
}

#[test]
fn csv_has_fixed_header_and_round_trippable_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("identical-cd.toml");
    let out = eqlab(&["entropy", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("entropy.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,economy_id,index,point,equilibrium_count,sup_mean_curvature,volume,entropy,gauss_dispersion,value,detail,flags"
    );
    let report: JsonReport = serde_json::from_slice(&fs::read(dir.path().join("entropy.json")).unwrap()).unwrap();
    for (line, row) in lines.zip(&report.rows) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[6].parse::<f64>().unwrap(), row.volume.unwrap());
        assert_eq!(fields[7].parse::<f64>().unwrap(), row.entropy.unwrap());
    }
}
