use std::fs;
use std::path::Path;

use relu_lab::distributions::{sample, DistributionSpec};
use relu_lab::RealVector;
use relu_lab_harness::config::{CheckSpec, GdSection, ProfileParams, ScheduleSpec, VerifySection};
use relu_lab_harness::experiments::{cmd_verify, CheckResult, Relation};
use relu_lab_harness::io::{self, TrajectoryCsvRow};
use relu_lab_harness::{cmd_interpolate, cmd_run, run_experiment, ExperimentConfig};

fn gd_doc(out: &Path) -> String {
    format!(
        r#"{{
  "seed": 11,
  "out": {out:?},
  "gd": {{
    "dist": {{"kind": "standard_gaussian", "p": 5, "k": 1}},
    "schedule": {{"kind": "adaptive", "safety": 0.5,
                  "profile": {{"n_samples": 20000, "n_w": 4, "grid": {{"n": 12}}}}}},
    "n_mc": 10000,
    "max_iters": 3000
  }}
}}"#
    )
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_owned()
}

#[test]
fn config_round_trips_field_by_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(&gd_doc(dir.path())).unwrap();
    let again = ExperimentConfig::parse(&cfg.to_json().unwrap()).unwrap();
    assert_eq!(cfg, again);

    let mut v = ExperimentConfig::new(4, None);
    v.verify = Some(VerifySection::default_suite());
    assert_eq!(ExperimentConfig::parse(&v.to_json().unwrap()).unwrap(), v);
}

#[test]
fn missing_section_names_the_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, r#"{"seed": 1, "out": "x"}"#).unwrap();
    let err = format!("{:#}", cmd_run(&path).unwrap_err());
    assert!(err.contains("missing experiment section"), "{err}");
    for s in ["gd", "sgd", "profile", "init", "interpolate", "verify"] {
        assert!(err.contains(s));
    }
}

#[test]
fn malformed_config_reports_line() {
    let err = ExperimentConfig::parse("{\n\"seed\": 1,\n\"gd\": {\"dist\": 3}\n}").unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn gd_outputs_exist_parse_and_rerun_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let path = dir.path().join("c.json");
        fs::write(&path, gd_doc(out)).unwrap();
        let r = cmd_run(&path).unwrap();
        assert!(r.ok);
    }
    assert_eq!(header(&a.join("trajectory.csv")), io::TRAJECTORY_HEADER);
    assert_eq!(header(&a.join("profile.csv")), io::PROFILE_HEADER);
    let rows: Vec<TrajectoryCsvRow> = io::read_csv(&a.join("trajectory.csv")).unwrap();
    assert!(rows.len() > 1 && rows[0].t == 0);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["experiment"], "gd");
    assert_eq!(meta["config"]["seed"], 11);
    assert!(meta["result"]["run_config"]["w_star"].is_array());
    for f in ["trajectory.csv", "profile.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn init_and_interpolate_headers() {
    let dir = tempfile::tempdir().unwrap();
    let doc = format!(
        r#"{{"out": {:?}, "init": {{"ps": [2, 4], "alphas": [0.05, 0.5], "trials": 2000}}}}"#,
        dir.path().join("init")
    );
    run_experiment(&ExperimentConfig::parse(&doc).unwrap()).unwrap();
    let f = dir.path().join("init/init.csv");
    assert_eq!(header(&f), io::INIT_HEADER);
    // α = 0.5 is outside the admissible range for both p and is skipped
    assert_eq!(fs::read_to_string(&f).unwrap().lines().count(), 3);

    let doc = format!(
        r#"{{"out": {:?}, "interpolate": {{"gd": {{"dist": {{"kind": "standard_gaussian", "p": 4, "k": 1}},
             "schedule": {{"kind": "constant", "eta": 1.0}}, "n_mc": 5000, "max_iters": 2000}},
             "n_eval": 5000, "grid_size": 5}}}}"#,
        dir.path().join("interp")
    );
    run_experiment(&ExperimentConfig::parse(&doc).unwrap()).unwrap();
    let f = dir.path().join("interp/interpolation.csv");
    assert_eq!(header(&f), io::CURVE_HEADER);
    assert_eq!(fs::read_to_string(&f).unwrap().lines().count(), 6);
}

#[test]
fn interpolation_endpoints() {
    let spec = DistributionSpec::gaussian(3, 1);
    let data = sample(&spec, 2000, 5).unwrap();
    let ws = RealVector::from_slice(&[1.0, -0.5, 0.2]).unwrap();
    let w = RealVector::from_slice(&[0.3, 0.9, -1.0]).unwrap();
    let curve = cmd_interpolate(&w, &ws, &data, 11).unwrap();
    assert_eq!(curve.len(), 11);
    assert_eq!(curve[0], (0.0, 0.0));
    assert_eq!(curve[10].0, 1.0);
    assert!(curve[10].1 > 0.0);
    assert!(cmd_interpolate(&ws, &ws, &data, 7).unwrap().iter().all(|c| c.1 == 0.0));
    assert!(cmd_interpolate(&w, &ws, &data, 1).is_err());
}

#[test]
fn compare_never_passes_beyond_tolerance() {
    for (m, b, t) in [(1.0, 0.5, 0.1), (0.2, 0.5, 0.2), (0.45, 0.5, 0.05), (f64::NAN, 0.0, 1.0)] {
        let lo = CheckResult::compare("x", m, Relation::AtLeast, b, t, 1);
        assert_eq!(lo.pass, Some(m >= b - t));
        let hi = CheckResult::compare("x", m, Relation::AtMost, b, t, 1);
        assert_eq!(hi.pass, Some(m <= b + t));
        assert!(lo.line().contains("tol"));
    }
}

#[test]
fn failing_check_is_recorded_and_run_continues() {
    // constant-rate GD cannot provide a contraction profile
    let bad = CheckSpec::Contraction {
        gd: GdSection {
            dist: DistributionSpec::gaussian(3, 1),
            w_star: None,
            init: relu_lab::optimize::Init::Offset { ratio: 0.5 },
            schedule: ScheduleSpec::Constant { eta: 0.5 },
            n_mc: 1000,
            pinned: true,
            max_iters: 10,
            stop_tol: 1e-3,
        },
        min_pass_fraction: 0.9,
    };
    let dup = CheckSpec::DuplicatePatches {
        dist: DistributionSpec::gaussian(3, 1),
        k: 3,
        params: ProfileParams { n_samples: 5000, n_w: 2, ..ProfileParams::default() },
    };
    let r = cmd_verify(&VerifySection { checks: vec![bad, dup] }, 0);
    assert_eq!(r.errors, 1);
    assert!(r.checks[0].error.as_deref().unwrap().contains("adaptive"));
    assert_eq!(r.checks[1].pass, Some(true));
    assert_eq!(r.checks[1].measured, Some(0.0));
    assert!(!r.all_passed());
}

#[test]
fn cli_help_and_print_config() {
    let bin = env!("CARGO_BIN_EXE_relu-lab");
    let out = std::process::Command::new(bin).arg("--help").output().unwrap();
    let help = String::from_utf8(out.stdout).unwrap();
    for s in ["run", "profile", "gd", "sgd", "init", "interpolate", "verify"] {
        assert!(help.contains(s), "{help}");
    }
    let out = std::process::Command::new(bin)
        .args(["gd", "--p", "4", "--eta", "0.5", "--seed", "9", "--print-config"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let cfg = ExperimentConfig::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.gd.unwrap().schedule, ScheduleSpec::Constant { eta: 0.5 });
    let out = std::process::Command::new(bin).args(["run", "/nonexistent.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
