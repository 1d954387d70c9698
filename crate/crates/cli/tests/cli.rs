//! End-to-end behaviour of the `boltzkit` binary: exit codes, output
//! envelopes, dry runs, digests and byte-level reproducibility.

use std::path::Path;
use std::process::{Command, Output};

use boltzkit::Error;
use boltzkit_cli::commands::parse_l_values;
use boltzkit_cli::{exit_code, EXIT_FAILURE, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION};
use serde_json::Value;

fn boltzkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boltzkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn lines(out: &Output) -> Vec<Value> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).expect("every stdout line is JSON"))
        .collect()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL_RUN: &str = r#"{
  "grid": {"nx": 4, "dx_dims": 1, "nv": 12, "R": 5.0},
  "solver": {"dt": 0.005, "T": 0.01, "n_picard": 2, "checkpoint_every": 1},
  "initial": {"kind": "perturbed", "amplitude": 0.1, "seed": null},
  "epsilons": [0.01, 0.001]
}"#;

#[test]
fn constants_emits_lambda_omega_cancellation_and_fit() {
    let out = boltzkit(&["constants", "--gamma", "0", "--s", "0.5", "--l", "2..256"]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let recs = lines(&out);
    // 8 orders × (λ, ω) + A_{γ,s} + the asymptotic fit.
    assert_eq!(recs.len(), 18);
    let digest = recs[0]["config_digest"].as_str().unwrap().to_string();
    assert_eq!(digest.len(), 64);
    for r in &recs {
        assert_eq!(r["command"], "constants");
        assert_eq!(r["seed"], 0);
        assert_eq!(r["config_digest"], digest.as_str());
    }
    let ls: Vec<f64> = recs
        .iter()
        .filter(|r| r["record"]["kind"] == "lambda")
        .map(|r| r["record"]["l"].as_f64().unwrap())
        .collect();
    assert_eq!(ls, vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0]);
    let a = recs.iter().find(|r| r["record"]["kind"] == "cancellation").unwrap();
    assert!(a["record"]["l"].is_null());
    assert!(a["record"]["value"].as_f64().unwrap() > 0.0);
    assert!(recs.last().unwrap()["record"]["asymptotic_fit"]["lambda_slope"].is_number());
}

#[test]
fn missing_config_is_a_validation_error() {
    let out = boltzkit(&["evolve", "--config", "/definitely/missing.json"]);
    assert_eq!(out.status.code(), Some(EXIT_VALIDATION));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read config"));
}

#[test]
fn invalid_arguments_and_configs_exit_with_two() {
    assert_eq!(boltzkit(&["no-such-command"]).status.code(), Some(EXIT_VALIDATION));
    assert_eq!(boltzkit(&["constants", "--s", "1.5"]).status.code(), Some(EXIT_VALIDATION));
    assert_eq!(boltzkit(&["constants", "--l", "300..400"]).status.code(), Some(EXIT_VALIDATION));
    let dir = tempfile::tempdir().unwrap();
    let bad_json = write(dir.path(), "bad.json", "{ not json");
    assert_eq!(boltzkit(&["qeval", "--config", &bad_json]).status.code(), Some(EXIT_VALIDATION));
    let unknown = write(dir.path(), "unknown.json", r#"{"no_such_field": 1}"#);
    assert_eq!(boltzkit(&["evolve", "--config", &unknown]).status.code(), Some(EXIT_VALIDATION));
    let bad_grid = write(dir.path(), "grid.json", r#"{"grid": {"nx": 1, "dx_dims": 1, "nv": 4, "R": 1.0}}"#);
    assert_eq!(boltzkit(&["qeval", "--config", &bad_grid]).status.code(), Some(EXIT_VALIDATION));
}

#[test]
fn help_exits_cleanly() {
    let out = boltzkit(&["--help"]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["constants", "weights", "geometry-check", "qeval", "norms", "verify", "evolve", "sweep"] {
        assert!(text.contains(sub), "help lists {sub}");
    }
}

#[test]
fn error_kinds_map_to_documented_exit_codes() {
    assert_eq!(exit_code(&Error::Validation("x".into())), EXIT_VALIDATION);
    assert_eq!(exit_code(&Error::Numerical("x".into())), EXIT_NUMERICAL);
    assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), EXIT_FAILURE);
}

#[test]
fn dry_run_prints_the_plan_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", SMALL_RUN);
    let outdir = dir.path().join("out");
    let out = boltzkit(&[
        "evolve",
        "--config",
        &cfg,
        "--dry-run",
        "--output-dir",
        outdir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    assert!(!outdir.exists());
    let recs = lines(&out);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["dry_run"], true);
    assert_eq!(recs[0]["plan"]["config"]["grid"]["nv"], 12);
    // Defaults are resolved into the plan.
    assert_eq!(recs[0]["plan"]["config"]["kernel"]["s"], 0.5);

    for args in [
        vec!["constants"],
        vec!["weights"],
        vec!["geometry-check"],
        vec!["qeval"],
        vec!["norms"],
        vec!["sweep"],
        vec!["verify", "moment-bound"],
        vec!["verify", "smallness"],
    ] {
        let mut a = args.clone();
        a.push("--dry-run");
        let out = boltzkit(&a);
        assert_eq!(out.status.code(), Some(EXIT_OK), "{args:?}");
        assert_eq!(lines(&out)[0]["dry_run"], true);
    }
}

#[test]
fn every_artifact_embeds_digest_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", SMALL_RUN);
    let outdir = dir.path().join("out");
    let out = boltzkit(&[
        "evolve",
        "--config",
        &cfg,
        "--seed",
        "7",
        "--output-dir",
        outdir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let jsonl = std::fs::read_to_string(outdir.join("evolve.jsonl")).unwrap();
    let rec: Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(rec["seed"], 7);
    let digest = rec["config_digest"].as_str().unwrap();
    let csv = std::fs::read_to_string(outdir.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), format!("# config_digest={digest} seed=7"));
    assert!(csv.lines().nth(1).unwrap().starts_with("n,t,"));
    assert_eq!(rec["record"]["iterations"], 2);
    assert!(rec["record"]["min_f"].as_f64().unwrap() >= 0.0);
}

#[test]
fn seed_and_config_change_the_digest() {
    let digest = |args: &[&str]| lines(&boltzkit(args))[0]["config_digest"].as_str().unwrap().to_string();
    let a = digest(&["weights", "--dry-run"]);
    assert_eq!(a, digest(&["weights", "--dry-run"]));
    assert_ne!(a, digest(&["weights", "--dry-run", "--seed", "1"]));
    assert_ne!(a, digest(&["weights", "--dry-run", "--step", "0.25"]));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", SMALL_RUN);
    let run = |tag: &str, threads: &str| {
        let out = dir.path().join(tag);
        let st = boltzkit(&[
            "sweep",
            "--config",
            &cfg,
            "--seed",
            "3",
            "--threads",
            threads,
            "--output-dir",
            out.to_str().unwrap(),
        ]);
        assert_eq!(st.status.code(), Some(EXIT_OK));
        let mut files: Vec<_> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files
            .iter()
            .map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap()))
            .collect::<Vec<_>>()
    };
    let a = run("a", "0");
    let b = run("b", "2");
    assert_eq!(a.len(), 3, "sweep.jsonl and one CSV per epsilon");
    assert_eq!(a, b);
}

#[test]
fn verify_reports_pass_and_failure_through_the_exit_code() {
    let out = boltzkit(&["verify", "symbol-unweighted"]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let rec = &lines(&out)[0];
    assert_eq!(rec["command"], "verify-symbol-unweighted");
    assert_eq!(rec["record"]["pass"], true);

    let dir = tempfile::tempdir().unwrap();
    // An impossible stability tolerance must fail honestly.
    let strict = write(
        dir.path(),
        "strict.json",
        r#"{"symbol": {"n_samples": 2000, "k_max": 64, "eta_scale": 3.0, "v_max": 10.0, "seed": 0, "stability_tol": 1e-12}}"#,
    );
    let out = boltzkit(&["verify", "symbol-weighted", "--config", &strict]);
    assert_eq!(out.status.code(), Some(EXIT_FAILURE));
    assert_eq!(lines(&out)[0]["record"]["pass"], false);
}

#[test]
fn geometry_identities_pass_at_the_default_resolution() {
    for kind in ["carleman-cos", "carleman-sin"] {
        let out = boltzkit(&["geometry-check", "--kind", kind]);
        assert_eq!(out.status.code(), Some(EXIT_OK));
        let r = &lines(&out)[0]["record"];
        assert!(r["rel_discrepancy"].as_f64().unwrap() <= 1e-4);
    }
}

#[test]
fn qeval_reports_conservation_defects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "q.json",
        r#"{"grid": {"nx": 1, "dx_dims": 1, "nv": 12, "R": 5.0},
            "f": {"kind": "mixture", "seed": 4}, "g": {"kind": "mixture", "seed": 5}}"#,
    );
    let out = boltzkit(&["qeval", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let r = &lines(&out)[0]["record"];
    assert_eq!(r["scheme"], "fourier");
    assert!(r["mass_defect"].as_f64().unwrap() < 1e-6);
}

#[test]
fn l_ranges_expand_geometrically() {
    assert_eq!(parse_l_values("2..256").unwrap(), vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0]);
    assert_eq!(parse_l_values("3..20").unwrap(), vec![4.0, 8.0, 16.0]);
    assert_eq!(parse_l_values("5, 8").unwrap(), vec![5.0, 8.0]);
    assert!(parse_l_values("9..15").is_err());
    assert!(parse_l_values("0..4").is_err());
    assert!(parse_l_values("x").is_err());
}
