use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use robust_ols_cli::{list_experiments, ExperimentKind, RunManifest};

fn manifests_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("manifests")
}

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_robust-ols"));
    cmd.env_remove("ROBUST_OLS_WORKERS");
    cmd
}

fn write_manifest(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("manifest.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(manifest: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg(manifest).arg("--output").arg(out).args(extra).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_COVERAGE: &str = r#"
kind = "coverage"
seed = 3

[params]
n = 30
reps = 200
rhos = [0.0, 0.5]
design_modes = ["random", "fixed"]
"#;

#[test]
fn listing_is_sorted_and_complete() {
    let text = list_experiments();
    let names: Vec<&str> = text.lines().filter(|l| !l.starts_with(' ') && l.contains('[')).map(|l| l.split(' ').next().unwrap()).collect();
    let expected: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
    assert_eq!(names, expected);
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    for line in text.lines().filter(|l| !l.starts_with(' ') && l.contains('[')) {
        let anchor = line.split('[').nth(1).unwrap().trim_end_matches(']');
        assert!(!anchor.is_empty(), "{line}");
    }
    let out = bin().arg("list").output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
}

#[test]
fn bundled_manifests_round_trip() {
    let mut kinds = Vec::new();
    for name in ["fig1a", "fig1b", "fig2", "fig3a", "fig3b", "fig4", "delta-limit", "rate-decay", "selfnorm-tail"] {
        let m = RunManifest::load(manifests_dir().join(format!("{name}.toml"))).unwrap();
        let again = RunManifest::from_toml_str(&m.to_toml_string()).unwrap();
        assert_eq!(m, again, "{name}");
        kinds.push(m.kind());
    }
    kinds.sort();
    assert_eq!(kinds, ExperimentKind::ALL.to_vec());
}

#[test]
fn zero_reps_exits_with_config_error_naming_reps() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), &SMALL_COVERAGE.replace("reps = 200", "reps = 0"));
    let out = run(&manifest, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("reps"), "{}", stderr(&out));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn schema_errors_exit_2_with_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), &SMALL_COVERAGE.replace("n = 30", "n = 30\nreplications = 5"));
    let out = run(&manifest, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("replications") && err.contains("line"), "{err}");

    let manifest = write_manifest(dir.path(), &SMALL_COVERAGE.replace("kind = \"coverage\"", "kind = \"coverige\""));
    assert_eq!(run(&manifest, &dir.path().join("out"), &[]).status.code(), Some(2));

    let missing = run(&dir.path().join("absent.toml"), &dir.path().join("out"), &[]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn invalid_correlation_parameter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), &SMALL_COVERAGE.replace("[0.0, 0.5]", "[0.0, 1.5]"));
    let out = run(&manifest, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("rho"), "{}", stderr(&out));
}

#[test]
fn indefinite_matrix_exits_3_naming_component() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(
        dir.path(),
        r#"
kind = "delta-dist"
seed = 1

[params]
n_grid = [2]
draws = 100

[[params.correlations]]
kind = "custom"
rows = [[1.0, 2.0], [2.0, 1.0]]
"#,
    );
    let out = run(&manifest, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("correlation"), "{}", stderr(&out));
}

#[test]
fn coverage_run_writes_tables_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), SMALL_COVERAGE);
    let out_dir = dir.path().join("out");
    let out = run(&manifest, &out_dir, &["--workers", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let random = fs::read_to_string(out_dir.join("coverage_random.csv")).unwrap();
    let lines: Vec<&str> = random.lines().collect();
    assert_eq!(lines[0], "rho,design_mode,noncoverage,mc_se");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.0000000000000000e0,random,"));
    // 17 significant digits: one leading digit and sixteen decimals.
    let value = lines[1].split(',').nth(2).unwrap();
    assert_eq!(value.split('e').next().unwrap().len(), 18, "{value}");
    assert!(out_dir.join("coverage_fixed.csv").exists());
    assert!(!out_dir.join("coverage_fixed_draws.csv").exists());

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["kind"], "coverage");
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["workers"], 2);
    assert!(meta["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(meta["manifest"]["params"]["reps"], 200);
    assert!(meta["version"].is_string());
}

#[test]
fn seed_flag_overrides_manifest_and_env_sets_workers() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), SMALL_COVERAGE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert!(run(&manifest, &a, &[]).status.success());
    assert!(run(&manifest, &b, &["--seed", "3"]).status.success());
    let out = bin()
        .env("ROBUST_OLS_WORKERS", "3")
        .args(["run", manifest.to_str().unwrap(), "--output", c.to_str().unwrap(), "--seed", "4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let read = |d: &Path| fs::read(d.join("coverage_random.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(c.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["workers"], 3);
    assert_eq!(meta["seed"], 4);
}

#[test]
fn fig3b_manifest_writes_boundary_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&manifests_dir().join("fig3b.toml"), dir.path(), &["--workers", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("gain_boundary.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rho,boundary_h");
    assert_eq!(lines.len(), 20);
    assert!(lines[1].starts_with("5.0000000000000003e-2,"));
}
