use chainswarm::cli::{main_with_args, EXIT_COMPLETE, EXIT_INCOMPLETE, EXIT_INVALID, EXIT_USAGE};
use std::path::{Path, PathBuf};
use std::process::Command;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn cli(out: &Path, args: &[&str]) -> i32 {
    let mut v = vec!["chainswarm".to_string(), "--out".into(), out.display().to_string()];
    v.extend(args.iter().map(|s| s.to_string()));
    main_with_args(v)
}

fn write_spec(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("s.scenario");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"
version = 1
name = "small"
max_ticks = 3000
[map]
width = 16
height = 16
layers = 1
[control]
v_max = 0.5
r_col = 0.25
[mission]
targets = [[9.0, 8.0, 0.0]]
root = { mode = "fixed", id = 0 }
[robots]
ground = 6
spawn = { center = [4.0, 8.0], spacing = 0.6 }
"#;

#[test]
fn run_writes_four_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let spec = scenario("open_field.scenario");
    assert_eq!(cli(out.path(), &["run", spec.to_str().unwrap()]), EXIT_COMPLETE);
    let dir = out.path().join("open_field");
    for f in ["metrics.csv", "trajectory.csv", "decisions.csv", "final.svg"] {
        let meta = std::fs::metadata(dir.join(f)).unwrap_or_else(|_| panic!("{f} missing"));
        assert!(meta.len() > 0, "{f} empty");
    }
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(metrics.lines().nth(1).unwrap().contains(",complete,"));
}

#[test]
fn ordering_violation_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}[radio]\nrange = 2.5\nnear_field = 0.1\nsafe = 1.7\ncritical = 1.6\nbreak_away = 1.8\n");
    let spec = write_spec(dir.path(), &body);
    assert_eq!(cli(dir.path(), &["run", spec.to_str().unwrap()]), EXIT_INVALID);
    let msg = chainswarm::scenario::load_scenario(&spec).unwrap().resolve(dir.path()).unwrap_err().to_string();
    assert!(msg.contains("safe < critical"), "{msg}");
}

#[test]
fn unknown_field_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &SMALL.replace("r_col = 0.25", "r_col = 0.25\nturbo = true"));
    assert_eq!(cli(dir.path(), &["run", spec.to_str().unwrap()]), EXIT_INVALID);
    let e = chainswarm::scenario::load_scenario(&spec).unwrap_err().to_string();
    assert!(e.contains("control.turbo") || e.contains("turbo"), "{e}");
}

#[test]
fn tick_budget_one_is_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &SMALL.replace("max_ticks = 3000", "max_ticks = 1"));
    assert_eq!(cli(dir.path(), &["run", spec.to_str().unwrap()]), EXIT_INCOMPLETE);
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(dir.path(), &["frobnicate"]), EXIT_USAGE);
    let spec = write_spec(dir.path(), SMALL);
    assert_eq!(cli(dir.path(), &["batch", spec.to_str().unwrap(), "--sweep", "colour"]), EXIT_USAGE);
    assert_ne!(cli(dir.path(), &["batch", spec.to_str().unwrap(), "--reps", "0"]), EXIT_COMPLETE);
}

#[test]
fn batch_single_rep_summary_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let s = spec.to_str().unwrap();
    assert_eq!(cli(dir.path(), &["batch", s, "--reps", "1", "--seed", "4"]), EXIT_COMPLETE);
    let csv = std::fs::read_to_string(dir.path().join("small_batch/all.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let summary: Vec<&str> = csv.lines().last().unwrap().split(',').collect();
    // time factor column of the single run equals the summary median, IQR zero
    assert_eq!(row[7].parse::<f64>().unwrap(), summary[3].parse::<f64>().unwrap());
    assert_eq!(summary[4].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn batches_are_reproducible_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let s = spec.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(cli(&a, &["batch", s, "--reps", "3", "--seed", "10"]), EXIT_COMPLETE);
    assert_eq!(cli(&b, &["batch", s, "--reps", "3", "--seed", "10", "--jobs", "2"]), EXIT_COMPLETE);
    let ra = std::fs::read(a.join("small_batch/all.csv")).unwrap();
    let rb = std::fs::read(b.join("small_batch/all.csv")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn render_ticks() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let s = spec.to_str().unwrap();
    assert_eq!(cli(dir.path(), &["run", s]), EXIT_COMPLETE);
    let csv = dir.path().join("small/trajectory.csv");
    let c = csv.to_str().unwrap();
    let zero = dir.path().join("zero.svg");
    assert_eq!(cli(dir.path(), &["render", c, "--scenario", s, "--tick", "0", "--output", zero.to_str().unwrap()]), 0);
    let svg = std::fs::read_to_string(&zero).unwrap();
    assert!(!svg.contains("stroke=\"#2e8b57\" stroke-width=\"2\""), "tick 0 has chain edges");
    assert_eq!(svg.matches("class=\"start\"").count(), 6);
    let last = dir.path().join("last.svg");
    assert_eq!(cli(dir.path(), &["render", c, "--scenario", s, "--output", last.to_str().unwrap()]), 0);
    let svg = std::fs::read_to_string(&last).unwrap();
    assert!(svg.contains("stroke-width=\"2\""), "final tick lacks chain edges");
    assert!(svg.contains("class=\"safe\""));
    assert_eq!(cli(dir.path(), &["render", c, "--scenario", s, "--tick", "999999"]), EXIT_INVALID);
}

#[test]
fn render_rejects_foreign_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let csv = dir.path().join("t.csv");
    std::fs::write(&csv, "tick,robot,x,y\n0,0,1,1\n").unwrap();
    let code = cli(dir.path(), &["render", csv.to_str().unwrap(), "--scenario", spec.to_str().unwrap()]);
    assert_eq!(code, EXIT_INVALID);
}

#[test]
fn binary_honours_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let status = Command::new(env!("CARGO_BIN_EXE_chainswarm"))
        .env("CHAINSWARM_OUT", dir.path().join("envout"))
        .args(["run", spec.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_COMPLETE));
    assert!(dir.path().join("envout/small/metrics.csv").exists());
}
