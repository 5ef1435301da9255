use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kinetic::formats::{self, CampaignDoc, ExplorationDoc, RunReport};

fn kinetic(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinetic"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

const REPORTS: [&str; 8] = [
    "net.json",
    "train_report.json",
    "spec_net.json",
    "ranges.json",
    "exploration.json",
    "campaign.json",
    "run_report.json",
    "report/pruning.csv",
];

#[test]
fn watertank_pipeline_emits_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinetic(&["run", "--benchmark", "watertank", "--deterministic"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in REPORTS {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    for log in ["train", "compile-stl", "explore", "falsify", "report"] {
        assert!(dir.path().join(format!("{log}.log")).exists(), "{log}.log");
    }
    let r: RunReport = formats::read_json(&dir.path().join("run_report.json")).unwrap();
    assert_eq!(r.exploration.horizon, 4);
    assert!(r.timing.is_none());
    assert_eq!(r.config["falsify"]["seed"], 3);
    assert_eq!(r.config["train"]["seed"], 1);
    let pruning = fs::read_to_string(dir.path().join("report/pruning.csv")).unwrap();
    assert!(pruning.starts_with("horizon,branches,"));
    assert_eq!(pruning.lines().count(), 2);
}

#[test]
fn sequential_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = kinetic(&["run", "--deterministic", "--seed", "9"], d.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in REPORTS.iter().chain(&["report/vulnerabilities.csv"]) {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn parallel_exploration_matches_sequential() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (d, jobs) in [(&a, "1"), (&b, "4")] {
        for stage in ["train", "compile-stl", "explore"] {
            let o = kinetic(&[stage, "--deterministic", "--jobs", jobs], d.path());
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let x: ExplorationDoc = formats::read_json(&a.path().join("exploration.json")).unwrap();
    let y: ExplorationDoc = formats::read_json(&b.path().join("exploration.json")).unwrap();
    assert_eq!(x, y);
}

#[test]
fn falsify_with_nothing_to_check_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["train", "compile-stl", "explore"] {
        assert_eq!(code(&kinetic(&[stage, "--deterministic"], dir.path())), 0);
    }
    let path = dir.path().join("exploration.json");
    let mut doc: ExplorationDoc = formats::read_json(&path).unwrap();
    doc.unsafe_.clear();
    doc.uncertain.clear();
    formats::write_json(&path, &doc).unwrap();
    let o = kinetic(&["falsify", "--deterministic"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let c: CampaignDoc = formats::read_json(&dir.path().join("campaign.json")).unwrap();
    assert!(c.runs.is_empty());
    assert_eq!(c.totals.simulations, 0);
}

#[test]
fn counterexample_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinetic(&["run", "--benchmark", "engine-v1", "--deterministic"], dir.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let c: CampaignDoc = formats::read_json(&dir.path().join("campaign.json")).unwrap();
    assert!(c.totals.found >= 1);
    assert!(dir.path().join("report/counterexample_0.csv").exists());
    let o = kinetic(&["report", "--benchmark", "engine-v1"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_artifact_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinetic(&["explore"], dir.path());
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("net.json"), "{err}");
    assert_eq!(code(&kinetic(&["falsify"], dir.path())), 1);
}

#[test]
fn invalid_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&kinetic(&["train", "--benchmark", "nope"], dir.path())), 1);

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "benchmark = \"watertank\"\nhorizon = 0\n").unwrap();
    assert_eq!(code(&kinetic(&["train", "--config", cfg.to_str().unwrap()], dir.path())), 1);

    fs::write(&cfg, "benchmark = \"watertank\"\nhorizn = 3\n").unwrap();
    let o = kinetic(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizn"));

    fs::write(dir.path().join("net.json"), "{\"format_version\": 1,\n \"layers\": 3").unwrap();
    fs::write(dir.path().join("spec_net.json"), "{}").unwrap();
    let o = kinetic(&["explore"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("net.json"));
}
