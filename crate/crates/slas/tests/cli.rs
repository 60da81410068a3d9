use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use slas::runner::{monte_carlo, run_policy, RunOptions};
use slas::scenario::load_scenario;
use slas_core::sim::{PolicyKind, Randomization};

fn slas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slas")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = slas(&["run", "--scenario", "empty_road", "--out", out.to_str().unwrap(), "--set", "planner.gamma2=100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("seed: 0\n"), "{stdout}");
    for f in ["episode.csv", "events.json", "summary.json", "plots/travel_time.svg", "plots/lateral.svg", "plots/headway.svg"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["scenario"]["planner"]["gamma2"], 100.0);
    assert_eq!(summary["overrides"][0], "planner.gamma2=100");
    assert_eq!(summary["policies"][0]["policy"], "slas");
    let svg = std::fs::read_to_string(out.join("plots/lateral.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&slas(&["compare", "--policy", "slas", "--out", out])), 64);
    assert_eq!(code(&slas(&["run", "--policy", "slas,mobil", "--out", out])), 64);
    assert_eq!(code(&slas(&["run", "--policy", "fastest", "--out", out])), 64);
    assert_eq!(code(&slas(&["montecarlo", "--runs", "0", "--out", out])), 64);
    assert_eq!(code(&slas(&["frobnicate"])), 64);
    assert_eq!(code(&slas(&["--help"])), 0);
}

#[test]
fn unwritable_output_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    let out = file.join("sub");
    let o = slas(&["run", "--scenario", "empty_road", "--policy", "nochange", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot write"));
}

#[test]
fn invalid_scenarios_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = slas(&["run", "--scenario", "no_such_scenario", "--out", out]);
    assert_eq!(code(&o), 3);
    let o = slas(&["run", "--set", "road.lane_width_m=-1", "--out", out]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("lane_width"));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"road\": 1}").unwrap();
    let o = slas(&["run", "--scenario", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`road`"));
}

#[test]
fn empty_road_policies_tie() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = slas(&["compare", "--scenario", "empty_road", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for p in ["slas", "mobil", "nochange"] {
        assert!(out.join(p).join("episode.csv").is_file());
    }
    let summary = json(&out.join("summary.json"));
    let ratios = summary["ratios"].as_array().unwrap();
    assert_eq!(ratios.len(), 2);
    for r in ratios {
        let pct = r["travel_time_improvement_pct"].as_f64().unwrap();
        assert!(pct.abs() < 1.0, "{r}");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = slas(&["montecarlo", "--runs", "2", "--seed", "7", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(out.join("montecarlo.csv")).unwrap(), std::fs::read(out.join("runs.csv")).unwrap())
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let summary = json(&dir.path().join("a/summary.json"));
    assert_eq!(summary["seed"], 7);
}

#[test]
fn single_run_campaign_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mc");
    let o = slas(&["montecarlo", "--runs", "1", "--policy", "slas,mobil", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = slas::csvlog::read_table(std::fs::File::open(out.join("montecarlo.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    for (_, row) in rows {
        assert_eq!(row.runs, 1);
        assert!(row.columns.iter().all(|c| c.std == 0.0));
        assert_eq!(row.long_jerk.std, 0.0);
    }
}

#[test]
fn campaign_of_one_is_the_single_episode() {
    let (_, base) = load_scenario("case_study", &[]).unwrap();
    let opts = RunOptions::default();
    let mc = monte_carlo(&base, 1, 3, &[PolicyKind::Mobil], &Randomization::default(), &opts);
    let run = &mc.runs[0];
    let single = run_policy(&run.scenario, PolicyKind::Mobil, &opts);
    assert_eq!(run.episodes[0].log, single.log);
    assert_eq!(mc.table[0].1.columns[0].mean, single.metrics.travel_time.unwrap());
}
