use std::path::Path;

use gwt_core::cli::{run, EXIT_CONFIG, EXIT_OK, EXIT_SCENARIO};
use gwt_core::scenario::bundled;
use gwt_core::scenario::metrics::compute_metrics;
use gwt_core::types::Cell;

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn gwt(args: &[&str]) -> Output {
    let mut argv = vec!["gwt".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(&argv, &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_policy_names_the_flag() {
    let o = gwt(&["run", "--scenario", "room-goal-switch", "--policy", "loudest"]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("--policy"), "{}", o.stderr);
}

#[test]
fn bad_engine_is_a_config_error() {
    let o = gwt(&["run", "--scenario", "room-goal-switch", "--engine", "turbo"]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("--engine"), "{}", o.stderr);
    let o = gwt(&["run", "--scenario", "room-goal-switch", "--engine", "pipeline:voice,voice"]);
    assert_eq!(o.code, EXIT_CONFIG);
}

#[test]
fn no_memory_conflicts_with_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("m.json");
    let o = gwt(&["run", "--scenario", "fig4-abstract", "--no-memory", "--memory-out", path(&snap)]);
    assert_eq!(o.code, EXIT_CONFIG);
}

#[test]
fn missing_scenario_exits_3() {
    let o = gwt(&["run", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(o.code, EXIT_SCENARIO);
}

#[test]
fn goal_on_obstacle_exits_3() {
    let mut s = bundled("room-goal-switch").unwrap().unwrap();
    let w = s.world.as_mut().unwrap();
    w.goal = Cell::new(4, 4);
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    std::fs::write(&file, s.to_json()).unwrap();
    let o = gwt(&["run", "--scenario", path(&file)]);
    assert_eq!(o.code, EXIT_SCENARIO, "{}", o.stderr);
}

#[test]
fn malformed_scenario_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    std::fs::write(&file, "{\"schema_version\": 1,").unwrap();
    let o = gwt(&["run", "--scenario", path(&file)]);
    assert_eq!(o.code, EXIT_SCENARIO);
}

#[test]
fn traces_are_byte_identical_and_end_with_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for f in [&a, &b] {
        let o = gwt(&["run", "--scenario", "human-crossing", "--seed", "5", "--trace-out", path(f)]);
        assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);

    let text = String::from_utf8(ta).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("{\"metrics\":"), "{last}");
    let body: String = text.lines().filter(|l| !l.starts_with("{\"metrics\":")).map(|l| format!("{l}\n")).collect();
    let recomputed = compute_metrics(&body).unwrap();
    let stored: serde_json::Value = serde_json::from_str(last).unwrap();
    assert_eq!(stored["metrics"], serde_json::to_value(&recomputed).unwrap());
}

#[test]
fn memory_snapshot_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("m.json");
    let o = gwt(&["run", "--scenario", "fig4-abstract", "--memory-out", path(&snap)]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let o = gwt(&["run", "--scenario", "fig4-abstract", "--memory-in", path(&snap)]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.contains("cycles"), "{}", o.stdout);
    std::fs::write(&snap, "not json").unwrap();
    let o = gwt(&["run", "--scenario", "fig4-abstract", "--memory-in", path(&snap)]);
    assert_eq!(o.code, EXIT_CONFIG);
}

#[test]
fn compare_prints_both_columns() {
    let o = gwt(&["compare", "--scenario", "room-goal-switch"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.contains("gwt") && o.stdout.contains("pipeline"), "{}", o.stdout);
    assert!(o.stdout.contains("adaptation_latency") && o.stdout.contains("delta"), "{}", o.stdout);
}

#[test]
fn fig4_reports_the_collapse() {
    let o = gwt(&["fig4"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.contains("3 → 2, saved 1"), "{}", o.stdout);
    let o = gwt(&["fig4", "--no-memory"]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.contains("3 → 3, saved 0"), "{}", o.stdout);
    let o = gwt(&["fig4", "--chunk-cap", "0"]);
    assert_eq!(o.code, EXIT_CONFIG);
}

#[test]
fn help_exits_zero() {
    let o = gwt(&["--help"]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.contains("fig4"));
}
