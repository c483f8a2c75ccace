use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn evac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evac"))
        .args(args)
        .env_remove("EVAC_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

/// Copies a bundled scenario and its network into `dir`, letting the
/// caller edit both documents first.
fn edited(dir: &Path, name: &str, edit: impl FnOnce(&mut Value, &mut Value)) -> PathBuf {
    let src = scenarios();
    let mut s: Value =
        serde_json::from_str(&fs::read_to_string(src.join(format!("{name}.json"))).unwrap())
            .unwrap();
    let net_name = s["network"].as_str().unwrap().to_string();
    let mut n: Value =
        serde_json::from_str(&fs::read_to_string(src.join(&net_name)).unwrap()).unwrap();
    edit(&mut s, &mut n);
    fs::write(
        dir.join(&net_name),
        serde_json::to_string_pretty(&n).unwrap(),
    )
    .unwrap();
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, serde_json::to_string_pretty(&s).unwrap()).unwrap();
    path
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn bundled_scenarios_validate() {
    for name in ["household", "road", "facility"] {
        let p = scenarios().join(format!("{name}.json"));
        let o = evac(&["validate", "--scenario", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{name}: {}", text(&o.stderr));
    }
}

#[test]
fn fifo_violation_names_the_arc() {
    let dir = tempfile::tempdir().unwrap();
    let p = edited(dir.path(), "facility", |_, n| {
        n["arcs"][3]["profile"]["breakpoints"] = json!([[0, 200], [10, 20]]);
    });
    let o = evac(&["validate", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("arc 3"), "{}", text(&o.stderr));
}

#[test]
fn missing_shelter_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let p = edited(dir.path(), "facility", |s, _| {
        s["hazard"]["closed_shelters"] = json!([2, 9]);
    });
    let o = evac(&["validate", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("shelter 9"), "{}", text(&o.stderr));
    // The same scenario is refused by run before anything executes.
    let out = dir.path().join("out");
    let o = evac(&[
        "run",
        "--scenario",
        p.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn unreadable_scenario_is_a_runtime_error() {
    let o = evac(&["validate", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn empty_incident_stream_runs_to_zero_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let p = edited(dir.path(), "road", |s, _| {
        s["incidents"] = json!([]);
        s["approaching"] = json!([]);
    });
    let out = dir.path().join("out");
    let o = evac(&[
        "run",
        "--scenario",
        p.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    assert!(o.stdout.is_empty());
    let m: Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["tet"], json!(0.0));
    assert_eq!(m["ct"], json!(0.0));
    assert_eq!(m["total_evacuated"], json!(0));
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenarios().join("facility.json");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = evac(&[
            "run",
            "--scenario",
            p.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "5",
        ]);
        assert_eq!(code(&o), 0, "{}", text(&o.stderr));
        assert!(text(&o.stdout).contains("total evacuated"));
    }
    let fa = files(&a);
    assert!(fa.iter().any(|(p, _)| p == Path::new("trace.jsonl")));
    assert!(fa.iter().any(|(p, _)| p == Path::new("plans.json")));
    assert!(fa.iter().any(|(p, _)| p.starts_with("signals")));
    assert!(fa.iter().any(|(p, _)| p.starts_with("solvers")));
    assert_eq!(fa, files(&b));
}

#[test]
fn out_directory_defaults_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenarios().join("household.json");
    let o = Command::new(env!("CARGO_BIN_EXE_evac"))
        .args(["run", "--quiet", "--scenario", p.to_str().unwrap()])
        .env("EVAC_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    assert!(dir.path().join("trace.jsonl").exists());
}

#[test]
fn exact_and_evo_report_the_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenarios().join("facility.json");
    let mut metrics = Vec::new();
    for solver in ["exact", "evo"] {
        let out = dir.path().join(solver);
        let o = evac(&[
            "run",
            "--quiet",
            "--scenario",
            p.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--solver",
            solver,
        ]);
        assert_eq!(code(&o), 0, "{}", text(&o.stderr));
        metrics.push(fs::read_to_string(out.join("metrics.json")).unwrap());
    }
    assert_eq!(metrics[0], metrics[1]);
}

#[test]
fn oracle_passes_on_micro_instances() {
    let p = scenarios().join("facility.json");
    for module in ["cover", "dispatch", "busevac"] {
        let o = evac(&[
            "oracle",
            "--scenario",
            p.to_str().unwrap(),
            "--module",
            module,
        ]);
        assert_eq!(code(&o), 0, "{module}: {}", text(&o.stderr));
        let out = text(&o.stdout);
        assert!(out.trim_end().ends_with("pass"), "{out}");
    }
}

#[test]
fn oracle_refuses_oversized_instances() {
    let dir = tempfile::tempdir().unwrap();
    let p = edited(dir.path(), "facility", |s, _| {
        let extra = json!({"id": 3, "location": 9, "demand": 4, "boarding_cap": 4});
        s["pickups"].as_array_mut().unwrap().push(extra);
    });
    let o = evac(&[
        "oracle",
        "--scenario",
        p.to_str().unwrap(),
        "--module",
        "busevac",
    ]);
    assert_eq!(code(&o), 1);
    assert!(text(&o.stderr).contains("too large"), "{}", text(&o.stderr));
}

#[test]
fn oracle_needs_the_planner_to_run() {
    let p = scenarios().join("household.json");
    let o = evac(&[
        "oracle",
        "--scenario",
        p.to_str().unwrap(),
        "--module",
        "busevac",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn batch_tabulates_every_combination() {
    let dir = tempfile::tempdir().unwrap();
    let h = scenarios().join("household.json");
    let r = scenarios().join("road.json");
    let o = evac(&[
        "batch",
        "--scenario",
        h.to_str().unwrap(),
        r.to_str().unwrap(),
        "--seed",
        "1",
        "2",
        "--solver",
        "greedy",
        "evo",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("batch.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    assert!(lines[1].starts_with("household,1,greedy,"));
    assert!(lines[8].starts_with("road,2,evo,"));
    assert_eq!(text(&o.stdout).lines().count(), 9);
}
