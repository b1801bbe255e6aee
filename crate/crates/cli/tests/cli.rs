use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybrid-reduce"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn example_writes_artifacts_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["example", "--orders", "2,1,2,1", "--step", "2e-3", "--out-dir", p(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(!text.contains("FAIL"));
    assert!(text.contains("23.8148"));
    for f in [
        "model.json",
        "observability.json",
        "reachability.json",
        "schedule.json",
        "input.json",
        "reduced_2121.json",
        "compare_2121.csv",
    ] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let csv = std::fs::read_to_string(dir.path().join("compare_2121.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("time,mode,o,"));
}

#[test]
fn file_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(&["example", "--orders", "2,2,2,2", "--step", "5e-3", "--out-dir", p(d)])), 0);
    let model = d.join("model.json");

    let out = run(&["validate", p(&model)]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("OK: 4 modes"));

    let out = run(&["check", p(&model), p(&d.join("observability.json"))]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));

    let reduced = d.join("r.json");
    let out = run(&[
        "reduce",
        p(&model),
        "--orders",
        "q1=2,q2=1,q3=2,q4=1",
        "--obs",
        p(&d.join("observability.json")),
        "--reach",
        p(&d.join("reachability.json")),
        "-o",
        p(&reduced),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&reduced).unwrap()).unwrap();
    let bound = doc["provenance"]["bound"].as_f64().unwrap();
    assert!((bound - 23.8148).abs() < 1e-3);

    let csv = d.join("c.csv");
    let out = run(&[
        "compare",
        p(&model),
        p(&reduced),
        "--input",
        p(&d.join("input.json")),
        "--schedule",
        p(&d.join("schedule.json")),
        "--step",
        "5e-3",
        "-o",
        p(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("PASS"));

    // An absurdly small bound must be reported as violated.
    let out = run(&["compare", p(&model), p(&reduced), "--bound", "1e-6", "--step", "5e-3"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn solve_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(&["random", "--seed", "3", "--horizon", "2", "--out-dir", p(d)])), 0);
    let model = d.join("model.json");

    let out = run(&[
        "simulate",
        p(&model),
        "--input",
        p(&d.join("input.json")),
        "--schedule",
        p(&d.join("schedule.json")),
        "--exact",
        "--step",
        "1e-2",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("time,mode,o,x1"));
    assert!(text.lines().count() > 100);

    let gram = d.join("q.json");
    let out = run(&["solve", p(&model), "--kind", "stability", "-o", p(&gram)]);
    match code(&out) {
        0 => assert_eq!(code(&run(&["check", p(&model), p(&gram)])), 0),
        1 => assert!(stderr(&out).contains("infeasible")),
        c => panic!("exit {c}: {}", stderr(&out)),
    }
}

#[test]
fn random_is_seeded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(code(&run(&["random", "--seed", "11", "--out-dir", p(d.path())])), 0);
    }
    for f in ["model.json", "schedule.json", "input.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn infeasible_scaling_exits_one() {
    let out = run(&["example", "--tau", "1"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("infeasible"));
}

#[test]
fn bad_inputs_exit_two() {
    assert_eq!(code(&run(&["validate", "/definitely/not/here.json"])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "{ not json").unwrap();
    assert_eq!(code(&run(&["validate", p(&junk)])), 2);

    let model = dir.path().join("m.json");
    assert_eq!(code(&run(&["example", "--orders", "1,1,1,1", "--step", "1e-2", "--out-dir", p(dir.path())])), 0);
    std::fs::rename(dir.path().join("model.json"), &model).unwrap();
    let out = run(&["reduce", p(&model), "--orders", "9,9,9,9"]);
    assert_eq!(code(&out), 2);
    let out = run(&["reduce", p(&model), "--orders", "q9=1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn invalid_model_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(&["random", "--seed", "5", "--out-dir", p(d)])), 0);
    let path = d.join("model.json");
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    // Point the initial mode at a state vector of the wrong length.
    let x0 = doc["initial"]["x0"].as_array_mut().unwrap();
    x0.push(serde_json::json!(0.0));
    x0.push(serde_json::json!(0.0));
    x0.push(serde_json::json!(0.0));
    x0.push(serde_json::json!(0.0));
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = run(&["validate", p(&path)]);
    assert_eq!(code(&out), 1, "{}{}", stdout(&out), stderr(&out));
}
