use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apr-lab")).args(args).env_remove("APR_LAB_SEED").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap().records().map(Result::unwrap).collect()
}

fn gen_tasks(dir: &Path, n: usize, seed: u64) -> String {
    ok(&["gen-tasks", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", p(dir)]);
    p(&dir.join("tasks.jsonl")).to_string()
}

#[test]
fn gen_tasks_is_deterministic_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    gen_tasks(&a, 20, 5);
    gen_tasks(&b, 20, 5);
    let first = fs::read(a.join("tasks.jsonl")).unwrap();
    assert_eq!(first, fs::read(b.join("tasks.jsonl")).unwrap());
    assert_eq!(jsonl(&a.join("tasks.jsonl")).len(), 20);
    assert!(a.join("config.json").exists());

    ok(&["gen-tasks", "--n", "3", "--inputs", "5", "--out", p(&a)]);
    for task in jsonl(&a.join("tasks.jsonl")) {
        assert_eq!(task["inputs"].as_array().unwrap().len(), 5);
    }

    assert_eq!(run(&["gen-tasks", "--n", "0", "--out", p(&a)]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--children", "11", "--tasks", "x"]).status.code(), Some(2));
    let missing = dir.path().join("nope.jsonl");
    assert_eq!(run(&["solve", "--tasks", p(&missing), "--out", p(&a)]).status.code(), Some(3));
}

#[test]
fn solve_respects_child_limit_and_degenerates_at_zero_p() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = gen_tasks(dir.path(), 25, 9);
    let apr = dir.path().join("apr");
    ok(&["solve", "--tasks", &tasks, "--method", "apr", "--children", "10", "--promising-p", "0.5", "--out", p(&apr)]);
    let outcomes = jsonl(&apr.join("outcomes.jsonl"));
    assert_eq!(outcomes.len(), 25);
    assert!(outcomes.iter().all(|o| o["child_count"].as_u64().unwrap() <= 10));
    assert!(outcomes.iter().any(|o| o["child_count"].as_u64().unwrap() > 0));

    let (sos, apr0) = (dir.path().join("sos"), dir.path().join("apr0"));
    ok(&["solve", "--tasks", &tasks, "--method", "sos+", "--promising-p", "0", "--out", p(&sos)]);
    ok(&["solve", "--tasks", &tasks, "--method", "apr", "--promising-p", "0", "--out", p(&apr0)]);
    assert_eq!(fs::read(sos.join("traces.jsonl")).unwrap(), fs::read(apr0.join("traces.jsonl")).unwrap());
}

#[test]
fn sweep_over_children_writes_a_row_per_value_and_cap() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = gen_tasks(dir.path(), 10, 2);
    let out = dir.path().join("sweep");
    ok(&["sweep", "--tasks", &tasks, "--axis", "children", "--values", "0..10", "--out", p(&out)]);
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 11 * 4);
    for cap in ["1024", "2048", "3072", "4096"] {
        assert_eq!(rows.iter().filter(|r| &r[0] == cap).count(), 11);
    }
    for name in [
        "accuracy_vs_total_tokens.csv",
        "accuracy_vs_sequential_tokens.csv",
        "accuracy_vs_latency.csv",
        "accuracy_vs_context_cap.csv",
    ] {
        assert!(!csv_rows(&out.join(name)).is_empty(), "{name}");
    }
}

#[test]
fn eval_reports_cons_below_pass() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = gen_tasks(dir.path(), 15, 4);
    let out = dir.path().join("eval");
    ok(&["eval", "--tasks", &tasks, "--cons-n", "8", "--promising-p", "0.3", "--out", p(&out)]);
    let rows = csv_rows(&out.join("pass_cons.csv"));
    assert_eq!(rows.len(), 2 * 8);
    for r in &rows {
        let (pass, cons): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(cons <= pass + 1e-12);
    }
    assert_eq!(csv_rows(&out.join("summary.csv")).len(), 2);
}

#[test]
fn tune_writes_a_point_per_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tune");
    let args = "tune --steps 150 --group 5 --batch 2 --train-n 8 --validation-n 8 --out";
    let mut args: Vec<&str> = args.split(' ').collect();
    args.push(p(&out));
    ok(&args);
    let rows = csv_rows(&out.join("learning_curve.csv"));
    let steps: Vec<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    let expected: Vec<String> = (1..=6).map(|k| (k * 25).to_string()).collect();
    assert_eq!(steps, expected);
    let params: Value = serde_json::from_str(&fs::read_to_string(out.join("params.json")).unwrap()).unwrap();
    assert!(params["promising_p"].as_f64().unwrap() <= 1.0);
}

#[test]
fn replay_reproduces_outputs_without_touching_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = gen_tasks(dir.path(), 10, 3);
    let before = fs::read(&tasks).unwrap();
    let first = dir.path().join("first");
    ok(&["solve", "--tasks", &tasks, "--promising-p", "0.4", "--seed", "17", "--out", p(&first)]);
    let second = dir.path().join("second");
    ok(&["replay", p(&first.join("config.json")), "--out", p(&second)]);
    for name in ["outcomes.jsonl", "traces.jsonl"] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name}");
    }
    assert_eq!(fs::read(&tasks).unwrap(), before);
}
