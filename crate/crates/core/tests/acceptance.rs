//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use apr_lab::corpus::{generate_corpus, length_bin, BIN_WIDTH};
use apr_lab::metrics::{compute_curves, cumulative_accuracy, CurveGrid, EvalConfig, EvalReport, OutcomeMatrix};
use apr_lab::runtime::simulate_latency;
use apr_lab::search::{derive_seed, UNBOUNDED_BEAM};
use apr_lab::solvers::SymbolicPolicy;
use apr_lab::tune::{group_advantages, tune, PolicyParams, TunerConfig};
use apr_lab::{encode, sample_tasks, validate_solution, BudgetConfig, ExpansionConfig, Runtime, Task, WorkerPool};
use rayon::prelude::*;

const SEED: u64 = 2024;

struct Report {
    failed: usize,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.failed += usize::from(!pass);
    }
}

fn soundness(r: &mut Report) {
    let start = Instant::now();
    let tasks = sample_tasks(10_000, 4, 100, SEED).unwrap();
    let cfg = ExpansionConfig::default();
    let runtime = Runtime::sequential(WorkerPool::default());
    let (mut solved, mut bad) = (0usize, 0usize);
    for make in [SymbolicPolicy::sos_plus, SymbolicPolicy::apr] {
        let results: Vec<(bool, bool)> = tasks
            .par_iter()
            .enumerate()
            .map(|(i, task)| {
                let policy = make(cfg.with_seed(derive_seed(SEED, i as u64)));
                let outcome = policy.solve(task, &BudgetConfig::default(), &runtime);
                let valid = outcome.solution.as_ref().is_some_and(|s| validate_solution(task, s));
                (outcome.solved(), outcome.solved() && !valid)
            })
            .collect();
        solved += results.iter().filter(|x| x.0).count();
        bad += results.iter().filter(|x| x.1).count();
    }
    let elapsed = start.elapsed();
    r.check(
        "solver soundness",
        bad == 0 && elapsed < Duration::from_secs(120),
        format!("{solved} goal_reached outcomes over 2x10000 runs, {bad} invalid, {:.1}s", elapsed.as_secs_f64()),
    );
}

fn completeness(r: &mut Report) {
    let tasks = sample_tasks(1000, 4, 100, SEED + 1).unwrap();
    let cfg = ExpansionConfig::default().with_beam(UNBOUNDED_BEAM).with_promising(0.0);
    let runtime = Runtime::sequential(WorkerPool::default());
    let solved = tasks
        .par_iter()
        .filter(|t| SymbolicPolicy::sos_plus(cfg).solve(t, &BudgetConfig::unbounded(), &runtime).solved())
        .count();
    r.check("oracle completeness", solved == tasks.len(), format!("{solved}/{} solved", tasks.len()));
}

fn degeneracy(r: &mut Report) {
    let tasks = sample_tasks(1000, 4, 100, SEED + 2).unwrap();
    let runtime = Runtime::default();
    let differing = tasks
        .par_iter()
        .enumerate()
        .filter(|(i, task)| {
            let cfg = ExpansionConfig::default().with_promising(0.0).with_seed(*i as u64);
            let text = |p: SymbolicPolicy| {
                serde_json::to_vec(&encode(&p.solve(task, &BudgetConfig::default(), &runtime).trace).unwrap()).unwrap()
            };
            text(SymbolicPolicy::sos_plus(cfg)) != text(SymbolicPolicy::apr(cfg))
        })
        .count();
    r.check("degeneracy equivalence", differing == 0, format!("{differing}/{} traces differ", tasks.len()));
}

fn directional_report(tasks: &[Task]) -> (EvalReport, Vec<EvalConfig>) {
    let cfg = ExpansionConfig::default();
    let mut configs = vec![EvalConfig {
        label: "sos+".into(),
        policy: SymbolicPolicy::sos_plus(cfg),
        budget: BudgetConfig::default(),
    }];
    for n in [3, 6, 10] {
        configs.push(EvalConfig {
            label: format!("apr({n})"),
            policy: SymbolicPolicy::apr(cfg),
            budget: BudgetConfig::default().with_enforced_children(Some(n)),
        });
    }
    let report = EvalReport::evaluate(tasks, &configs, &Runtime::default(), SEED).unwrap();
    (report, configs)
}

fn directional(r: &mut Report, tasks: &[Task]) {
    let (report, _) = directional_report(tasks);
    let acc: Vec<(String, f64)> = report
        .groups()
        .into_iter()
        .map(|((_, label), rows)| (label, cumulative_accuracy(&rows, &[4096])[0].1))
        .collect();
    let get = |name: &str| acc.iter().find(|(l, _)| l == name).unwrap().1;
    let (sos, a3, a6, a10) = (get("sos+"), get("apr(3)"), get("apr(6)"), get("apr(10)"));
    r.check(
        "directional reproduction",
        a10 - sos >= 0.05 && a10 >= a6 && a6 >= a3,
        format!("cap 4096: SoS+ {sos:.3}, APR(3) {a3:.3}, APR(6) {a6:.3}, APR(10) {a10:.3}"),
    );
}

fn critical_path(r: &mut Report) {
    let tasks = sample_tasks(1000, 4, 100, SEED + 3).unwrap();
    let pool = WorkerPool::default();
    let runtime = Runtime::new(pool);
    let per_token = pool.per_token_time;
    let violations = tasks
        .par_iter()
        .enumerate()
        .filter(|(i, task)| {
            let policy = SymbolicPolicy::apr(ExpansionConfig::default().with_promising(0.3).with_seed(*i as u64));
            let trace = policy.solve(task, &BudgetConfig::default(), &runtime).trace;
            let spawns = trace.spawn_count() as u32;
            let overheads = pool.spawn_overhead * spawns;
            let wide = WorkerPool { workers: trace.max_spawn_width().max(1), ..pool };
            let serial = WorkerPool { workers: 1, ..pool };
            let strict = spawns == 0 || trace.sequential_tokens() < trace.total_tokens();
            !strict
                || simulate_latency(&trace, &wide) != per_token * trace.sequential_tokens() as u32 + overheads
                || simulate_latency(&trace, &serial) != per_token * trace.total_tokens() as u32 + overheads
        })
        .count();
    r.check("critical-path accounting", violations == 0, format!("{violations}/{} traces violate", tasks.len()));
}

fn metric_inequalities(r: &mut Report) {
    let tasks = sample_tasks(500, 4, 100, SEED + 4).unwrap();
    let policy = SymbolicPolicy::apr(ExpansionConfig::default());
    let m = OutcomeMatrix::sample(&tasks, &policy, &BudgetConfig::default(), &Runtime::default(), 8, SEED).unwrap();
    let pass: Vec<f64> = (1..=8).map(|n| m.pass_at_n(n)).collect();
    let cons: Vec<f64> = (1..=8).map(|n| m.cons_at_n(n)).collect();
    let ok = pass.iter().zip(&cons).all(|(p, c)| c <= p)
        && pass.windows(2).all(|w| w[0] <= w[1])
        && cons.windows(2).all(|w| w[0] <= w[1]);
    r.check("metric inequalities", ok, format!("pass@1..8 {:.3?}, cons@1..8 {:.3?}", pass, cons));
}

fn binning(r: &mut Report) {
    let policy = SymbolicPolicy::sos_plus(ExpansionConfig::default());
    let records = generate_corpus(1000, 4, &policy, &BudgetConfig::default(), SEED + 5).unwrap();
    let bad = records
        .iter()
        .filter(|rec| {
            let total = rec.total_tokens().unwrap();
            let bin = rec.condition.value;
            !(bin == length_bin(total) && bin - BIN_WIDTH < total && total <= bin)
        })
        .count();
    r.check("binning", bad == 0, format!("{bad}/{} SoS+ records outside their bin", records.len()));
}

/// Tasks that serialized SoS+ fails at 4096 tokens per thread but solves
/// with unbounded context: the search succeeds, one window is too small.
fn width_sensitive(n: usize, seed: u64) -> Vec<Task> {
    let runtime = Runtime::sequential(WorkerPool::default());
    sample_tasks(n, 4, 100, seed)
        .unwrap()
        .into_par_iter()
        .enumerate()
        .filter(|(i, t)| {
            let sos = SymbolicPolicy::sos_plus(ExpansionConfig::default().with_seed(derive_seed(seed, *i as u64)));
            !sos.solve(t, &BudgetConfig::default(), &runtime).solved()
                && sos.solve(t, &BudgetConfig::unbounded(), &runtime).solved()
        })
        .map(|(_, t)| t)
        .collect()
}

fn grpo(r: &mut Report) {
    let adv = group_advantages(&[1.0, 0.0, 0.0, 1.0, 1.0]);
    let hi = 0.4 / 0.24f64.sqrt();
    let lo = -0.6 / 0.24f64.sqrt();
    let expected = [hi, lo, lo, hi, hi];
    let err = adv.iter().zip(expected).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
    r.check("GRPO advantages", err < 1e-6, format!("{adv:.6?}, max error {err:.1e}"));

    let train = width_sensitive(2000, SEED + 6);
    let validation = width_sensitive(1000, SEED + 7);
    let start = PolicyParams { promising_p: 0.01, ..PolicyParams::default() };
    let cfg = TunerConfig::default();
    let result = tune(start, &train, &validation, &cfg, SEED).unwrap();
    let gain = result.final_accuracy() - result.initial_validation.accuracy;
    r.check(
        "GRPO improvement",
        gain >= 0.03,
        format!(
            "{} train / {} held-out width-sensitive tasks: {:.3} -> {:.3} (p {:.3} -> {:.3}, children {}, bias {:.2})",
            train.len(),
            validation.len(),
            result.initial_validation.accuracy,
            result.final_accuracy(),
            start.promising_p,
            result.params.promising_p,
            result.params.max_child_threads,
            result.params.spawn_width_bias,
        ),
    );

    let enforced = TunerConfig { budget: BudgetConfig::default().with_enforced_children(Some(10)), ..cfg };
    let result = tune(start, &train, &validation, &enforced, SEED).unwrap();
    let delta = result.final_accuracy() - result.initial_validation.accuracy;
    r.check(
        "GRPO with enforced width",
        delta.abs() < 0.01,
        format!("{:.3} -> {:.3}", result.initial_validation.accuracy, result.final_accuracy()),
    );
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism(r: &mut Report, tasks: &[Task]) {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let (report, _) = directional_report(tasks);
        compute_curves(&report, &CurveGrid::default(), dir.path()).unwrap();
        let train = sample_tasks(100, 4, 100, SEED + 8).unwrap();
        let cfg = TunerConfig { steps: 20, eval_every: 5, batch_tasks: 16, ..TunerConfig::default() };
        let result =
            tune(PolicyParams { promising_p: 0.01, ..PolicyParams::default() }, &train, &train, &cfg, SEED).unwrap();
        result.write_curve_csv(&dir.path().join("learning_curve.csv")).unwrap();
        csv_bytes(dir.path())
    };
    let (a, b) = (run(), run());
    let files = a.len();
    r.check("determinism", a == b && files == 5, format!("{files} CSVs compared byte for byte"));
}

fn main() -> ExitCode {
    let mut r = Report { failed: 0 };
    soundness(&mut r);
    completeness(&mut r);
    degeneracy(&mut r);
    let tasks = sample_tasks(1000, 4, 100, SEED).unwrap();
    directional(&mut r, &tasks);
    critical_path(&mut r);
    metric_inequalities(&mut r);
    binning(&mut r);
    grpo(&mut r);
    determinism(&mut r, &tasks);
    if r.failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", r.failed);
        ExitCode::FAILURE
    }
}
