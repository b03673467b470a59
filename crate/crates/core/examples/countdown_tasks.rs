//! Tasks, legality, the brute-force oracle and the seeded sampler.

use apr_lab::countdown::{read_tasks, write_tasks};
use apr_lab::{oracle_solvable, sample_tasks, validate_solution, ArithOp, Operator, Solution, Task};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = Task::new(vec![1, 4, 6, 8], 10)?;
    let op = |o, l, r| ArithOp::new(o, l, r).expect("legal op");
    let good = Solution::new(vec![op(Operator::Sub, 8, 6), op(Operator::Add, 4, 1), op(Operator::Mul, 2, 5)]);
    let unused = Solution::new(vec![op(Operator::Add, 8, 6), op(Operator::Sub, 14, 4)]);
    println!("{} -> {}", good.canonical(), validate_solution(&task, &good));
    println!("{} -> {} (1 unused)", unused.canonical(), validate_solution(&task, &unused));

    // subtraction must stay >= 1 and division must be exact
    println!("3-5 legal: {}, 7÷2 legal: {}", Operator::Sub.apply(3, 5).is_some(), Operator::Div.apply(7, 2).is_some());

    for (inputs, target) in [(vec![1, 4, 6, 8], 10), (vec![7], 7), (vec![1, 1, 1, 1], 9)] {
        let t = Task::new(inputs, target)?;
        match oracle_solvable(&t)? {
            Some(w) => println!("{:?} -> {target}: solvable, witness [{}]", t.inputs, w.canonical()),
            None => println!("{:?} -> {target}: unsolvable", t.inputs),
        }
    }

    let tasks = sample_tasks(5, 4, 100, 7)?;
    let dir = std::env::temp_dir().join("apr-lab-countdown-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("tasks.jsonl");
    write_tasks(&path, &tasks)?;
    assert_eq!(read_tasks(&path)?, tasks);
    for t in &tasks {
        println!("sampled {:?} -> {}", t.inputs, t.target);
    }
    println!("five-number task: {:?}", sample_tasks(1, 5, 100, 1)?[0].inputs);
    Ok(())
}
