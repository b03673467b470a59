//! The multiply heuristic, beam expansion and the promising gate.

use apr_lab::search::UNBOUNDED_BEAM;
use apr_lab::{expand, h_multiply, is_promising, ExpansionConfig, SearchState, Task};

fn main() {
    let start = SearchState::start(&Task::new(vec![22, 26, 31, 53], 27).expect("valid task"));
    let cfg = ExpansionConfig::default();
    let all = expand(&start, &cfg.with_beam(UNBOUNDED_BEAM));
    println!("{} legal successors, beam {} keeps:", all.len(), cfg.beam_k);
    for s in expand(&start, &cfg) {
        println!("  {:<10} h={:<3} -> {:?}", s.path[0].to_string(), h_multiply(&s).0, s.remaining);
    }

    let states: Vec<SearchState> = all.iter().flat_map(|s| expand(s, &cfg.with_beam(UNBOUNDED_BEAM))).collect();
    for seed in 0..3 {
        let hits = states.iter().filter(|s| is_promising(s, &cfg.with_seed(seed))).count();
        println!("seed {seed}: {hits}/{} depth-2 states promising", states.len());
    }
}
