//! Search states, the multiply heuristic, beam expansion and the promising gate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::countdown::{legal_ops, take, ArithOp, Operator, Solution, Task};

/// Beam width meaning "keep every legal successor".
pub const UNBOUNDED_BEAM: usize = usize::MAX;

/// Remaining numbers, the target, and the ops applied so far.
///
/// `remaining` is kept sorted ascending so equal multisets compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchState {
    pub remaining: Vec<u64>,
    pub target: u64,
    pub path: Vec<ArithOp>,
}

impl SearchState {
    pub fn start(task: &Task) -> Self {
        let mut remaining = task.inputs.clone();
        remaining.sort_unstable();
        SearchState { remaining, target: task.target, path: Vec::new() }
    }

    pub fn is_goal(&self) -> bool {
        self.remaining.len() == 1 && self.remaining[0] == self.target
    }

    /// Successor after applying `op`; `None` if an operand is missing.
    pub fn apply(&self, op: ArithOp) -> Option<SearchState> {
        let mut remaining = self.remaining.clone();
        if !take(&mut remaining, op.left) || !take(&mut remaining, op.right) {
            return None;
        }
        remaining.push(op.result);
        remaining.sort_unstable();
        let mut path = self.path.clone();
        path.push(op);
        Some(SearchState { remaining, target: self.target, path })
    }

    pub fn solution(&self) -> Solution {
        Solution::new(self.path.clone())
    }

    /// Stable identity used to seed the promising gate.
    pub fn fingerprint(&self) -> String {
        let remaining: Vec<String> = self.remaining.iter().map(u64::to_string).collect();
        let path: Vec<String> = self.path.iter().map(ArithOp::to_string).collect();
        format!("{}|{}|{}", self.target, remaining.join(","), path.join(","))
    }
}

/// Value of the multiply heuristic; lower is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeuristicScore(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConfig {
    pub beam_k: usize,
    pub promising_p: f64,
    pub rng_seed: u64,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig { beam_k: 5, promising_p: 0.1, rng_seed: 0 }
    }
}

impl ExpansionConfig {
    pub fn with_beam(mut self, beam_k: usize) -> Self {
        self.beam_k = beam_k.max(1);
        self
    }

    pub fn with_promising(mut self, promising_p: f64) -> Self {
        self.promising_p = promising_p.clamp(0.0, 1.0);
        self
    }

    pub fn with_seed(mut self, rng_seed: u64) -> Self {
        self.rng_seed = rng_seed;
        self
    }
}

/// Divisors of `n` by trial division up to `sqrt(n)`, ascending.
pub fn factors(n: u64) -> Vec<u64> {
    let mut low = Vec::new();
    let mut high = Vec::new();
    let mut d = 1u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            low.push(d);
            if d != n / d {
                high.push(n / d);
            }
        }
        d += 1;
    }
    low.extend(high.into_iter().rev());
    low
}

/// `min_j |f_j - sum(remaining)|` over the factors `f_j` of the target.
pub fn h_multiply(state: &SearchState) -> HeuristicScore {
    let sum: u64 = state.remaining.iter().sum();
    let best = factors(state.target).into_iter().map(|f| f.abs_diff(sum)).min().unwrap_or(sum);
    HeuristicScore(best)
}

fn tie_key(op: &ArithOp) -> (u64, Operator, u64, u64) {
    (op.result, op.op, op.right, op.left)
}

/// Every legal successor ranked by heuristic, truncated to `beam_k`.
///
/// Ties are broken by result value, then operator order `+ − × ÷`, then the
/// smaller operand, so the output is a total order.
pub fn expand(state: &SearchState, cfg: &ExpansionConfig) -> Vec<SearchState> {
    expand_with_beam(state, cfg.beam_k)
}

pub(crate) fn expand_with_beam(state: &SearchState, beam_k: usize) -> Vec<SearchState> {
    if state.remaining.len() < 2 {
        return Vec::new();
    }
    let mut scored: Vec<(HeuristicScore, ArithOp, SearchState)> = legal_ops(&state.remaining)
        .into_iter()
        .filter_map(|op| state.apply(op).map(|next| (h_multiply(&next), op, next)))
        .collect();
    scored.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| tie_key(&a.1).cmp(&tie_key(&b.1))));
    scored.truncate(beam_k.max(1));
    scored.into_iter().map(|(_, _, next)| next).collect()
}

/// Independent seed for sub-stream `stream` of a run seeded with `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(stream.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Bernoulli(`promising_p`) verdict drawn from a stream keyed by the run seed
/// and the state's fingerprint. Leaves (fewer than two numbers) are never
/// promising.
pub fn is_promising(state: &SearchState, cfg: &ExpansionConfig) -> bool {
    if state.remaining.len() < 2 || cfg.promising_p <= 0.0 {
        return false;
    }
    if cfg.promising_p >= 1.0 {
        return true;
    }
    let mut hasher = Sha256::new();
    hasher.update(cfg.rng_seed.to_le_bytes());
    hasher.update(state.fingerprint().as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed).gen_bool(cfg.promising_p)
}
