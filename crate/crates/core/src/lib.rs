//! Countdown search with spawn/join parallel reasoning.
//!
//! The crate is organised bottom-up:
//!
//! * [`countdown`]: tasks, arithmetic legality, solution checking, a brute-force
//!   solvability oracle and a seeded task sampler.
//! * [`search`]: search states, the multiply heuristic, beam expansion and the
//!   stochastic `is_promising` gate.
//! * [`runtime`]: a generic spawn/join thread runtime with token accounting and a
//!   list-scheduling latency model. [`external`] adapts a completion endpoint
//!   into the same policy contract.
//! * [`solvers`]: the serialized hybrid solver (SoS+) and the parallel solver
//!   (APR), both expressed as runtime policies.
//! * [`codec`] and [`corpus`]: the canonical trace grammar, the lexical token
//!   counter and demonstration-corpus generation.
//! * [`metrics`]: accuracy, pass@n, cons@n, cumulative accuracy and CSV curves.
//! * [`tune`]: group-relative tuning of the symbolic policy parameters.
//! * [`cli`]: the `apr-lab` command line.

pub mod cli;
pub mod codec;
pub mod corpus;
pub mod countdown;
pub mod external;
pub mod metrics;
pub mod runtime;
pub mod search;
pub mod solvers;
pub mod tune;

pub use codec::{count_tokens, decode, encode, TokenCount, TraceText};
pub use countdown::{oracle_solvable, sample_tasks, validate_solution, ArithOp, Operator, Solution, Task};
pub use runtime::{Runtime, Trace, WorkerPool};
pub use search::{expand, h_multiply, is_promising, ExpansionConfig, SearchState};
pub use solvers::{solve_apr, solve_sos_plus, BudgetConfig, SolveOutcome, SolveStatus};
