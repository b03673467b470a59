//! Group-relative tuning of the symbolic APR policy.
//!
//! Each step draws a batch of tasks. Every task gets a group of perturbed
//! parameter vectors; each perturbation is rolled out once and rewarded 1 if
//! it returns a validating solution within budget. Rewards are normalized
//! within the group, the advantage-weighted perturbations are averaged into a
//! search direction, and the step is clipped per coordinate to
//! `clip_ratio` times the parameter's range.
//!
//! Parameters live in a latent box `[0, 1]^4` (one unit per full range);
//! integer parameters are rounded when a policy is built.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::countdown::Task;
use crate::runtime::Runtime;
use crate::search::{derive_seed, ExpansionConfig};
use crate::solvers::{BudgetConfig, SymbolicPolicy, MAX_CHILD_THREADS};

pub const ADVANTAGE_EPS: f64 = 1e-8;
pub const DIMS: usize = 4;
/// Ranges of promising_p, beam_k, max_child_threads, spawn_width_bias.
pub const RANGES: [(f64, f64); DIMS] = [(0.0, 1.0), (1.0, 15.0), (0.0, MAX_CHILD_THREADS as f64), (-5.0, 5.0)];
pub const PARAM_NAMES: [&str; DIMS] = ["promising_p", "beam_k", "max_child_threads", "spawn_width_bias"];

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("no training tasks")]
    NoTrainingTasks,
    #[error("no validation tasks")]
    NoValidationTasks,
    #[error("group size must be at least 2, got {0}")]
    GroupSize(usize),
    #[error("clip ratio must be nonnegative and finite, got {0}")]
    ClipRatio(f64),
    #[error("noise std must be positive, got {0}")]
    Noise(f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub promising_p: f64,
    pub beam_k: usize,
    pub max_child_threads: usize,
    pub spawn_width_bias: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams { promising_p: 0.1, beam_k: 5, max_child_threads: MAX_CHILD_THREADS, spawn_width_bias: 0.0 }
    }
}

impl PolicyParams {
    /// Clamps every field into its range.
    pub fn projected(self) -> Self {
        PolicyParams::from_latent(self.to_latent())
    }

    pub fn to_latent(&self) -> [f64; DIMS] {
        let raw = [self.promising_p, self.beam_k as f64, self.max_child_threads as f64, self.spawn_width_bias];
        let mut out = [0.0; DIMS];
        for k in 0..DIMS {
            let (lo, hi) = RANGES[k];
            out[k] = ((raw[k] - lo) / (hi - lo)).clamp(0.0, 1.0);
        }
        out
    }

    pub fn from_latent(latent: [f64; DIMS]) -> Self {
        let value = |k: usize| {
            let (lo, hi) = RANGES[k];
            lo + latent[k].clamp(0.0, 1.0) * (hi - lo)
        };
        PolicyParams {
            promising_p: value(0),
            beam_k: value(1).round() as usize,
            max_child_threads: value(2).round() as usize,
            spawn_width_bias: value(3),
        }
    }

    pub fn policy(&self, rng_seed: u64) -> SymbolicPolicy {
        let cfg =
            ExpansionConfig::default().with_beam(self.beam_k).with_promising(self.promising_p).with_seed(rng_seed);
        SymbolicPolicy::apr(cfg).with_spawn_width_bias(self.spawn_width_bias)
    }

    /// `base` with this child limit; cap and enforced count are kept.
    pub fn budget(&self, base: &BudgetConfig) -> BudgetConfig {
        base.with_children(self.max_child_threads)
    }
}

/// Which parameters the tuner may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamMask {
    pub promising_p: bool,
    pub beam_k: bool,
    pub max_child_threads: bool,
    pub spawn_width_bias: bool,
}

impl Default for ParamMask {
    fn default() -> Self {
        ParamMask { promising_p: true, beam_k: false, max_child_threads: true, spawn_width_bias: true }
    }
}

impl ParamMask {
    pub fn all() -> Self {
        ParamMask { promising_p: true, beam_k: true, max_child_threads: true, spawn_width_bias: true }
    }

    fn as_array(&self) -> [bool; DIMS] {
        [self.promising_p, self.beam_k, self.max_child_threads, self.spawn_width_bias]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunerConfig {
    pub clip_ratio: f64,
    pub steps: usize,
    pub eval_every: usize,
    pub batch_tasks: usize,
    pub group_size: usize,
    /// Perturbation std in latent units.
    pub noise_std: f64,
    /// Step size in latent units per unit of estimated gradient.
    pub learning_rate: f64,
    /// Consecutive all-tied steps before stopping.
    pub patience: usize,
    pub mask: ParamMask,
    pub budget: BudgetConfig,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            clip_ratio: 0.2,
            steps: 150,
            eval_every: 25,
            batch_tasks: 64,
            group_size: 5,
            noise_std: 0.1,
            learning_rate: 0.1,
            patience: 10,
            mask: ParamMask::default(),
            budget: BudgetConfig::default(),
        }
    }
}

/// One task's group of rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub task: Task,
    pub rewards: Vec<f64>,
}

impl RolloutGroup {
    pub fn advantages(&self) -> Vec<f64> {
        group_advantages(&self.rewards)
    }
}

/// `(r_i - mean) / (std + 1e-8)` with the population std.
pub fn group_advantages(rewards: &[f64]) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    rewards.iter().map(|r| (r - mean) / (std + ADVANTAGE_EPS)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub accuracy: f64,
    pub mean_child_count: f64,
    pub mean_total_tokens: f64,
}

/// Runs `params` once per task with per-task gate seeds derived from `seed`.
pub fn validate(params: &PolicyParams, tasks: &[Task], base: &BudgetConfig, seed: u64) -> Validation {
    let runtime = Runtime::sequential(Default::default());
    let budget = params.budget(base);
    let stats: Vec<(bool, usize, usize)> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| {
            let outcome = params.policy(derive_seed(seed, i as u64)).solve(task, &budget, &runtime);
            (outcome.solved(), outcome.trace.child_count(), outcome.trace.total_tokens())
        })
        .collect();
    let n = tasks.len().max(1) as f64;
    Validation {
        accuracy: stats.iter().filter(|s| s.0).count() as f64 / n,
        mean_child_count: stats.iter().map(|s| s.1 as f64).sum::<f64>() / n,
        mean_total_tokens: stats.iter().map(|s| s.2 as f64).sum::<f64>() / n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub validation_accuracy: f64,
    pub promising_p: f64,
    pub beam_k: usize,
    pub mean_child_count: f64,
    pub mean_total_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub initial: PolicyParams,
    pub params: PolicyParams,
    pub initial_validation: Validation,
    pub curve: Vec<CurvePoint>,
    /// Latent vector after every completed step, starting with the initial one.
    pub latent: Vec<[f64; DIMS]>,
    pub early_stop: Option<EarlyStop>,
}

impl TuneResult {
    pub fn final_accuracy(&self) -> f64 {
        self.curve.last().map_or(self.initial_validation.accuracy, |p| p.validation_accuracy)
    }

    pub fn write_curve_csv(&self, path: &Path) -> Result<(), TuneError> {
        let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        for point in &self.curve {
            writer.serialize(point)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn check(cfg: &TunerConfig, train: &[Task], validation: &[Task]) -> Result<(), TuneError> {
    if train.is_empty() {
        return Err(TuneError::NoTrainingTasks);
    }
    if validation.is_empty() {
        return Err(TuneError::NoValidationTasks);
    }
    if cfg.group_size < 2 {
        return Err(TuneError::GroupSize(cfg.group_size));
    }
    if !(cfg.clip_ratio >= 0.0 && cfg.clip_ratio.is_finite()) {
        return Err(TuneError::ClipRatio(cfg.clip_ratio));
    }
    if !(cfg.noise_std > 0.0 && cfg.noise_std.is_finite()) {
        return Err(TuneError::Noise(cfg.noise_std));
    }
    Ok(())
}

fn perturbed(latent: &[f64; DIMS], delta: &[f64; DIMS]) -> PolicyParams {
    let mut out = *latent;
    for k in 0..DIMS {
        out[k] += delta[k];
    }
    PolicyParams::from_latent(out)
}

/// Tunes `initial` on `train` and validates every `eval_every` steps.
pub fn tune(
    initial: PolicyParams,
    train: &[Task],
    validation: &[Task],
    cfg: &TunerConfig,
    seed: u64,
) -> Result<TuneResult, TuneError> {
    check(cfg, train, validation)?;
    let initial = initial.projected();
    let validation_seed = derive_seed(seed, u64::MAX);
    let validate_at = |params: &PolicyParams| validate(params, validation, &cfg.budget, validation_seed);
    let initial_validation = validate_at(&initial);
    let mask = cfg.mask.as_array();
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|_| TuneError::Noise(cfg.noise_std))?;
    let runtime = Runtime::sequential(Default::default());

    let mut latent = initial.to_latent();
    let mut trajectory = vec![latent];
    let mut curve = Vec::new();
    let mut tied_steps = 0;
    let mut early_stop = None;
    let mut last_eval: Option<(PolicyParams, Validation)> = None;

    for step in 1..=cfg.steps {
        if early_stop.is_none() {
            let step_seed = derive_seed(seed, step as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(step_seed);
            let batch: Vec<(usize, Vec<[f64; DIMS]>)> = (0..cfg.batch_tasks)
                .map(|j| {
                    let task_idx = ((step - 1) * cfg.batch_tasks + j) % train.len();
                    let deltas = (0..cfg.group_size)
                        .map(|_| {
                            let mut d = [0.0; DIMS];
                            for k in 0..DIMS {
                                // draw for every coordinate so the stream does not depend on the mask
                                let x = noise.sample(&mut rng);
                                d[k] = if mask[k] { x } else { 0.0 };
                            }
                            d
                        })
                        .collect();
                    (task_idx, deltas)
                })
                .collect();

            let groups: Vec<RolloutGroup> = batch
                .par_iter()
                .enumerate()
                .map(|(j, (task_idx, deltas))| {
                    let task = &train[*task_idx];
                    let rewards = deltas
                        .iter()
                        .enumerate()
                        .map(|(i, delta)| {
                            let params = perturbed(&latent, delta);
                            let rollout_seed = derive_seed(derive_seed(step_seed, j as u64), i as u64);
                            let outcome =
                                params.policy(rollout_seed).solve(task, &params.budget(&cfg.budget), &runtime);
                            f64::from(u8::from(outcome.solved()))
                        })
                        .collect();
                    RolloutGroup { task: task.clone(), rewards }
                })
                .collect();

            let mut direction = [0.0; DIMS];
            let mut informative = false;
            for (group, (_, deltas)) in groups.iter().zip(&batch) {
                let adv = group.advantages();
                informative |= adv.iter().any(|a| *a != 0.0);
                for (a, delta) in adv.iter().zip(deltas) {
                    for k in 0..DIMS {
                        direction[k] += a * delta[k] / cfg.noise_std;
                    }
                }
            }
            let samples = (cfg.batch_tasks * cfg.group_size).max(1) as f64;
            for k in 0..DIMS {
                let change = (cfg.learning_rate * direction[k] / samples).clamp(-cfg.clip_ratio, cfg.clip_ratio);
                latent[k] = (latent[k] + change).clamp(0.0, 1.0);
            }
            trajectory.push(latent);

            tied_steps = if informative { 0 } else { tied_steps + 1 };
            if tied_steps >= cfg.patience.max(1) {
                early_stop = Some(EarlyStop {
                    step,
                    reason: format!("rewards tied within every group for {tied_steps} consecutive steps"),
                });
            }
        }

        if cfg.eval_every > 0 && step % cfg.eval_every == 0 {
            let params = PolicyParams::from_latent(latent);
            let result = match &last_eval {
                Some((p, v)) if *p == params => *v,
                _ => validate_at(&params),
            };
            last_eval = Some((params, result));
            curve.push(CurvePoint {
                step,
                validation_accuracy: result.accuracy,
                promising_p: params.promising_p,
                beam_k: params.beam_k,
                mean_child_count: result.mean_child_count,
                mean_total_tokens: result.mean_total_tokens,
            });
        }
    }

    Ok(TuneResult {
        initial,
        params: PolicyParams::from_latent(latent),
        initial_validation,
        curve,
        latent: trajectory,
        early_stop,
    })
}

/// Writes the parameters as pretty JSON.
pub fn write_params(path: &Path, params: &PolicyParams) -> Result<(), TuneError> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, params).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advantages_hand_values() {
        let adv = group_advantages(&[1.0, 0.0, 0.0, 1.0, 1.0]);
        let expected = [0.816_496_6, -1.224_744_9, -1.224_744_9, 0.816_496_6, 0.816_496_6];
        for (a, e) in adv.iter().zip(expected) {
            assert!((a - e).abs() < 1e-6, "{a} vs {e}");
        }
        assert!(adv.iter().sum::<f64>().abs() < 1e-6 * 5.0);
    }

    #[test]
    fn advantages_degenerate_and_symmetric() {
        assert_eq!(group_advantages(&[1.0; 5]), vec![0.0; 5]);
        let pair = group_advantages(&[1.0, 0.0]);
        assert!((pair[0] - 1.0).abs() < 1e-6 && (pair[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn latent_round_trip() {
        let p = PolicyParams { promising_p: 0.25, beam_k: 7, max_child_threads: 4, spawn_width_bias: -1.5 };
        assert_eq!(PolicyParams::from_latent(p.to_latent()), p);
        let wild = PolicyParams { promising_p: 3.0, beam_k: 99, max_child_threads: 50, spawn_width_bias: -40.0 };
        let fixed = wild.projected();
        assert_eq!(fixed, PolicyParams { promising_p: 1.0, beam_k: 15, max_child_threads: 10, spawn_width_bias: -5.0 });
    }

    #[test]
    fn bad_configs_are_rejected() {
        let tasks = vec![Task::new(vec![3, 4], 7).unwrap()];
        let cfg = TunerConfig { group_size: 1, ..Default::default() };
        assert!(matches!(tune(PolicyParams::default(), &tasks, &tasks, &cfg, 0), Err(TuneError::GroupSize(1))));
        assert!(matches!(
            tune(PolicyParams::default(), &[], &tasks, &TunerConfig::default(), 0),
            Err(TuneError::NoTrainingTasks)
        ));
    }

    #[test]
    fn zero_clip_freezes_parameters() {
        let tasks = crate::countdown::sample_tasks(8, 4, 100, 3).unwrap();
        let cfg = TunerConfig { clip_ratio: 0.0, steps: 4, eval_every: 2, batch_tasks: 4, ..Default::default() };
        let start = PolicyParams { promising_p: 0.01, ..Default::default() };
        let result = tune(start, &tasks, &tasks, &cfg, 9).unwrap();
        assert_eq!(result.params, start);
        assert_eq!(result.curve.len(), 2);
    }
}
