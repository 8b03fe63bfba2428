//! Fixed-budget evaluation of a policy on held-out environments.
//!
//! Episodes run for exactly the requested number of steps: reaching the
//! exploration threshold does not stop them, so every coverage series has
//! the same length.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use shieldnav::env::{Action, EnvConfig, EnvError, EpisodeState};
use shieldnav::gnn::PolicyNet;
use shieldnav::graph::build_graph;
use shieldnav::safety::shielded_move;

pub const COVERAGE_LEVELS: [f64; 4] = [0.80, 0.90, 0.95, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    /// Argmax of the policy distribution, lowest index on ties.
    Greedy,
    /// Sample from the policy; the stream is derived from the env seed.
    Sample,
    /// Uniform random proposals, ignoring any policy.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub env_seed: u64,
    /// Exploration ratio after steps 1..=n.
    pub coverage: Vec<f64>,
    pub intervened: Vec<bool>,
    /// First step reaching each of [`COVERAGE_LEVELS`].
    pub steps_to: [Option<usize>; 4],
}

impl EvalRecord {
    pub fn steps(&self) -> usize {
        self.coverage.len()
    }

    pub fn interventions(&self) -> usize {
        self.intervened.iter().filter(|b| **b).count()
    }

    pub fn intervention_proportion(&self) -> f64 {
        if self.intervened.is_empty() {
            0.0
        } else {
            self.interventions() as f64 / self.intervened.len() as f64
        }
    }

    /// Coverage after `step` steps, clamped to the recorded range.
    pub fn coverage_at(&self, step: usize) -> f64 {
        let i = step.clamp(1, self.coverage.len().max(1)) - 1;
        self.coverage.get(i).copied().unwrap_or(0.0)
    }
}

fn argmax(p: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

fn env_rng(env_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(env_seed);
    rng.set_stream(7);
    rng
}

/// Runs one environment for `n_steps` filtered steps.
pub fn evaluate_env(
    policy: Option<&PolicyNet>,
    env: &EnvConfig,
    env_seed: u64,
    n_steps: usize,
    mode: ActionMode,
) -> Result<EvalRecord, EnvError> {
    let cfg = EnvConfig {
        max_steps: n_steps,
        ..env.clone()
    };
    let mut episode = EpisodeState::new(&cfg, env_seed)?;
    let mut rng = env_rng(env_seed);
    let mut coverage = Vec::with_capacity(n_steps);
    let mut intervened = Vec::with_capacity(n_steps);
    let mut steps_to = [None; 4];
    for t in 1..=n_steps {
        let proposal = match (mode, policy) {
            (ActionMode::Random, _) | (_, None) => rng.gen_range(0..Action::COUNT),
            (m, Some(p)) => {
                let graph = build_graph(episode.agent_map(), episode.pos(), cfg.k);
                let dist = p.distribution(&graph);
                if m == ActionMode::Greedy {
                    argmax(&dist)
                } else {
                    let u: f32 = rng.gen();
                    let mut acc = 0.0;
                    dist.iter()
                        .position(|q| {
                            acc += q;
                            u < acc
                        })
                        .unwrap_or(argmax(&dist))
                }
            }
        };
        let step = shielded_move(&mut episode, Action::ALL[proposal])?;
        let rho = step.outcome.rho;
        for (slot, level) in steps_to.iter_mut().zip(COVERAGE_LEVELS) {
            if slot.is_none() && rho >= level {
                *slot = Some(t);
            }
        }
        coverage.push(rho);
        intervened.push(step.intervened);
    }
    Ok(EvalRecord {
        env_seed,
        coverage,
        intervened,
        steps_to,
    })
}

/// Evaluates every seed; results are in seed order regardless of how the
/// work is scheduled.
pub fn evaluate(
    policy: Option<&PolicyNet>,
    env: &EnvConfig,
    seeds: &[u64],
    n_steps: usize,
    mode: ActionMode,
) -> Result<Vec<EvalRecord>, EnvError> {
    seeds
        .par_iter()
        .map(|&s| evaluate_env(policy, env, s, n_steps, mode))
        .collect()
}

/// Median, averaging the two middle values of an even-length sample.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Per-step median and standard deviation of coverage across records.
pub fn coverage_profile(records: &[EvalRecord]) -> Vec<(f64, f64)> {
    let steps = records.iter().map(EvalRecord::steps).min().unwrap_or(0);
    (0..steps)
        .map(|t| {
            let col: Vec<f64> = records.iter().map(|r| r.coverage[t]).collect();
            (median(&col), std_dev(&col))
        })
        .collect()
}
