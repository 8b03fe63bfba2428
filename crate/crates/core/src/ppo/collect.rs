use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PpoError, RolloutBuffer, Transition};
use crate::autodiff::Tape;
use crate::env::{Action, EnvConfig, EpisodeState};
use crate::gnn::{bind_params, CriticNet, GraphBatch, PolicyNet};
use crate::graph::{build_graph_with, ExplorationGraph, MapStats};
use crate::reward::{compute_reward, potential_field, RewardParams, RewardVariant, StepContext};
use crate::safety::shielded_move;

/// Log-probabilities of the nine actions and the critic's value for one
/// observation.
pub fn evaluate_graph(
    policy: &PolicyNet,
    critic: &CriticNet,
    graph: &ExplorationGraph,
) -> Result<([f32; Action::COUNT], f32), PpoError> {
    let batch = GraphBatch::single(graph);
    let mut tape = Tape::new();
    let pb = bind_params(&mut tape, &policy.params, false);
    let logits = policy.logits(&mut tape, &pb, &batch)?;
    let ls = tape.log_softmax_rows(logits);
    let cb = bind_params(&mut tape, &critic.params, false);
    let v = critic.values(&mut tape, &cb, &batch)?;
    let mut log_probs = [0.0; Action::COUNT];
    log_probs.copy_from_slice(tape.value(ls).data());
    Ok((log_probs, tape.value(v).item()))
}

/// Inverse-CDF draw from a categorical given by log-probabilities.
pub fn sample_action(log_probs: &[f32; Action::COUNT], rng: &mut impl Rng) -> usize {
    let u: f32 = rng.gen();
    let mut acc = 0.0f32;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver above the cumulative sum; take the last action
    // with non-zero mass.
    log_probs
        .iter()
        .rposition(|lp| lp.exp() > 0.0)
        .unwrap_or(Action::NULL_INDEX)
}

/// Drives one environment with the current policy, resetting to a fresh
/// random arena whenever an episode ends. Episodes carry over between
/// rollouts.
#[derive(Debug, Clone)]
pub struct RolloutCollector {
    env_config: EnvConfig,
    variant: RewardVariant,
    reward_params: RewardParams,
    episode: EpisodeState,
    episode_seeds: ChaCha8Rng,
    action_rng: ChaCha8Rng,
    stats: MapStats,
    graph: ExplorationGraph,
    phi: Option<f64>,
    episode_return: f64,
    finished_returns: Vec<f64>,
}

impl RolloutCollector {
    pub fn new(
        env_config: &EnvConfig,
        variant: RewardVariant,
        reward_params: RewardParams,
        seed: u64,
    ) -> Result<Self, PpoError> {
        let mut episode_seeds = ChaCha8Rng::seed_from_u64(seed);
        episode_seeds.set_stream(1);
        let mut action_rng = ChaCha8Rng::seed_from_u64(seed);
        action_rng.set_stream(2);
        let episode = EpisodeState::new(env_config, episode_seeds.next_u64())?;
        let stats = MapStats::new(episode.agent_map());
        let graph = build_graph_with(episode.agent_map(), &stats, episode.pos(), env_config.k);
        let mut collector = Self {
            env_config: env_config.clone(),
            variant,
            reward_params,
            episode,
            episode_seeds,
            action_rng,
            stats,
            graph,
            phi: None,
            episode_return: 0.0,
            finished_returns: Vec::new(),
        };
        collector.refresh_observation();
        if collector.episode.done() {
            collector.start_episode()?;
        }
        Ok(collector)
    }

    pub fn episode(&self) -> &EpisodeState {
        &self.episode
    }

    pub fn observation(&self) -> &ExplorationGraph {
        &self.graph
    }

    /// Returns of episodes that ended since the last call.
    pub fn drain_finished_returns(&mut self) -> Vec<f64> {
        std::mem::take(&mut self.finished_returns)
    }

    fn refresh_observation(&mut self) {
        self.stats = MapStats::new(self.episode.agent_map());
        self.graph = build_graph_with(
            self.episode.agent_map(),
            &self.stats,
            self.episode.pos(),
            self.env_config.k,
        );
        self.phi = if self.variant.uses_potential() {
            potential_field(&self.stats, self.episode.pos(), self.env_config.k)
        } else {
            None
        };
    }

    fn start_episode(&mut self) -> Result<(), PpoError> {
        // An arena explored by the very first scan has no decisions in it.
        for _ in 0..64 {
            self.episode.reset(self.episode_seeds.next_u64())?;
            if !self.episode.done() {
                break;
            }
        }
        self.episode_return = 0.0;
        self.refresh_observation();
        Ok(())
    }

    pub fn collect(
        &mut self,
        policy: &PolicyNet,
        critic: &CriticNet,
        length: usize,
    ) -> Result<RolloutBuffer, PpoError> {
        let mut buffer = RolloutBuffer::with_capacity(length);
        for _ in 0..length {
            let (log_probs, value) = evaluate_graph(policy, critic, &self.graph)?;
            let action_idx = sample_action(&log_probs, &mut self.action_rng);
            let frontiers_prev = self.stats.frontiers().len();
            let phi_prev = self.phi;
            let step = shielded_move(&mut self.episode, Action::ALL[action_idx])?;
            let obs = std::mem::replace(
                &mut self.graph,
                ExplorationGraph {
                    nodes: Vec::new(),
                    edges: Vec::new(),
                },
            );
            self.refresh_observation();
            let ctx = StepContext {
                discovered: step.outcome.discovered,
                rho: step.outcome.rho,
                rho_star: self.env_config.rho_star,
                intervened: step.intervened,
                frontiers_prev,
                frontiers_curr: self.stats.frontiers().len(),
                phi_prev,
                phi_curr: self.phi,
            };
            let reward = compute_reward(self.variant, &self.reward_params, &ctx) as f32;
            self.episode_return += reward as f64;
            let terminated = step.outcome.done;
            let truncated = step.outcome.truncated && !terminated;
            let truncation_value = if truncated {
                evaluate_graph(policy, critic, &self.graph)?.1
            } else {
                0.0
            };
            buffer.steps.push(Transition {
                graph: obs,
                action: action_idx as u8,
                log_prob: log_probs[action_idx],
                value,
                reward,
                terminated,
                truncated,
                truncation_value,
            });
            if terminated || truncated {
                self.finished_returns.push(self.episode_return);
                self.start_episode()?;
            }
        }
        buffer.bootstrap_value = evaluate_graph(policy, critic, &self.graph)?.1;
        Ok(buffer)
    }
}
