//! Rollout storage and generalized advantage estimation.

use crate::graph::ExplorationGraph;

#[derive(Debug, Clone)]
pub struct Transition {
    pub graph: ExplorationGraph,
    /// Index into [`crate::env::Action::ALL`] of the policy's proposal.
    pub action: u8,
    pub log_prob: f32,
    pub value: f32,
    pub reward: f32,
    /// Exploration threshold reached; bootstraps with 0.
    pub terminated: bool,
    /// Step limit reached; bootstraps with `truncation_value`.
    pub truncated: bool,
    /// Critic value of the final observation of a truncated episode.
    pub truncation_value: f32,
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub steps: Vec<Transition>,
    /// Critic value of the observation following the last step.
    pub bootstrap_value: f32,
}

impl RolloutBuffer {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            steps: Vec::with_capacity(capacity),
            bootstrap_value: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn mean_reward(&self) -> f32 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|t| t.reward).sum::<f32>() / self.steps.len() as f32
    }
}

/// Advantages and value targets for one contiguous rollout.
///
/// `delta_t = r_t + gamma * V_next * (1 - terminated_t) - V_t`, where
/// `V_next` is the truncation value on truncated steps, the bootstrap value
/// after the final step, and `V_{t+1}` otherwise. The recursion
/// `A_t = delta_t + gamma * lambda * A_{t+1}` is cut at every episode end.
pub fn compute_gae(buffer: &RolloutBuffer, gamma: f32, lambda: f32) -> (Vec<f32>, Vec<f32>) {
    // Accumulated in f64 so long episodes round once, not per step.
    let n = buffer.steps.len();
    let (gamma, lambda) = (gamma as f64, lambda as f64);
    let mut advantages = vec![0.0f32; n];
    let mut next_adv = 0.0f64;
    for t in (0..n).rev() {
        let step = &buffer.steps[t];
        let next_value = if step.truncated && !step.terminated {
            step.truncation_value
        } else if t + 1 < n {
            buffer.steps[t + 1].value
        } else {
            buffer.bootstrap_value
        } as f64;
        let not_terminal = if step.terminated { 0.0 } else { 1.0 };
        let delta = step.reward as f64 + gamma * next_value * not_terminal - step.value as f64;
        let episode_end = step.terminated || step.truncated;
        let carry = if episode_end { 0.0 } else { next_adv };
        next_adv = delta + gamma * lambda * carry;
        advantages[t] = next_adv as f32;
    }
    let returns = advantages
        .iter()
        .zip(&buffer.steps)
        .map(|(a, s)| a + s.value)
        .collect();
    (advantages, returns)
}

/// Shifts and scales to zero mean and unit variance. Leaves constant input
/// centred but unscaled.
pub fn normalize(values: &mut [f32]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f32;
    let mean = values.iter().sum::<f32>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f32>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v -= mean;
        if std > 1e-8 {
            *v /= std + 1e-8;
        }
    }
}
