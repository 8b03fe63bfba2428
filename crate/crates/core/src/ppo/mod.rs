//! Proximal policy optimisation over graph observations, with the action
//! filter between the policy and the environment.
//!
//! The policy and critic keep separate parameters, optimisers and gradient
//! clipping, so a critic step never moves the policy and vice versa.

mod buffer;
mod collect;
mod train;
mod update;

pub use buffer::{compute_gae, normalize, RolloutBuffer, Transition};
pub use collect::{evaluate_graph, sample_action, RolloutCollector};
pub use train::{moving_average, Trainer, TrainerState, UpdateRecord};
pub use update::{minibatch_loss, ppo_update, LossTerms, UpdateStats};

use crate::autodiff::AutodiffError;
use crate::env::EnvError;

#[derive(Debug, thiserror::Error)]
pub enum PpoError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("non-finite {what} in update {update}")]
    NonFinite { what: &'static str, update: usize },
    #[error("invalid PPO configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub rollout_length: usize,
    pub minibatches: usize,
    pub learning_rate: f32,
    pub epochs: usize,
    pub gamma: f32,
    pub clip_epsilon: f32,
    pub gae_lambda: f32,
    pub total_timesteps: usize,
    pub value_coef: f32,
    pub entropy_coef: f32,
    pub max_grad_norm: f32,
    pub normalize_advantages: bool,
    /// Environments stepped in parallel; each contributes an equal share of
    /// the rollout.
    pub num_envs: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            rollout_length: 1024,
            minibatches: 64,
            learning_rate: 3e-4,
            epochs: 8,
            gamma: 0.99,
            clip_epsilon: 0.2,
            gae_lambda: 0.95,
            total_timesteps: 400_000,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            num_envs: 1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: String| Err(PpoError::InvalidConfig(m));
        if self.rollout_length == 0 || self.minibatches == 0 || self.epochs == 0 || self.num_envs == 0 {
            return bad("rollout_length, minibatches, epochs and num_envs must be positive".into());
        }
        if self.rollout_length % self.minibatches != 0 {
            return bad(format!(
                "rollout_length {} is not divisible by minibatches {}",
                self.rollout_length, self.minibatches
            ));
        }
        if self.rollout_length % self.num_envs != 0 {
            return bad(format!(
                "rollout_length {} is not divisible by num_envs {}",
                self.rollout_length, self.num_envs
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]".into());
        }
        if !(self.clip_epsilon > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("clip_epsilon and max_grad_norm must be positive".into());
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return bad("loss coefficients must be non-negative".into());
        }
        Ok(())
    }

    pub fn minibatch_size(&self) -> usize {
        self.rollout_length / self.minibatches
    }

    /// Number of rollout-then-update cycles covering `total_timesteps`.
    pub fn update_count(&self) -> usize {
        self.total_timesteps.div_ceil(self.rollout_length)
    }
}
