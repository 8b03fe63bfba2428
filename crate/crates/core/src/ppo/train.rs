use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ppo_update, PpoConfig, PpoError, RolloutBuffer, RolloutCollector, UpdateStats};
use crate::autodiff::{Adam, NdArray};
use crate::env::EnvConfig;
use crate::gnn::{init_params, CriticNet, NetworkConfig, PolicyNet};
use crate::reward::{RewardParams, RewardVariant};

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRecord {
    /// 1-based update index.
    pub update: usize,
    /// Environment steps taken so far.
    pub steps: usize,
    /// Mean per-step reward of this update's rollout.
    pub mean_reward: f32,
    pub policy_loss: f32,
    pub value_loss: f32,
    pub episodes_finished: usize,
    pub stats: UpdateStats,
}

/// Everything needed to resume training at an update boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub update: usize,
    pub steps: usize,
    pub policy: Vec<NdArray>,
    pub critic: Vec<NdArray>,
    pub policy_adam: (u64, Vec<NdArray>, Vec<NdArray>),
    pub critic_adam: (u64, Vec<NdArray>, Vec<NdArray>),
}

#[derive(Debug)]
pub struct Trainer {
    ppo: PpoConfig,
    env: EnvConfig,
    variant: RewardVariant,
    reward: RewardParams,
    seed: u64,
    policy: PolicyNet,
    critic: CriticNet,
    policy_opt: Adam,
    critic_opt: Adam,
    collectors: Vec<RolloutCollector>,
    shuffle_rng: ChaCha8Rng,
    update: usize,
    steps: usize,
    step_rewards: Vec<f32>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Trainer {
    pub fn new(
        env: &EnvConfig,
        network: &NetworkConfig,
        variant: RewardVariant,
        reward: RewardParams,
        ppo: &PpoConfig,
        seed: u64,
    ) -> Result<Self, PpoError> {
        ppo.validate()?;
        env.validate()?;
        let (policy, critic) = init_params(seed, network);
        let policy_opt = Adam::new(&policy.params, ppo.learning_rate);
        let critic_opt = Adam::new(&critic.params, ppo.learning_rate);
        let mut trainer = Self {
            ppo: ppo.clone(),
            env: env.clone(),
            variant,
            reward,
            seed,
            policy,
            critic,
            policy_opt,
            critic_opt,
            collectors: Vec::new(),
            shuffle_rng: stream_rng(seed, 3),
            update: 0,
            steps: 0,
            step_rewards: Vec::new(),
        };
        trainer.spawn_collectors()?;
        Ok(trainer)
    }

    /// Collector seeds depend on the update counter so a resumed run draws
    /// fresh arenas rather than replaying the opening ones.
    fn spawn_collectors(&mut self) -> Result<(), PpoError> {
        let mut seeder = stream_rng(self.seed, 4 + self.update as u64);
        self.collectors = (0..self.ppo.num_envs)
            .map(|_| {
                let s = rand::RngCore::next_u64(&mut seeder);
                RolloutCollector::new(&self.env, self.variant, self.reward, s)
            })
            .collect::<Result<_, _>>()?;
        Ok(())
    }

    pub fn policy(&self) -> &PolicyNet {
        &self.policy
    }

    pub fn critic(&self) -> &CriticNet {
        &self.critic
    }

    pub fn config(&self) -> &PpoConfig {
        &self.ppo
    }

    pub fn updates_done(&self) -> usize {
        self.update
    }

    pub fn steps_done(&self) -> usize {
        self.steps
    }

    pub fn is_finished(&self) -> bool {
        self.update >= self.ppo.update_count()
    }

    /// Per-step rewards of every rollout so far, in collection order.
    pub fn step_rewards(&self) -> &[f32] {
        &self.step_rewards
    }

    pub fn state(&self) -> TrainerState {
        TrainerState {
            update: self.update,
            steps: self.steps,
            policy: self.policy.params.values().to_vec(),
            critic: self.critic.params.values().to_vec(),
            policy_adam: (
                self.policy_opt.step_count(),
                self.policy_opt.first_moments().to_vec(),
                self.policy_opt.second_moments().to_vec(),
            ),
            critic_adam: (
                self.critic_opt.step_count(),
                self.critic_opt.first_moments().to_vec(),
                self.critic_opt.second_moments().to_vec(),
            ),
        }
    }

    /// Restores parameters, optimiser moments and counters. Shapes must match
    /// the trainer's networks.
    pub fn restore(&mut self, state: TrainerState) -> Result<(), PpoError> {
        check_shapes("policy", self.policy.params.values(), &state.policy)?;
        check_shapes("critic", self.critic.params.values(), &state.critic)?;
        check_shapes("policy adam m", self.policy.params.values(), &state.policy_adam.1)?;
        check_shapes("policy adam v", self.policy.params.values(), &state.policy_adam.2)?;
        check_shapes("critic adam m", self.critic.params.values(), &state.critic_adam.1)?;
        check_shapes("critic adam v", self.critic.params.values(), &state.critic_adam.2)?;
        self.policy.params.values_mut().clone_from_slice(&state.policy);
        self.critic.params.values_mut().clone_from_slice(&state.critic);
        let (ps, pm, pv) = state.policy_adam;
        let (cs, cm, cv) = state.critic_adam;
        self.policy_opt = Adam::from_state(self.ppo.learning_rate, ps, pm, pv);
        self.critic_opt = Adam::from_state(self.ppo.learning_rate, cs, cm, cv);
        self.update = state.update;
        self.steps = state.steps;
        self.shuffle_rng = stream_rng(self.seed, 3);
        self.spawn_collectors()
    }

    fn collect(&mut self) -> Result<Vec<RolloutBuffer>, PpoError> {
        let share = self.ppo.rollout_length / self.ppo.num_envs;
        let policy = &self.policy;
        let critic = &self.critic;
        if self.collectors.len() == 1 {
            return Ok(vec![self.collectors[0].collect(policy, critic, share)?]);
        }
        std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .collectors
                .iter_mut()
                .map(|c| scope.spawn(move || c.collect(policy, critic, share)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("rollout worker panicked"))
                .collect()
        })
    }

    /// Collects one rollout and applies one PPO update.
    pub fn train_update(&mut self) -> Result<UpdateRecord, PpoError> {
        let rollouts = self.collect()?;
        let mut episodes_finished = 0;
        for c in &mut self.collectors {
            episodes_finished += c.drain_finished_returns().len();
        }
        let n: usize = rollouts.iter().map(RolloutBuffer::len).sum();
        let reward_sum: f32 = rollouts.iter().flat_map(|r| r.steps.iter().map(|t| t.reward)).sum();
        for r in &rollouts {
            self.step_rewards.extend(r.steps.iter().map(|t| t.reward));
        }
        self.update += 1;
        self.steps += n;
        let stats = ppo_update(
            &mut self.policy,
            &mut self.critic,
            &mut self.policy_opt,
            &mut self.critic_opt,
            &rollouts,
            &self.ppo,
            &mut self.shuffle_rng,
            self.update,
        )?;
        Ok(UpdateRecord {
            update: self.update,
            steps: self.steps,
            mean_reward: reward_sum / n.max(1) as f32,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            episodes_finished,
            stats,
        })
    }

    /// Trains until the configured timestep budget is spent, handing each
    /// record to `on_update`.
    pub fn run(
        &mut self,
        mut on_update: impl FnMut(&Self, &UpdateRecord) -> Result<(), PpoError>,
    ) -> Result<Vec<UpdateRecord>, PpoError> {
        let mut records = Vec::new();
        while !self.is_finished() {
            let rec = self.train_update()?;
            on_update(self, &rec)?;
            records.push(rec);
        }
        Ok(records)
    }
}

fn check_shapes(what: &str, expected: &[NdArray], got: &[NdArray]) -> Result<(), PpoError> {
    if expected.len() != got.len() {
        return Err(PpoError::InvalidConfig(format!(
            "{what}: expected {} arrays, got {}",
            expected.len(),
            got.len()
        )));
    }
    for (i, (e, g)) in expected.iter().zip(got).enumerate() {
        if e.shape() != g.shape() {
            return Err(PpoError::InvalidConfig(format!(
                "{what}[{i}]: expected shape {:?}, got {:?}",
                e.shape(),
                g.shape()
            )));
        }
    }
    Ok(())
}

/// Trailing simple moving average; the first `window - 1` entries average
/// what is available.
pub fn moving_average(values: &[f32], window: usize) -> Vec<f32> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0f64;
    for (i, v) in values.iter().enumerate() {
        acc += *v as f64;
        if i >= window {
            acc -= values[i - window] as f64;
        }
        out.push((acc / (i + 1).min(window) as f64) as f32);
    }
    out
}
