//! Run configuration. The file is TOML; every section and key is optional
//! and falls back to the defaults below, and unknown keys are rejected.
//!
//! ```toml
//! [env]
//! h = 50
//! w = 50
//! n_o = 45
//! r_min = 1.0
//! r_max = 3.0
//! l = 5.0
//! rho_star = 0.98
//! n_s_star = 2500
//! k = 3
//! r_g = 1.0
//!
//! [training]
//! rollouts = 1024
//! mini_batches = 64
//! learning_rate = 3e-4
//! learning_epochs = 8
//! discount_factor = 0.99
//! timesteps = 400000
//! epsilon = 0.2
//!
//! [reward]
//! variant = "SGA"
//! r_unsafe = -1.0
//! r_0 = -0.5
//! r_exp = 100.0
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use shieldnav::env::EnvConfig;
use shieldnav::gnn::NetworkConfig;
use shieldnav::ppo::PpoConfig;
use shieldnav::reward::{RewardParams, RewardVariant};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub h: usize,
    pub w: usize,
    pub n_o: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub l: f64,
    pub rho_star: f64,
    pub n_s_star: usize,
    pub k: usize,
    pub r_g: f32,
}

impl Default for EnvSection {
    fn default() -> Self {
        let e = EnvConfig::default();
        Self {
            h: e.height,
            w: e.width,
            n_o: e.n_obstacles,
            r_min: e.r_min,
            r_max: e.r_max,
            l: e.sensor_range,
            rho_star: e.rho_star,
            n_s_star: e.max_steps,
            k: e.k,
            r_g: e.resolution,
        }
    }
}

impl EnvSection {
    pub fn to_env_config(&self) -> EnvConfig {
        EnvConfig {
            height: self.h,
            width: self.w,
            n_obstacles: self.n_o,
            r_min: self.r_min,
            r_max: self.r_max,
            sensor_range: self.l,
            rho_star: self.rho_star,
            max_steps: self.n_s_star,
            resolution: self.r_g,
            k: self.k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub rollouts: usize,
    pub mini_batches: usize,
    pub learning_rate: f32,
    pub learning_epochs: usize,
    pub discount_factor: f32,
    pub timesteps: usize,
    pub epsilon: f32,
    pub gae_lambda: f32,
    pub value_coef: f32,
    pub entropy_coef: f32,
    pub max_grad_norm: f32,
    pub normalize_advantages: bool,
    pub num_envs: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let p = PpoConfig::default();
        Self {
            rollouts: p.rollout_length,
            mini_batches: p.minibatches,
            learning_rate: p.learning_rate,
            learning_epochs: p.epochs,
            discount_factor: p.gamma,
            timesteps: p.total_timesteps,
            epsilon: p.clip_epsilon,
            gae_lambda: p.gae_lambda,
            value_coef: p.value_coef,
            entropy_coef: p.entropy_coef,
            max_grad_norm: p.max_grad_norm,
            normalize_advantages: p.normalize_advantages,
            num_envs: p.num_envs,
        }
    }
}

impl TrainingSection {
    pub fn to_ppo_config(&self) -> PpoConfig {
        PpoConfig {
            rollout_length: self.rollouts,
            minibatches: self.mini_batches,
            learning_rate: self.learning_rate,
            epochs: self.learning_epochs,
            gamma: self.discount_factor,
            clip_epsilon: self.epsilon,
            gae_lambda: self.gae_lambda,
            total_timesteps: self.timesteps,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
            max_grad_norm: self.max_grad_norm,
            normalize_advantages: self.normalize_advantages,
            num_envs: self.num_envs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub variant: String,
    pub r_unsafe: f64,
    pub r_0: f64,
    pub r_exp: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        let r = RewardParams::default();
        Self {
            variant: RewardVariant::Sga.name().to_string(),
            r_unsafe: r.r_unsafe,
            r_0: r.r_0,
            r_exp: r.r_exp,
        }
    }
}

impl RewardSection {
    pub fn params(&self) -> RewardParams {
        RewardParams {
            r_unsafe: self.r_unsafe,
            r_0: self.r_0,
            r_exp: self.r_exp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: usize,
    pub heads: usize,
    /// Critic second-layer width; 1 gives a scalar per waypoint.
    pub critic_out: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let n = NetworkConfig::default();
        Self {
            hidden: n.hidden,
            heads: n.heads,
            critic_out: n.critic_out,
        }
    }
}

impl NetworkSection {
    pub fn to_network_config(&self) -> NetworkConfig {
        NetworkConfig {
            hidden: self.hidden,
            heads: self.heads,
            critic_out: self.critic_out,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub envs: usize,
    pub steps: usize,
    /// First held-out environment seed; environment `i` uses `seed + i`.
    pub seed: u64,
    /// Sample from the policy instead of taking the argmax.
    pub sample: bool,
    /// Step at which the coverage distribution is reported.
    pub coverage_at: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            envs: 100,
            steps: 2500,
            seed: 1_000_000,
            sample: false,
            coverage_at: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Write a checkpoint every this many updates; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            checkpoint_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSection,
    pub training: TrainingSection,
    pub reward: RewardSection,
    pub network: NetworkSection,
    pub eval: EvalSection,
    pub run: RunSection,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(format!("{origin}: {e}")))?;
        cfg.validate().map_err(|m| HarnessError::Config(format!("{origin}: {m}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn variant(&self) -> RewardVariant {
        self.reward.variant.parse().expect("validated")
    }

    pub fn validate(&self) -> Result<(), String> {
        self.reward
            .variant
            .parse::<RewardVariant>()
            .map_err(|e| format!("[reward] variant: {e}"))?;
        self.env
            .to_env_config()
            .validate()
            .map_err(|e| format!("[env] {e}"))?;
        self.training
            .to_ppo_config()
            .validate()
            .map_err(|e| format!("[training] {e}"))?;
        let n = &self.network;
        if n.hidden == 0 || n.heads == 0 || n.critic_out == 0 {
            return Err("[network] hidden, heads and critic_out must be positive".into());
        }
        if self.eval.envs == 0 || self.eval.steps == 0 {
            return Err("[eval] envs and steps must be positive".into());
        }
        Ok(())
    }
}

/// Parses a comma-separated variant list such as `SGA,sge,FE`.
pub fn parse_variants(list: &str) -> Result<Vec<RewardVariant>, HarnessError> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let v: RewardVariant = item
            .parse()
            .map_err(|e| HarnessError::Config(format!("--variants: {e}")))?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(HarnessError::Config("--variants: empty list".into()));
    }
    Ok(out)
}
