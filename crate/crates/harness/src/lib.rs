//! Experiment harness: configuration, training runs with checkpoints,
//! fixed-budget evaluation, reward-variant ablations, robustness sweeps and
//! map rendering.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod pipeline;
pub mod render;
pub mod report;

use shieldnav::env::EnvError;
use shieldnav::ppo::PpoError;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl HarnessError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Checkpoint(_) => 3,
            HarnessError::Invariant(_) => 4,
            HarnessError::Io(_) => 1,
        }
    }
}

impl From<EnvError> for HarnessError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::InvalidConfig(m) => HarnessError::Config(m),
            e @ EnvError::GenerationFailed { .. } => HarnessError::Config(e.to_string()),
            other => HarnessError::Invariant(other.to_string()),
        }
    }
}

impl From<PpoError> for HarnessError {
    fn from(e: PpoError) -> Self {
        match e {
            PpoError::Env(env) => env.into(),
            PpoError::InvalidConfig(m) => HarnessError::Config(m),
            other => HarnessError::Invariant(other.to_string()),
        }
    }
}
