//! Reward family: a base structure (unsafe penalty, completion bonus, step
//! reward) with four step-reward formulations, each with and without the
//! unsafe penalty.

use std::fmt;
use std::str::FromStr;

use crate::env::{Cell, OccupancyGrid};
use crate::graph::{CellKind, MapStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardVariant {
    /// Safety-gated exploration: sparse completion bonus only.
    Sge,
    /// Safety-gated discovery: step reward is the discovery count.
    Sgd,
    /// Safety-gated pure exploration: discovery count, or `r_0` when idle.
    Sgpe,
    /// Safety-gated adaptive: discovery count, else potential-field decrease.
    Sga,
    Fe,
    Fd,
    Fpe,
    Fa,
}

impl RewardVariant {
    pub const ALL: [RewardVariant; 8] = [
        Self::Sge,
        Self::Sgd,
        Self::Sgpe,
        Self::Sga,
        Self::Fe,
        Self::Fd,
        Self::Fpe,
        Self::Fa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sge => "SGE",
            Self::Sgd => "SGD",
            Self::Sgpe => "SGPE",
            Self::Sga => "SGA",
            Self::Fe => "FE",
            Self::Fd => "FD",
            Self::Fpe => "FPE",
            Self::Fa => "FA",
        }
    }

    /// Whether safety-filter interventions are penalised.
    pub fn penalizes_unsafe(self) -> bool {
        matches!(self, Self::Sge | Self::Sgd | Self::Sgpe | Self::Sga)
    }

    /// The counterpart with the unsafe penalty toggled.
    pub fn counterpart(self) -> Self {
        match self {
            Self::Sge => Self::Fe,
            Self::Sgd => Self::Fd,
            Self::Sgpe => Self::Fpe,
            Self::Sga => Self::Fa,
            Self::Fe => Self::Sge,
            Self::Fd => Self::Sgd,
            Self::Fpe => Self::Sgpe,
            Self::Fa => Self::Sga,
        }
    }

    /// Whether the step reward needs potential-field values.
    pub fn uses_potential(self) -> bool {
        matches!(self, Self::Sga | Self::Fa)
    }
}

impl fmt::Display for RewardVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown reward variant {0:?} (expected one of SGE, SGD, SGPE, SGA, FE, FD, FPE, FA)")]
pub struct ParseVariantError(pub String);

impl FromStr for RewardVariant {
    type Err = ParseVariantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ParseVariantError(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    pub r_unsafe: f64,
    pub r_0: f64,
    pub r_exp: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            r_unsafe: -1.0,
            r_0: -0.5,
            r_exp: 100.0,
        }
    }
}

/// Everything the reward needs about one transition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepContext {
    /// Cells newly discovered by the step (`n_d`).
    pub discovered: usize,
    /// Exploration ratio after the step.
    pub rho: f64,
    pub rho_star: f64,
    /// The shield replaced the proposed action.
    pub intervened: bool,
    pub frontiers_prev: usize,
    pub frontiers_curr: usize,
    pub phi_prev: Option<f64>,
    pub phi_curr: Option<f64>,
}

/// Potential of the most attractive frontier: the maximum over frontiers
/// (other than the agent's own cell) of unknown cells in the k-window
/// divided by distance to the agent. `None` when no such frontier exists.
pub fn potential_field(stats: &MapStats, agent_pos: Cell, k: usize) -> Option<f64> {
    stats
        .frontiers()
        .iter()
        .filter(|&&f| f != agent_pos)
        .map(|&f| stats.count(f, k, CellKind::Unknown) as f64 / f.distance(agent_pos))
        .reduce(f64::max)
}

/// [`potential_field`] for an explicit frontier list on a raw map.
pub fn potential_field_over(
    agent_map: &OccupancyGrid,
    frontiers: &[Cell],
    agent_pos: Cell,
    k: usize,
) -> Option<f64> {
    let stats = MapStats::new(agent_map);
    frontiers
        .iter()
        .filter(|&&f| f != agent_pos)
        .map(|&f| stats.count(f, k, CellKind::Unknown) as f64 / f.distance(agent_pos))
        .reduce(f64::max)
}

pub fn compute_reward(variant: RewardVariant, params: &RewardParams, ctx: &StepContext) -> f64 {
    if ctx.intervened && variant.penalizes_unsafe() {
        return params.r_unsafe;
    }
    if ctx.rho >= ctx.rho_star {
        return params.r_exp;
    }
    let n_d = ctx.discovered as f64;
    match variant {
        RewardVariant::Sge | RewardVariant::Fe => 0.0,
        RewardVariant::Sgd | RewardVariant::Fd => n_d,
        RewardVariant::Sgpe | RewardVariant::Fpe => {
            if ctx.discovered > 0 {
                n_d
            } else {
                params.r_0
            }
        }
        RewardVariant::Sga | RewardVariant::Fa => {
            if ctx.discovered > 0 {
                return n_d;
            }
            match (ctx.phi_prev, ctx.phi_curr) {
                (Some(prev), Some(curr)) if ctx.frontiers_prev > 1 && ctx.frontiers_curr > 1 => {
                    prev - curr
                }
                _ => params.r_0,
            }
        }
    }
}
