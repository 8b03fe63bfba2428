//! Action shield: feasibility of the nine moves on the agent's map and the
//! closest-feasible replacement of rejected proposals.

use crate::env::{Action, Cell, EnvError, EpisodeState, OccupancyGrid, StepOutcome};

/// Subset of [`Action::ALL`] stored as a 9-bit mask in action order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeasibleActionSet(u16);

impl FeasibleActionSet {
    /// Mask with only the null action, which is always feasible.
    pub const NULL_ONLY: Self = Self(1 << Action::NULL_INDEX);

    /// Builds a set from a raw mask. The null action is added if missing.
    pub fn from_mask(mask: u16) -> Self {
        Self((mask & 0x1ff) | Self::NULL_ONLY.0)
    }

    pub fn mask(self) -> u16 {
        self.0
    }

    pub fn contains(self, action: Action) -> bool {
        self.0 & (1 << action.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |a| self.contains(*a))
    }
}

/// Moves that stay on the map, land on a known free cell, and (for
/// diagonals) have at least one free orthogonal companion cell. Unknown
/// cells are treated as blocked.
pub fn feasible_actions(agent_map: &OccupancyGrid, pos: Cell) -> FeasibleActionSet {
    let mut mask = FeasibleActionSet::NULL_ONLY.0;
    for action in Action::ALL {
        if action.is_null() || !agent_map.is_free(pos.offset(action)) {
            continue;
        }
        if action.is_diagonal() {
            let vertical = pos.offset(Action::new(action.di, 0));
            let horizontal = pos.offset(Action::new(0, action.dj));
            if !agent_map.is_free(vertical) && !agent_map.is_free(horizontal) {
                continue;
            }
        }
        mask |= 1 << action.index();
    }
    FeasibleActionSet(mask)
}

/// Returns the executed action and whether the shield intervened.
///
/// A feasible proposal passes unchanged. Otherwise the feasible non-null move
/// with the highest cosine similarity to the proposal wins, ties going to the
/// lowest action index; the null action is the fallback when nothing else is
/// feasible. The null action has no direction, so it never competes on
/// cosine.
pub fn filter_action(proposed: Action, feasible: FeasibleActionSet) -> (Action, bool) {
    if feasible.contains(proposed) {
        return (proposed, false);
    }
    let mut best: Option<(Action, f64)> = None;
    for candidate in feasible.iter().filter(|a| !a.is_null()) {
        let cos = proposed.dot(candidate) / (proposed.norm() * candidate.norm());
        if best.is_none_or(|(_, b)| cos > b) {
            best = Some((candidate, cos));
        }
    }
    let chosen = best.map_or(Action::NULL, |(a, _)| a);
    (chosen, chosen != proposed)
}

/// One filtered transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShieldedStep {
    pub proposed: Action,
    pub executed: Action,
    pub intervened: bool,
    pub outcome: StepOutcome,
}

/// Filters `proposed` against the agent's current map and applies the
/// result. Any collision error returned here is an invariant violation.
pub fn shielded_move(episode: &mut EpisodeState, proposed: Action) -> Result<ShieldedStep, EnvError> {
    let feasible = feasible_actions(episode.agent_map(), episode.pos());
    let (executed, intervened) = filter_action(proposed, feasible);
    let outcome = episode.apply_move(executed)?;
    Ok(ShieldedStep {
        proposed,
        executed,
        intervened,
        outcome,
    })
}
