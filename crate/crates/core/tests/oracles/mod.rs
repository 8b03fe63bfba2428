//! Brute-force reference implementations used by the integration and
//! acceptance tests. Written directly from the definitions, without the
//! caching, summed-area tables or precomputed ray tables of the library.

#![allow(dead_code)]

pub mod gat;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shieldnav::env::{Action, Cell, CellState, EnvConfig, EpisodeState, ObstacleSpec, OccupancyGrid};
use shieldnav::graph::{ExplorationGraph, WAYPOINT_COUNT};
use shieldnav::safety::{feasible_actions, filter_action, FeasibleActionSet};

pub fn cells(map: &OccupancyGrid) -> impl Iterator<Item = Cell> + '_ {
    (0..map.height() as i32).flat_map(move |r| (0..map.width() as i32).map(move |c| Cell::new(r, c)))
}

/// Occupied iff some obstacle disc contains the cell centre.
pub fn rasterize(h: usize, w: usize, obstacles: &[ObstacleSpec]) -> OccupancyGrid {
    let mut grid = OccupancyGrid::filled(h, w, 1.0, CellState::Free);
    for r in 0..h {
        for c in 0..w {
            let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
            let hit = obstacles.iter().any(|o| {
                (y - o.center.0).powi(2) + (x - o.center.1).powi(2) <= o.radius * o.radius
            });
            if hit {
                grid.set(Cell::new(r as i32, c as i32), CellState::Occupied);
            }
        }
    }
    grid
}

/// Marches all 720 rays from the cell centre without deduplication.
pub fn lidar(truth: &OccupancyGrid, agent: &mut OccupancyGrid, pos: Cell, range: f64) -> usize {
    let mut discovered = 0;
    let steps = (range / 0.1).round() as i64;
    for r in 0..720 {
        let theta = (r as f64 * 0.5).to_radians();
        for n in 0..=steps {
            let t = n as f64 * 0.1;
            let y = pos.row as f64 + 0.5 + t * theta.cos();
            let x = pos.col as f64 + 0.5 + t * theta.sin();
            let cell = Cell::new(y.floor() as i32, x.floor() as i32);
            let Some(state) = truth.get(cell) else { break };
            let (dr, dc) = ((cell.row - pos.row) as f64, (cell.col - pos.col) as f64);
            if dr * dr + dc * dc <= range * range + 1e-9 && agent.state(cell) == CellState::Unknown {
                agent.set(cell, state);
                discovered += 1;
            }
            if state == CellState::Occupied {
                break;
            }
        }
    }
    discovered
}

pub fn is_frontier(map: &OccupancyGrid, cell: Cell) -> bool {
    if map.get(cell) != Some(CellState::Free) {
        return false;
    }
    let mut found = false;
    for dr in [-1, 0, 1] {
        for dc in [-1, 0, 1] {
            if dr == 0 && dc == 0 {
                continue;
            }
            if map.get(Cell::new(cell.row + dr, cell.col + dc)) == Some(CellState::Unknown) {
                found = true;
            }
        }
    }
    found
}

pub fn frontiers(map: &OccupancyGrid) -> Vec<Cell> {
    cells(map).filter(|&c| is_frontier(map, c)).collect()
}

/// `[traversable, unknown, non-traversable, frontier]` counts over the
/// `(2k+1)^2` window; off-map positions count as non-traversable.
pub fn gamma(map: &OccupancyGrid, cell: Cell, k: usize) -> [usize; 4] {
    let k = k as i32;
    let mut out = [0usize; 4];
    for r in cell.row - k..=cell.row + k {
        for c in cell.col - k..=cell.col + k {
            let here = Cell::new(r, c);
            match map.get(here) {
                Some(CellState::Free) => {
                    out[0] += 1;
                    if is_frontier(map, here) {
                        out[3] += 1;
                    }
                }
                Some(CellState::Unknown) => out[1] += 1,
                Some(CellState::Occupied) | None => out[2] += 1,
            }
        }
    }
    out
}

/// Angle between two non-null moves, in radians.
fn angle_between(a: Action, b: Action) -> f64 {
    let ta = (a.di as f64).atan2(a.dj as f64);
    let tb = (b.di as f64).atan2(b.dj as f64);
    let d = (ta - tb).abs();
    d.min(2.0 * std::f64::consts::PI - d)
}

/// Feasible proposals pass; otherwise the smallest-angle feasible move,
/// lowest index on ties; null when nothing else is feasible.
pub fn filter(proposed: Action, feasible: &[bool; 9]) -> Action {
    if feasible[proposed.index()] {
        return proposed;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, &ok) in feasible.iter().enumerate() {
        if !ok || i == Action::NULL_INDEX {
            continue;
        }
        let ang = if proposed.is_null() {
            0.0
        } else {
            angle_between(proposed, Action::ALL[i])
        };
        match best {
            Some((_, b)) if ang >= b - 1e-12 => {}
            _ => best = Some((i, ang)),
        }
    }
    best.map_or(Action::NULL, |(i, _)| Action::ALL[i])
}

pub fn mask_to_flags(set: FeasibleActionSet) -> [bool; 9] {
    std::array::from_fn(|i| set.contains(Action::ALL[i]))
}

/// Backward recursion over a rollout given per-step flags.
#[allow(clippy::too_many_arguments)]
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    terminated: &[bool],
    truncated: &[bool],
    truncation_values: &[f64],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    for t in (0..n).rev() {
        let (next_v, next_a) = if terminated[t] {
            (0.0, 0.0)
        } else if truncated[t] {
            (truncation_values[t], 0.0)
        } else if t + 1 == n {
            (bootstrap, 0.0)
        } else {
            (values[t + 1], adv[t + 1])
        };
        adv[t] = rewards[t] + gamma * next_v - values[t] + gamma * lambda * next_a;
    }
    adv
}

/// Partial agent map obtained by a short random filtered walk.
pub fn random_partial_map(config: &EnvConfig, seed: u64, walk: usize) -> (OccupancyGrid, Cell) {
    let mut ep = EpisodeState::new(config, seed).expect("generation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for _ in 0..walk {
        if ep.truncated() {
            break;
        }
        let proposed = Action::ALL[rng.gen_range(0..9)];
        let feasible = feasible_actions(ep.agent_map(), ep.pos());
        let (executed, _) = filter_action(proposed, feasible);
        ep.apply_move(executed).expect("filtered move");
    }
    (ep.agent_map().clone(), ep.pos())
}

/// Uniformly random three-state grid.
pub fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> OccupancyGrid {
    let mut g = OccupancyGrid::filled(h, w, 1.0, CellState::Unknown);
    for r in 0..h {
        for c in 0..w {
            let s = match rng.gen_range(0..3) {
                0 => CellState::Free,
                1 => CellState::Unknown,
                _ => CellState::Occupied,
            };
            g.set(Cell::new(r as i32, c as i32), s);
        }
    }
    g
}

/// Moves frontier nodes into a new order and rewrites the edge list to match.
pub fn permute_frontiers(graph: &ExplorationGraph, rng: &mut ChaCha8Rng) -> ExplorationGraph {
    let f = graph.frontier_count();
    let mut order: Vec<usize> = (0..f).collect();
    order.shuffle(rng);
    let mut new_index: Vec<usize> = (0..graph.nodes.len()).collect();
    let mut nodes = graph.nodes[..WAYPOINT_COUNT].to_vec();
    for (slot, &old) in order.iter().enumerate() {
        new_index[WAYPOINT_COUNT + old] = WAYPOINT_COUNT + slot;
        nodes.push(graph.nodes[WAYPOINT_COUNT + old].clone());
    }
    let mut edges: Vec<_> = graph
        .edges
        .iter()
        .map(|e| {
            let mut e = *e;
            e.src = new_index[e.src];
            e.dst = new_index[e.dst];
            e
        })
        .collect();
    edges.reverse();
    ExplorationGraph { nodes, edges }
}
