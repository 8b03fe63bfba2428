//! Exploration-graph observation.
//!
//! Nodes are the nine next-step waypoints (in [`Action::ALL`] order) followed
//! by every frontier cell in row-major order. Waypoints are fully connected in
//! both directions; each frontier sends one edge to its nearest waypoint.
//! Every node carries `[class one-hot (4) | occupancy fractions (4)]`.

use crate::env::{Action, Cell, CellState, OccupancyGrid};
use crate::safety::feasible_actions;

pub const NODE_FEATURES: usize = 8;
pub const WAYPOINT_COUNT: usize = Action::COUNT;

/// Cell categories counted in a neighbourhood window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Traversable,
    Unknown,
    /// Occupied cells plus window positions outside the map.
    NonTraversable,
    Frontier,
}

fn is_frontier_at(map: &OccupancyGrid, cell: Cell) -> bool {
    if map.get(cell) != Some(CellState::Free) {
        return false;
    }
    for dr in -1..=1 {
        for dc in -1..=1 {
            if (dr, dc) != (0, 0)
                && map.get(Cell::new(cell.row + dr, cell.col + dc)) == Some(CellState::Unknown)
            {
                return true;
            }
        }
    }
    false
}

/// Free cells with at least one unknown 8-neighbour, in row-major order.
pub fn detect_frontiers(map: &OccupancyGrid) -> Vec<Cell> {
    map.iter_cells()
        .filter(|&(c, s)| s == CellState::Free && is_frontier_at(map, c))
        .map(|(c, _)| c)
        .collect()
}

/// Summed-area tables over the agent map, giving O(1) window counts, plus
/// the frontier list they were built from.
#[derive(Debug, Clone)]
pub struct MapStats {
    height: usize,
    width: usize,
    free: Vec<u32>,
    unknown: Vec<u32>,
    frontier: Vec<u32>,
    frontiers: Vec<Cell>,
}

impl MapStats {
    pub fn new(map: &OccupancyGrid) -> Self {
        let (h, w) = (map.height(), map.width());
        let stride = w + 1;
        let mut free = vec![0u32; (h + 1) * stride];
        let mut unknown = vec![0u32; (h + 1) * stride];
        let mut frontier = vec![0u32; (h + 1) * stride];
        let mut frontiers = Vec::new();
        for r in 0..h {
            let (mut row_free, mut row_unknown, mut row_frontier) = (0u32, 0u32, 0u32);
            for c in 0..w {
                let cell = Cell::new(r as i32, c as i32);
                match map.state(cell) {
                    CellState::Free => {
                        row_free += 1;
                        if is_frontier_at(map, cell) {
                            row_frontier += 1;
                            frontiers.push(cell);
                        }
                    }
                    CellState::Unknown => row_unknown += 1,
                    CellState::Occupied => {}
                }
                let above = r * stride + c + 1;
                let here = (r + 1) * stride + c + 1;
                free[here] = free[above] + row_free;
                unknown[here] = unknown[above] + row_unknown;
                frontier[here] = frontier[above] + row_frontier;
            }
        }
        Self {
            height: h,
            width: w,
            free,
            unknown,
            frontier,
            frontiers,
        }
    }

    pub fn frontiers(&self) -> &[Cell] {
        &self.frontiers
    }

    fn window_sum(&self, table: &[u32], r0: usize, c0: usize, r1: usize, c1: usize) -> u32 {
        // Inclusive-exclusive bounds [r0, r1) x [c0, c1).
        let s = self.width + 1;
        table[r1 * s + c1] + table[r0 * s + c0] - table[r0 * s + c1] - table[r1 * s + c0]
    }

    /// Number of cells of `kind` in the `(2k+1)^2` window centred on `cell`.
    /// `cell` itself may lie off the map.
    pub fn count(&self, cell: Cell, k: usize, kind: CellKind) -> usize {
        let k = k as i64;
        let side = (2 * k + 1) as usize;
        let r0 = (cell.row as i64 - k).clamp(0, self.height as i64) as usize;
        let r1 = (cell.row as i64 + k + 1).clamp(0, self.height as i64) as usize;
        let c0 = (cell.col as i64 - k).clamp(0, self.width as i64) as usize;
        let c1 = (cell.col as i64 + k + 1).clamp(0, self.width as i64) as usize;
        let (free, unknown, frontier) = if r0 < r1 && c0 < c1 {
            (
                self.window_sum(&self.free, r0, c0, r1, c1),
                self.window_sum(&self.unknown, r0, c0, r1, c1),
                self.window_sum(&self.frontier, r0, c0, r1, c1),
            )
        } else {
            (0, 0, 0)
        };
        match kind {
            CellKind::Traversable => free as usize,
            CellKind::Unknown => unknown as usize,
            CellKind::NonTraversable => side * side - free as usize - unknown as usize,
            CellKind::Frontier => frontier as usize,
        }
    }

    /// Normalised `[traversable, unknown, non-traversable, frontier]` counts.
    pub fn neighborhood(&self, cell: Cell, k: usize) -> [f32; 4] {
        let area = ((2 * k + 1) * (2 * k + 1)) as f32;
        [
            CellKind::Traversable,
            CellKind::Unknown,
            CellKind::NonTraversable,
            CellKind::Frontier,
        ]
        .map(|kind| self.count(cell, k, kind) as f32 / area)
    }
}

/// Γ_kind for a single window. Builds the tables on every call; use
/// [`MapStats`] when querying many cells.
pub fn count_cells(map: &OccupancyGrid, cell: Cell, k: usize, kind: CellKind) -> usize {
    MapStats::new(map).count(cell, k, kind)
}

pub fn neighborhood_stats(map: &OccupancyGrid, cell: Cell, k: usize) -> [f32; 4] {
    MapStats::new(map).neighborhood(cell, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    AgentPosition = 0,
    TraversableWaypoint = 1,
    NonTraversableWaypoint = 2,
    Frontier = 3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub cell: Cell,
    pub class: NodeClass,
    pub features: [f32; NODE_FEATURES],
}

impl GraphNode {
    fn new(cell: Cell, class: NodeClass, occupancy: [f32; 4]) -> Self {
        let mut features = [0.0; NODE_FEATURES];
        features[class as usize] = 1.0;
        features[4..].copy_from_slice(&occupancy);
        Self {
            cell,
            class,
            features,
        }
    }
}

/// Directed edge weighted by centroid distance in cell units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub src: usize,
    pub dst: usize,
    pub weight: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl ExplorationGraph {
    /// Node index of the waypoint reached by `action`.
    pub fn waypoint_node(action: Action) -> usize {
        action.index()
    }

    pub fn frontier_count(&self) -> usize {
        self.nodes.len() - WAYPOINT_COUNT
    }
}

/// Index of the waypoint nearest to `frontier`; ties go to the lower action
/// index.
pub fn nearest_waypoint(agent_pos: Cell, frontier: Cell) -> usize {
    let mut best = (i64::MAX, 0usize);
    for (idx, action) in Action::ALL.iter().enumerate() {
        let w = agent_pos.offset(*action);
        let dr = (frontier.row - w.row) as i64;
        let dc = (frontier.col - w.col) as i64;
        let d2 = dr * dr + dc * dc;
        if d2 < best.0 {
            best = (d2, idx);
        }
    }
    best.1
}

pub fn build_graph(map: &OccupancyGrid, agent_pos: Cell, k: usize) -> ExplorationGraph {
    build_graph_with(map, &MapStats::new(map), agent_pos, k)
}

/// Same as [`build_graph`] with precomputed map statistics.
pub fn build_graph_with(
    map: &OccupancyGrid,
    stats: &MapStats,
    agent_pos: Cell,
    k: usize,
) -> ExplorationGraph {
    let feasible = feasible_actions(map, agent_pos);
    let frontiers = stats.frontiers();
    let mut nodes = Vec::with_capacity(WAYPOINT_COUNT + frontiers.len());
    for action in Action::ALL {
        let cell = agent_pos.offset(action);
        let class = if action.is_null() {
            NodeClass::AgentPosition
        } else if feasible.contains(action) {
            NodeClass::TraversableWaypoint
        } else {
            NodeClass::NonTraversableWaypoint
        };
        let occupancy = if map.in_bounds(cell) {
            stats.neighborhood(cell, k)
        } else {
            [0.0, 0.0, 1.0, 0.0]
        };
        nodes.push(GraphNode::new(cell, class, occupancy));
    }

    let mut edges = Vec::with_capacity(WAYPOINT_COUNT * (WAYPOINT_COUNT - 1) + frontiers.len());
    for src in 0..WAYPOINT_COUNT {
        for dst in 0..WAYPOINT_COUNT {
            if src != dst {
                let weight = nodes[src].cell.distance(nodes[dst].cell) as f32;
                edges.push(GraphEdge { src, dst, weight });
            }
        }
    }
    for &f in frontiers {
        let src = nodes.len();
        nodes.push(GraphNode::new(f, NodeClass::Frontier, stats.neighborhood(f, k)));
        let dst = nearest_waypoint(agent_pos, f);
        let weight = f.distance(nodes[dst].cell) as f32;
        edges.push(GraphEdge { src, dst, weight });
    }
    ExplorationGraph { nodes, edges }
}
