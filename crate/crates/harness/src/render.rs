//! Text and PGM renderings of the agent's map.
//!
//! Glyphs: `@` agent, `+` frontier, `.` free, `?` unknown, `#` occupied.
//! PGM grey levels: free 255, frontier 200, unknown 128, agent 64,
//! occupied 0.

use shieldnav::env::{Cell, CellState, OccupancyGrid};
use shieldnav::graph::detect_frontiers;

pub const AGENT: char = '@';
pub const FRONTIER: char = '+';
pub const FREE: char = '.';
pub const UNKNOWN: char = '?';
pub const OCCUPIED: char = '#';

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mark {
    Agent,
    Frontier,
    State(CellState),
}

fn marks(map: &OccupancyGrid, agent: Cell) -> Vec<Mark> {
    let w = map.width();
    let mut out: Vec<Mark> = map.cells().iter().map(|s| Mark::State(*s)).collect();
    for f in detect_frontiers(map) {
        out[f.row as usize * w + f.col as usize] = Mark::Frontier;
    }
    if map.in_bounds(agent) {
        out[agent.row as usize * w + agent.col as usize] = Mark::Agent;
    }
    out
}

/// One line per grid row, row 0 first.
pub fn ascii_frame(map: &OccupancyGrid, agent: Cell) -> String {
    let w = map.width();
    let mut s = String::with_capacity((w + 1) * map.height());
    for (i, m) in marks(map, agent).iter().enumerate() {
        s.push(match m {
            Mark::Agent => AGENT,
            Mark::Frontier => FRONTIER,
            Mark::State(CellState::Free) => FREE,
            Mark::State(CellState::Unknown) => UNKNOWN,
            Mark::State(CellState::Occupied) => OCCUPIED,
        });
        if (i + 1) % w == 0 {
            s.push('\n');
        }
    }
    s
}

/// Binary (P5) 8-bit PGM.
pub fn pgm(map: &OccupancyGrid, agent: Cell) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend(marks(map, agent).iter().map(|m| match m {
        Mark::Agent => 64u8,
        Mark::Frontier => 200,
        Mark::State(CellState::Free) => 255,
        Mark::State(CellState::Unknown) => 128,
        Mark::State(CellState::Occupied) => 0,
    }));
    out
}
