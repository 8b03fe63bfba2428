//! Simulated 360-degree LiDAR over an occupancy grid.
//!
//! Rays are cast at a fixed 0.5 degree spacing from the centre of the
//! agent's cell and marched in 0.1-cell increments. Because the agent always
//! sits at a cell centre, the sequence of cells visited by each ray is a
//! pure function of the range, so it is traced once and replayed as integer
//! offsets.

use std::collections::HashSet;

use super::{Cell, CellState, OccupancyGrid};

pub const RAY_COUNT: usize = 720;
pub const RAY_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct RayCell {
    di: i32,
    dj: i32,
    /// Cell centre lies within the sensor range.
    in_range: bool,
}

/// Cells newly revealed by one scan.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanReport {
    /// Cells that changed from Unknown (`n_d`).
    pub discovered: usize,
    /// Subset of `discovered` that is Free in ground truth.
    pub discovered_free: usize,
}

#[derive(Debug, Clone)]
pub struct LidarScanner {
    range: f64,
    rays: Vec<Vec<RayCell>>,
}

impl LidarScanner {
    pub fn new(range: f64) -> Self {
        let steps = (range / RAY_STEP).round() as i64;
        let range_sq = range * range + 1e-9;
        let mut seen = HashSet::new();
        let mut rays = Vec::new();
        for r in 0..RAY_COUNT {
            let theta = (r as f64 * 0.5).to_radians();
            let (sin, cos) = theta.sin_cos();
            let mut ray: Vec<RayCell> = Vec::new();
            for n in 0..=steps {
                let t = n as f64 * RAY_STEP;
                let di = (0.5 + t * cos).floor() as i32;
                let dj = (0.5 + t * sin).floor() as i32;
                if ray.last().is_some_and(|c| c.di == di && c.dj == dj) {
                    continue;
                }
                let d2 = (di * di + dj * dj) as f64;
                ray.push(RayCell {
                    di,
                    dj,
                    in_range: d2 <= range_sq,
                });
            }
            if seen.insert(ray.clone()) {
                rays.push(ray);
            }
        }
        Self { range, rays }
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    /// Reveals cells visible from `pos` in `agent_map`, copying their state
    /// from `ground_truth`. Known cells are never reverted.
    pub fn scan(
        &self,
        ground_truth: &OccupancyGrid,
        agent_map: &mut OccupancyGrid,
        pos: Cell,
    ) -> ScanReport {
        debug_assert!(ground_truth.same_shape(agent_map));
        let mut report = ScanReport::default();
        for ray in &self.rays {
            for rc in ray {
                let cell = Cell::new(pos.row + rc.di, pos.col + rc.dj);
                let Some(truth) = ground_truth.get(cell) else {
                    break;
                };
                if rc.in_range && agent_map.state(cell) == CellState::Unknown {
                    agent_map.set(cell, truth);
                    report.discovered += 1;
                    if truth == CellState::Free {
                        report.discovered_free += 1;
                    }
                }
                if truth == CellState::Occupied {
                    break;
                }
            }
        }
        report
    }
}

/// One-shot scan; builds a fresh ray table. Prefer a cached
/// [`LidarScanner`] inside loops.
pub fn lidar_scan(
    ground_truth: &OccupancyGrid,
    agent_map: &mut OccupancyGrid,
    pos: Cell,
    range: f64,
) -> usize {
    LidarScanner::new(range).scan(ground_truth, agent_map, pos).discovered
}
