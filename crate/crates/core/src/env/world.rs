use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Cell, CellState, EnvError, OccupancyGrid};

/// Environment geometry and episode limits. Defaults reproduce the
/// nominal 50x50 arena with 45 circular obstacles.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub height: usize,
    pub width: usize,
    pub n_obstacles: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// LiDAR range in cell units.
    pub sensor_range: f64,
    pub rho_star: f64,
    pub max_steps: usize,
    /// Meters per cell. Only used for reporting; geometry is in cells.
    pub resolution: f32,
    /// Half-width of the occupancy-statistics window.
    pub k: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            height: 50,
            width: 50,
            n_obstacles: 45,
            r_min: 1.0,
            r_max: 3.0,
            sensor_range: 5.0,
            rho_star: 0.98,
            max_steps: 2500,
            resolution: 1.0,
            k: 3,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let fail = |msg: String| Err(EnvError::InvalidConfig(msg));
        if self.height < 3 || self.width < 3 {
            return fail(format!("grid must be at least 3x3, got {}x{}", self.height, self.width));
        }
        if !(self.r_min >= 0.0 && self.r_min <= self.r_max && self.r_max.is_finite()) {
            return fail(format!("invalid radius range [{}, {}]", self.r_min, self.r_max));
        }
        if !(self.sensor_range > 0.0 && self.sensor_range.is_finite()) {
            return fail(format!("sensor range must be positive, got {}", self.sensor_range));
        }
        if !(self.rho_star > 0.0 && self.rho_star <= 1.0) {
            return fail(format!("rho_star must lie in (0, 1], got {}", self.rho_star));
        }
        if self.max_steps == 0 {
            return fail("max_steps must be at least 1".into());
        }
        if !(self.resolution > 0.0) {
            return fail(format!("resolution must be positive, got {}", self.resolution));
        }
        Ok(())
    }
}

/// Circular obstacle in continuous cell coordinates; `(0, 0)` is the
/// top-left corner of cell `(0, 0)`, so that cell's centre is `(0.5, 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleSpec {
    pub center: (f64, f64),
    pub radius: f64,
}

impl ObstacleSpec {
    pub fn covers(&self, cell: Cell) -> bool {
        let dr = cell.row as f64 + 0.5 - self.center.0;
        let dc = cell.col as f64 + 0.5 - self.center.1;
        dr * dr + dc * dc <= self.radius * self.radius
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub ground_truth: OccupancyGrid,
    pub start: Cell,
    pub obstacles: Vec<ObstacleSpec>,
}

const MAX_GENERATION_ATTEMPTS: usize = 32;

/// Samples a random arena and a uniformly chosen free start cell.
/// Identical `(config, seed)` pairs give identical worlds.
pub fn generate_environment(config: &EnvConfig, seed: u64) -> Result<World, EnvError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let obstacles: Vec<ObstacleSpec> = (0..config.n_obstacles)
            .map(|_| ObstacleSpec {
                center: (
                    rng.gen_range(0.0..config.height as f64),
                    rng.gen_range(0.0..config.width as f64),
                ),
                radius: if config.r_max > config.r_min {
                    rng.gen_range(config.r_min..=config.r_max)
                } else {
                    config.r_min
                },
            })
            .collect();
        let grid = rasterize(config, &obstacles);
        let free: Vec<Cell> = grid
            .iter_cells()
            .filter(|&(_, s)| s == CellState::Free)
            .map(|(c, _)| c)
            .collect();
        if free.is_empty() {
            continue;
        }
        let start = free[rng.gen_range(0..free.len())];
        return Ok(World {
            ground_truth: grid,
            start,
            obstacles,
        });
    }
    Err(EnvError::GenerationFailed {
        attempts: MAX_GENERATION_ATTEMPTS,
    })
}

fn rasterize(config: &EnvConfig, obstacles: &[ObstacleSpec]) -> OccupancyGrid {
    let mut grid = OccupancyGrid::filled(
        config.height,
        config.width,
        config.resolution,
        CellState::Free,
    );
    let (h, w) = (config.height as i64, config.width as i64);
    for obs in obstacles {
        let r0 = ((obs.center.0 - obs.radius - 0.5).floor() as i64).max(0);
        let r1 = ((obs.center.0 + obs.radius - 0.5).ceil() as i64).min(h - 1);
        let c0 = ((obs.center.1 - obs.radius - 0.5).floor() as i64).max(0);
        let c1 = ((obs.center.1 + obs.radius - 0.5).ceil() as i64).min(w - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let cell = Cell::new(row as i32, col as i32);
                if obs.covers(cell) {
                    grid.set(cell, CellState::Occupied);
                }
            }
        }
    }
    grid
}
