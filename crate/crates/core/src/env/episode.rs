use super::{
    generate_environment, Action, Cell, CellState, EnvConfig, EnvError, LidarScanner,
    OccupancyGrid,
};

/// Fraction of ground-truth free cells that are known in `agent_map`.
///
/// Obstacle interiors are never observable, so the denominator only counts
/// traversable cells.
pub fn exploration_ratio(agent_map: &OccupancyGrid, ground_truth: &OccupancyGrid) -> f64 {
    assert!(agent_map.same_shape(ground_truth), "map shapes differ");
    let mut free = 0usize;
    let mut known = 0usize;
    for (&truth, &seen) in ground_truth.cells().iter().zip(agent_map.cells()) {
        if truth == CellState::Free {
            free += 1;
            if seen != CellState::Unknown {
                known += 1;
            }
        }
    }
    if free == 0 {
        return 1.0;
    }
    known as f64 / free as f64
}

/// Result of a single transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub discovered: usize,
    pub rho: f64,
    pub done: bool,
    pub truncated: bool,
}

/// One exploration episode: ground truth, the agent's partial map and its
/// position.
#[derive(Debug, Clone)]
pub struct EpisodeState {
    config: EnvConfig,
    scanner: LidarScanner,
    ground_truth: OccupancyGrid,
    agent_map: OccupancyGrid,
    pos: Cell,
    step_count: usize,
    done: bool,
    truncated: bool,
    free_total: usize,
    free_known: usize,
    initial_discovered: usize,
}

impl EpisodeState {
    /// Generates a world from `seed` and performs the initial scan at the
    /// start cell.
    pub fn new(config: &EnvConfig, seed: u64) -> Result<Self, EnvError> {
        let world = generate_environment(config, seed)?;
        Ok(Self::from_world(
            config,
            LidarScanner::new(config.sensor_range),
            world.ground_truth,
            world.start,
        ))
    }

    /// Starts an episode on an explicit map. `start` must be free.
    pub fn from_world(
        config: &EnvConfig,
        scanner: LidarScanner,
        ground_truth: OccupancyGrid,
        start: Cell,
    ) -> Self {
        assert_eq!(
            ground_truth.state(start),
            CellState::Free,
            "start cell {start} is not free"
        );
        let mut agent_map = OccupancyGrid::filled(
            ground_truth.height(),
            ground_truth.width(),
            ground_truth.resolution(),
            CellState::Unknown,
        );
        let report = scanner.scan(&ground_truth, &mut agent_map, start);
        let free_total = ground_truth.count(CellState::Free);
        let mut state = Self {
            config: config.clone(),
            scanner,
            ground_truth,
            agent_map,
            pos: start,
            step_count: 0,
            done: false,
            truncated: false,
            free_total,
            free_known: report.discovered_free,
            initial_discovered: report.discovered,
        };
        state.done = state.exploration_ratio() >= state.config.rho_star;
        state
    }

    /// Regenerates the world in place, reusing the ray table.
    pub fn reset(&mut self, seed: u64) -> Result<(), EnvError> {
        let world = generate_environment(&self.config, seed)?;
        let scanner = std::mem::replace(&mut self.scanner, LidarScanner::new(0.0));
        *self = Self::from_world(&self.config, scanner, world.ground_truth, world.start);
        Ok(())
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn ground_truth(&self) -> &OccupancyGrid {
        &self.ground_truth
    }

    pub fn agent_map(&self) -> &OccupancyGrid {
        &self.agent_map
    }

    pub fn pos(&self) -> Cell {
        self.pos
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// Cells revealed by the scan at the start cell.
    pub fn initial_discovered(&self) -> usize {
        self.initial_discovered
    }

    pub fn exploration_ratio(&self) -> f64 {
        if self.free_total == 0 {
            1.0
        } else {
            self.free_known as f64 / self.free_total as f64
        }
    }

    /// Moves the agent by `action` and scans from the new cell.
    ///
    /// The caller must pass an action the safety filter accepted. A move into
    /// an occupied or off-map cell is reported as [`EnvError::Collision`];
    /// in a correctly wired loop that error is unreachable.
    ///
    /// Stepping after `done` is allowed (evaluation keeps running to a fixed
    /// horizon); stepping after truncation is not.
    pub fn apply_move(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.truncated {
            return Err(EnvError::EpisodeTruncated {
                steps: self.step_count,
            });
        }
        let target = self.pos.offset(action);
        if self.ground_truth.get(target) != Some(CellState::Free) {
            return Err(EnvError::Collision {
                from: self.pos,
                action,
            });
        }
        self.pos = target;
        self.step_count += 1;
        let report = self.scanner.scan(&self.ground_truth, &mut self.agent_map, self.pos);
        self.free_known += report.discovered_free;
        let rho = self.exploration_ratio();
        if rho >= self.config.rho_star {
            self.done = true;
        }
        if self.step_count >= self.config.max_steps {
            self.truncated = true;
        }
        Ok(StepOutcome {
            discovered: report.discovered,
            rho,
            done: self.done,
            truncated: self.truncated,
        })
    }
}
