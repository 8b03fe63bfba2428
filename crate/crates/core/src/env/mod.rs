//! Grid world: procedural arenas, simulated LiDAR and agent transitions.

mod episode;
mod grid;
mod lidar;
mod world;

pub use episode::{exploration_ratio, EpisodeState, StepOutcome};
pub use grid::{Action, Cell, CellState, OccupancyGrid};
pub use lidar::{lidar_scan, LidarScanner, ScanReport, RAY_COUNT, RAY_STEP};
pub use world::{generate_environment, EnvConfig, ObstacleSpec, World};

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("no free cell after {attempts} generation attempts")]
    GenerationFailed { attempts: usize },
    #[error("collision: move {action} from {from} leaves the map or enters an occupied cell")]
    Collision { from: Cell, action: Action },
    #[error("episode already truncated after {steps} steps")]
    EpisodeTruncated { steps: usize },
}
