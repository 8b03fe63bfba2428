//! Safe frontier exploration on occupancy grids.
//!
//! An agent explores a randomly generated arena by choosing one of nine
//! moves per step. A graph-attention policy proposes the move from an
//! exploration graph built over the agent's partial map, and a safety
//! filter swaps infeasible proposals for the closest feasible move, so the
//! agent never collides. The policy and its critic are trained with PPO
//! on one of eight reward formulations.

pub mod env;
pub mod graph;
pub mod safety;
pub mod reward;
pub mod autodiff;
pub mod gnn;
pub mod ppo;
