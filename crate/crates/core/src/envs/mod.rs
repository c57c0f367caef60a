//! Built-in mazes: a discrete grid for exact oracles and a continuous
//! point mass for the reinforcement-learning pipeline.

mod grid;
mod layout;
mod noise;
mod point_mass;

pub use grid::{GridMaze, GridStep, Mu0};
pub use layout::{Cell, MazeLayout, GRID_UMAZE, MOVES, POINT_UMAZE};
pub use noise::NoiseSpec;
pub use point_mass::{PointMassConfig, PointMassMaze, Policy, Step, WaypointController};
