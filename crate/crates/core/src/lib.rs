//! Simulation and validation toolkit for pairs of interacting agents in a
//! circular tank.
//!
//! A recurrent network predicts a per-axis Gaussian over each agent's next
//! acceleration from a short window of pairwise states ([`model`]). The
//! [`sim`] module drives agents with it, either directly or through an
//! emulated differential-drive robot ([`plant`]), and [`analytics`] compares
//! conditions through speed, wall and pair statistics, temporal
//! correlations and Hellinger distances between their distributions.

pub mod analytics;
pub mod geometry;
pub mod io;
pub mod model;
pub mod plant;
pub mod sim;
pub mod trajectory;

pub use geometry::{AgentState, KinematicFrame, TankGeometry, Vec2};
pub use trajectory::{Trajectory, TrajectorySample, TrajectorySet};
