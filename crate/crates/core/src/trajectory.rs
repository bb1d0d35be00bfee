//! Time-indexed agent trajectories, the common currency between the
//! simulator, file I/O and analytics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, AgentState, TankGeometry, Vec2};

pub const FISH_ONLY: &str = "fish-only";
pub const DLI_SP: &str = "DLI-SP";
pub const DLI_BP: &str = "DLI-BP";

/// Relative tolerance on sample spacing.
pub const SPACING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("agent {agent}: sample {index} at t={t} breaks the {dt} s spacing")]
    Spacing { agent: u32, index: usize, t: f64, dt: f64 },
    #[error("agent {agent}: sample {index} at ({x}, {y}) is outside the tank")]
    OutsideTank { agent: u32, index: usize, x: f64, y: f64 },
    #[error("agents have {a} and {b} samples")]
    LengthMismatch { a: usize, b: usize },
    #[error("agents disagree on time at sample {index}: {ta} vs {tb}")]
    Misaligned { index: usize, ta: f64, tb: f64 },
    #[error("agent {agent}: non-finite value at sample {index}")]
    NonFinite { agent: u32, index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceTag {
    Simulated,
    Replayed,
    Plant,
    Recorded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Vec2,
    pub velocity: Vec2,
}

impl TrajectorySample {
    pub fn state(&self, geom: &TankGeometry) -> AgentState {
        AgentState {
            position_cm: self.position,
            velocity_cm_s: self.velocity,
            wall_distance_cm: (geom.radius_cm() - self.position.norm()).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub agent_id: u32,
    pub dt_s: f64,
    pub source: SourceTag,
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 * self.dt_s
    }

    pub fn validate(&self, geom: &TankGeometry) -> Result<(), TrajectoryError> {
        for (k, s) in self.samples.iter().enumerate() {
            if !(s.t.is_finite() && s.position.is_finite() && s.velocity.is_finite()) {
                return Err(TrajectoryError::NonFinite {
                    agent: self.agent_id,
                    index: k,
                });
            }
            if geometry::wall_distance(s.position, geom).is_err() {
                return Err(TrajectoryError::OutsideTank {
                    agent: self.agent_id,
                    index: k,
                    x: s.position.x,
                    y: s.position.y,
                });
            }
            if k > 0 {
                let gap = s.t - self.samples[k - 1].t;
                if (gap - self.dt_s).abs() > SPACING_TOLERANCE * self.dt_s.max(1.0) {
                    return Err(TrajectoryError::Spacing {
                        agent: self.agent_id,
                        index: k,
                        t: s.t,
                        dt: self.dt_s,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Two aligned trajectories from one experiment or simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub agents: [Trajectory; 2],
    pub condition: String,
    pub experiment_id: String,
    pub geom: TankGeometry,
}

impl TrajectorySet {
    pub fn dt_s(&self) -> f64 {
        self.agents[0].dt_s
    }

    pub fn len(&self) -> usize {
        self.agents[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents[0].is_empty()
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let [a, b] = &self.agents;
        if a.len() != b.len() {
            return Err(TrajectoryError::LengthMismatch { a: a.len(), b: b.len() });
        }
        for (k, (sa, sb)) in a.samples.iter().zip(&b.samples).enumerate() {
            if (sa.t - sb.t).abs() > SPACING_TOLERANCE * a.dt_s {
                return Err(TrajectoryError::Misaligned {
                    index: k,
                    ta: sa.t,
                    tb: sb.t,
                });
            }
        }
        a.validate(&self.geom)?;
        b.validate(&self.geom)
    }

    /// Same set with the agents exchanged.
    pub fn swapped(&self) -> Self {
        let mut s = self.clone();
        s.agents.swap(0, 1);
        s
    }
}
