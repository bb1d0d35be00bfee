//! The pairwise interaction model: state assembly, the recurrent network,
//! Gaussian acceleration sampling and the semi-implicit Euler step.

mod network;
pub mod train;
pub mod weights_io;

pub use network::{LayerKind, LayerShape, NetworkWeights, ARCHITECTURE, DEFAULT_HIDDEN, HEAD_WIDTH, INPUT_WIDTH};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, AgentState, GeometryError, TankGeometry, Vec2};

/// Model timestep in seconds.
pub const MODEL_DT_S: f64 = 0.12;
/// Number of consecutive pair rows fed to the network.
pub const WINDOW_LEN: usize = 5;
/// Width of one pair row: focal state, neighbor state, distance.
pub const ROW_WIDTH: usize = 11;
/// Lower bound added to every predicted standard deviation (cm/s²).
pub const SIGMA_FLOOR: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("layer {layer}: expected {expected} {what}, got {actual}")]
    DimensionMismatch {
        layer: usize,
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("layer {layer} produced a non-finite activation")]
    NonFinite { layer: usize },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `(u_x, u_y, v_x, v_y, r_w)` for one agent.
pub type IndividualState = [f64; 5];
/// Focal state, neighbor state and their distance.
pub type PairRow = [f64; ROW_WIDTH];

pub fn build_individual_state(
    position: Vec2,
    velocity: Vec2,
    geom: &TankGeometry,
) -> Result<IndividualState, GeometryError> {
    let rw = geometry::wall_distance(position, geom)?;
    Ok([position.x, position.y, velocity.x, velocity.y, rw])
}

impl From<&AgentState> for [f64; 5] {
    fn from(s: &AgentState) -> Self {
        [
            s.position_cm.x,
            s.position_cm.y,
            s.velocity_cm_s.x,
            s.velocity_cm_s.y,
            s.wall_distance_cm,
        ]
    }
}

pub fn build_pair_row(focal: &IndividualState, neighbor: &IndividualState) -> PairRow {
    let mut row = [0.0; ROW_WIDTH];
    row[..5].copy_from_slice(focal);
    row[5..10].copy_from_slice(neighbor);
    row[10] = geometry::pair_distance(Vec2::new(focal[0], focal[1]), Vec2::new(neighbor[0], neighbor[1]));
    row
}

/// Five consecutive pair rows, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStateSequence {
    pub rows: [PairRow; WINDOW_LEN],
    pub dt_s: f64,
}

impl PairStateSequence {
    pub fn new(rows: [PairRow; WINDOW_LEN]) -> Self {
        Self { rows, dt_s: MODEL_DT_S }
    }

    /// Window built from the last five states of the focal agent and its
    /// neighbor.
    pub fn from_histories(focal: &[AgentState], neighbor: &[AgentState]) -> Self {
        assert!(focal.len() >= WINDOW_LEN && neighbor.len() >= WINDOW_LEN);
        let f = &focal[focal.len() - WINDOW_LEN..];
        let n = &neighbor[neighbor.len() - WINDOW_LEN..];
        let mut rows = [[0.0; ROW_WIDTH]; WINDOW_LEN];
        for (k, row) in rows.iter_mut().enumerate() {
            *row = build_pair_row(&(&f[k]).into(), &(&n[k]).into());
        }
        Self::new(rows)
    }
}

/// Per-axis Gaussian over the next acceleration (cm/s²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelerationDistribution {
    pub mu_x: f64,
    pub sigma_x: f64,
    pub mu_y: f64,
    pub sigma_y: f64,
}

impl AccelerationDistribution {
    pub fn mean(&self) -> Vec2 {
        Vec2::new(self.mu_x, self.mu_y)
    }

    pub fn is_valid(&self) -> bool {
        self.sigma_x > 0.0
            && self.sigma_y > 0.0
            && [self.mu_x, self.sigma_x, self.mu_y, self.sigma_y]
                .iter()
                .all(|v| v.is_finite())
    }
}

/// Anything that maps a pair window to an acceleration distribution.
pub trait BehaviorModel: Sync {
    fn predict(&self, seq: &PairStateSequence) -> Result<AccelerationDistribution, ModelError>;
}

impl BehaviorModel for NetworkWeights {
    fn predict(&self, seq: &PairStateSequence) -> Result<AccelerationDistribution, ModelError> {
        self.forward(seq)
    }
}

/// Ignores its input and always returns the same distribution.
#[derive(Debug, Clone, Copy)]
pub struct ConstantModel(pub AccelerationDistribution);

impl BehaviorModel for ConstantModel {
    fn predict(&self, _: &PairStateSequence) -> Result<AccelerationDistribution, ModelError> {
        Ok(self.0)
    }
}

pub fn sample_acceleration<R: Rng + ?Sized>(dist: &AccelerationDistribution, rng: &mut R) -> Vec2 {
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    let w: f64 = rng.sample(rand_distr::StandardNormal);
    Vec2::new(dist.mu_x + dist.sigma_x * z, dist.mu_y + dist.sigma_y * w)
}

/// Draw from `N(mu, sigma)`; panics on a non-positive sigma.
pub fn sample_normal<R: Rng + ?Sized>(mu: f64, sigma: f64, rng: &mut R) -> f64 {
    Normal::new(mu, sigma).expect("sigma must be positive").sample(rng)
}

/// `v' = v + dt·a`, then `u' = u + dt·v'`.
///
/// The returned wall distance is `radius − |u'|` and may be negative: the
/// caller decides what to do with a step that leaves the tank.
pub fn integrate_step(state: &AgentState, a: Vec2, dt: f64, geom: &TankGeometry) -> AgentState {
    let v = state.velocity_cm_s + dt * a;
    let u = state.position_cm + dt * v;
    AgentState {
        position_cm: u,
        velocity_cm_s: v,
        wall_distance_cm: geom.radius_cm() - u.norm(),
    }
}

/// Acceleration implied by two consecutive velocities.
pub fn acceleration_from_velocities(v0: Vec2, v1: Vec2, dt: f64) -> Vec2 {
    (1.0 / dt) * (v1 - v0)
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Negative log-likelihood of `a` under the diagonal Gaussian.
pub fn nll_loss(dist: &AccelerationDistribution, a: Vec2) -> f64 {
    let axis = |x: f64, mu: f64, s: f64| {
        let z = (x - mu) / s;
        0.5 * z * z + s.ln() + HALF_LN_2PI
    };
    axis(a.x, dist.mu_x, dist.sigma_x) + axis(a.y, dist.mu_y, dist.sigma_y)
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn inverse_softplus(y: f64) -> f64 {
    // ln(e^y − 1), stable for large y
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
