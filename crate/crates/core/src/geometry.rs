//! Tank geometry and per-frame kinematic quantities.
//!
//! All lengths are in cm, speeds in cm/s, angles in degrees. Signed angles
//! are counterclockwise-positive and wrapped to `(-180, 180]`, so a
//! neighbor on the left of the focal heading has a positive viewing angle.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed when checking that a position lies inside the tank.
pub const POSITION_TOLERANCE_CM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing at `deg` degrees from the +x axis.
    pub fn from_angle_deg(deg: f64) -> Self {
        let r = deg.to_radians();
        Self::new(r.cos(), r.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Direction of the vector in degrees, in `(-180, 180]`.
    pub fn angle_deg(self) -> f64 {
        wrap_deg(self.y.atan2(self.x).to_degrees())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotate counterclockwise by `deg` degrees about the origin.
    pub fn rotated_deg(self, deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        Vec2::new(self * v.x, self * v.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("tank radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("position ({x}, {y}) lies {excess:.6} cm outside a tank of radius {radius}")]
    OutsideTank { x: f64, y: f64, radius: f64, excess: f64 },
    #[error("angle undefined: {0}")]
    UndefinedAngle(&'static str),
}

/// Circular tank centered on the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankGeometry {
    radius_cm: f64,
}

impl TankGeometry {
    pub const DEFAULT_RADIUS_CM: f64 = 25.0;

    pub fn new(radius_cm: f64) -> Result<Self, GeometryError> {
        if radius_cm > 0.0 && radius_cm.is_finite() {
            Ok(Self { radius_cm })
        } else {
            Err(GeometryError::InvalidRadius(radius_cm))
        }
    }

    pub fn radius_cm(&self) -> f64 {
        self.radius_cm
    }

    pub fn center(&self) -> Vec2 {
        Vec2::ZERO
    }
}

impl Default for TankGeometry {
    fn default() -> Self {
        Self {
            radius_cm: Self::DEFAULT_RADIUS_CM,
        }
    }
}

/// Wraps any angle in degrees to `(-180, 180]`.
pub fn wrap_deg(deg: f64) -> f64 {
    let a = deg.rem_euclid(360.0);
    if a > 180.0 {
        a - 360.0
    } else {
        a
    }
}

/// Distance from `u` to the tank wall.
///
/// Positions up to [`POSITION_TOLERANCE_CM`] beyond the wall are clamped to
/// zero; anything further out is rejected.
pub fn wall_distance(u: Vec2, geom: &TankGeometry) -> Result<f64, GeometryError> {
    let r = geom.radius_cm();
    let d = r - u.norm();
    if d >= 0.0 {
        Ok(d)
    } else if -d <= POSITION_TOLERANCE_CM {
        Ok(0.0)
    } else {
        Err(GeometryError::OutsideTank {
            x: u.x,
            y: u.y,
            radius: r,
            excess: -d,
        })
    }
}

/// Heading of `v` relative to the outward wall normal at `u`.
///
/// `|θ_w| < 90` means the agent is heading toward the wall.
pub fn wall_angle(u: Vec2, v: Vec2) -> Result<f64, GeometryError> {
    if v.norm_squared() == 0.0 {
        return Err(GeometryError::UndefinedAngle("zero velocity"));
    }
    if u.norm_squared() == 0.0 {
        return Err(GeometryError::UndefinedAngle("position at tank center"));
    }
    Ok(wrap_deg(v.angle_deg() - u.angle_deg()))
}

/// Signed heading of `v_j` minus heading of `v_i`.
pub fn heading_difference(v_i: Vec2, v_j: Vec2) -> Result<f64, GeometryError> {
    if v_i.norm_squared() == 0.0 || v_j.norm_squared() == 0.0 {
        return Err(GeometryError::UndefinedAngle("zero velocity"));
    }
    Ok(wrap_deg(v_j.angle_deg() - v_i.angle_deg()))
}

/// Angle at which the focal agent `i` perceives `j`, relative to its heading.
pub fn viewing_angle(u_i: Vec2, v_i: Vec2, u_j: Vec2) -> Result<f64, GeometryError> {
    if v_i.norm_squared() == 0.0 {
        return Err(GeometryError::UndefinedAngle("zero velocity"));
    }
    let rel = u_j - u_i;
    if rel.norm_squared() == 0.0 {
        return Err(GeometryError::UndefinedAngle("coincident positions"));
    }
    Ok(wrap_deg(rel.angle_deg() - v_i.angle_deg()))
}

pub fn pair_distance(u_i: Vec2, u_j: Vec2) -> f64 {
    (u_j - u_i).norm()
}

/// Position, velocity and wall distance of one agent at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position_cm: Vec2,
    pub velocity_cm_s: Vec2,
    pub wall_distance_cm: f64,
}

impl AgentState {
    pub fn new(position: Vec2, velocity: Vec2, geom: &TankGeometry) -> Result<Self, GeometryError> {
        Ok(Self {
            position_cm: position,
            velocity_cm_s: velocity,
            wall_distance_cm: wall_distance(position, geom)?,
        })
    }

    pub fn speed(&self) -> f64 {
        self.velocity_cm_s.norm()
    }
}

/// Kinematic quantities seen from the focal agent's perspective.
///
/// Angle fields are `None` when undefined (zero speed, agent at the tank
/// center, or coincident agents); such frames are skipped by the
/// statistics rather than imputed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicFrame {
    pub timestamp_s: f64,
    pub speed_cm_s: f64,
    pub wall_distance_cm: f64,
    pub wall_angle_deg: Option<f64>,
    pub interindividual_distance_cm: f64,
    pub heading_difference_deg: Option<f64>,
    pub viewing_angle_deg: Option<f64>,
}

pub fn frame_from_states(
    focal: &AgentState,
    neighbor: &AgentState,
    geom: &TankGeometry,
    t: f64,
) -> Result<KinematicFrame, GeometryError> {
    Ok(KinematicFrame {
        timestamp_s: t,
        speed_cm_s: focal.speed(),
        wall_distance_cm: wall_distance(focal.position_cm, geom)?,
        wall_angle_deg: wall_angle(focal.position_cm, focal.velocity_cm_s).ok(),
        interindividual_distance_cm: pair_distance(focal.position_cm, neighbor.position_cm),
        heading_difference_deg: heading_difference(focal.velocity_cm_s, neighbor.velocity_cm_s).ok(),
        viewing_angle_deg: viewing_angle(focal.position_cm, focal.velocity_cm_s, neighbor.position_cm).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    fn geom() -> TankGeometry {
        TankGeometry::default()
    }

    #[test]
    fn wall_distance_examples() {
        assert_eq!(wall_distance(Vec2::new(0.0, 0.0), &geom()).unwrap(), 25.0);
        assert_eq!(wall_distance(Vec2::new(20.0, 0.0), &geom()).unwrap(), 5.0);
        assert_eq!(wall_distance(Vec2::new(15.0, 20.0), &geom()).unwrap(), 0.0);
    }

    #[test]
    fn wall_distance_tolerance_and_error() {
        let just_out = Vec2::new(25.0 + 0.5 * POSITION_TOLERANCE_CM, 0.0);
        assert_eq!(wall_distance(just_out, &geom()).unwrap(), 0.0);
        match wall_distance(Vec2::new(0.0, 26.0), &geom()) {
            Err(GeometryError::OutsideTank { x, y, .. }) => {
                assert_eq!((x, y), (0.0, 26.0));
            }
            other => panic!("expected OutsideTank, got {other:?}"),
        }
    }

    #[test]
    fn invalid_radius() {
        assert!(TankGeometry::new(0.0).is_err());
        assert!(TankGeometry::new(-1.0).is_err());
        assert!(TankGeometry::new(f64::NAN).is_err());
    }

    #[test]
    fn wall_angle_examples() {
        let u = Vec2::new(20.0, 0.0);
        assert!((wall_angle(u, Vec2::new(1.0, 0.0)).unwrap()).abs() < EPS);
        assert!((wall_angle(u, Vec2::new(0.0, 1.0)).unwrap() - 90.0).abs() < EPS);
        assert!((wall_angle(u, Vec2::new(-1.0, 0.0)).unwrap() - 180.0).abs() < EPS);
        assert!(wall_angle(u, Vec2::ZERO).is_err());
        assert!(wall_angle(Vec2::ZERO, Vec2::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn heading_difference_examples() {
        let x = Vec2::new(1.0, 0.0);
        assert_eq!(heading_difference(x, x).unwrap(), 0.0);
        let d = heading_difference(Vec2::from_angle_deg(10.0), Vec2::from_angle_deg(350.0)).unwrap();
        assert!((d + 20.0).abs() < 1e-9);
        assert!((heading_difference(x, Vec2::new(-1.0, 0.0)).unwrap() - 180.0).abs() < EPS);
        assert!(heading_difference(x, Vec2::ZERO).is_err());
    }

    #[test]
    fn viewing_angle_examples() {
        let o = Vec2::ZERO;
        let vx = Vec2::new(1.0, 0.0);
        assert!(viewing_angle(o, vx, Vec2::new(5.0, 0.0)).unwrap().abs() < EPS);
        assert!((viewing_angle(o, vx, Vec2::new(-5.0, 0.0)).unwrap() - 180.0).abs() < EPS);
        assert!((viewing_angle(o, vx, Vec2::new(0.0, 5.0)).unwrap() - 90.0).abs() < EPS);
        assert!(viewing_angle(o, vx, o).is_err());
        assert!(viewing_angle(o, Vec2::ZERO, Vec2::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn pair_distance_examples() {
        assert_eq!(pair_distance(Vec2::ZERO, Vec2::new(3.0, 4.0)), 5.0);
        assert_eq!(pair_distance(Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0)), 0.0);
        assert_eq!(pair_distance(Vec2::new(-10.0, 0.0), Vec2::new(10.0, 0.0)), 20.0);
    }

    #[test]
    fn stationary_agents_have_undefined_angles() {
        let g = geom();
        let a = AgentState::new(Vec2::new(1.0, 2.0), Vec2::ZERO, &g).unwrap();
        let b = AgentState::new(Vec2::new(-3.0, 2.0), Vec2::ZERO, &g).unwrap();
        let f = frame_from_states(&a, &b, &g, 0.0).unwrap();
        assert_eq!(f.speed_cm_s, 0.0);
        assert!(f.wall_angle_deg.is_none());
        assert!(f.heading_difference_deg.is_none());
        assert!(f.viewing_angle_deg.is_none());
        assert_eq!(f.interindividual_distance_cm, 4.0);
    }

    #[test]
    fn wrap_edges() {
        assert_eq!(wrap_deg(180.0), 180.0);
        assert_eq!(wrap_deg(-180.0), 180.0);
        assert_eq!(wrap_deg(540.0), 180.0);
        assert_eq!(wrap_deg(-190.0), 170.0);
        assert_eq!(wrap_deg(0.0), 0.0);
    }

    fn in_tank() -> impl Strategy<Value = Vec2> {
        (0.0f64..24.9, -180.0f64..180.0).prop_map(|(r, a)| r * Vec2::from_angle_deg(a))
    }

    fn velocity() -> impl Strategy<Value = Vec2> {
        (0.01f64..40.0, -180.0f64..180.0).prop_map(|(s, a)| s * Vec2::from_angle_deg(a))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn swap_symmetry(ui in in_tank(), uj in in_tank(), vi in velocity(), vj in velocity()) {
            let g = geom();
            let a = AgentState::new(ui, vi, &g).unwrap();
            let b = AgentState::new(uj, vj, &g).unwrap();
            let fij = frame_from_states(&a, &b, &g, 0.0).unwrap();
            let fji = frame_from_states(&b, &a, &g, 0.0).unwrap();
            prop_assert_eq!(fij.interindividual_distance_cm, fji.interindividual_distance_cm);
            let (pij, pji) = (fij.heading_difference_deg.unwrap(), fji.heading_difference_deg.unwrap());
            // antisymmetric, except at exactly 180 where wrapping keeps the sign
            prop_assert!((wrap_deg(pij + pji)).abs() < 1e-9 || (pij.abs() - 180.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn wall_distance_identity(u in in_tank()) {
            let d = wall_distance(u, &geom()).unwrap();
            prop_assert!((d + u.norm() - 25.0).abs() < 1e-9);
            prop_assert!((0.0..=25.0).contains(&d));
        }

        #[test]
        fn angles_in_range_and_wrap_idempotent(x in -1e4f64..1e4) {
            let w = wrap_deg(x);
            prop_assert!(w > -180.0 && w <= 180.0);
            prop_assert_eq!(wrap_deg(w), w);
        }

        #[test]
        fn rotation_invariance(ui in in_tank(), uj in in_tank(), vi in velocity(), vj in velocity(), rot in -180.0f64..180.0) {
            prop_assume!(ui.norm() > 1e-3 && (uj - ui).norm() > 1e-3);
            let g = geom();
            let a = AgentState::new(ui, vi, &g).unwrap();
            let b = AgentState::new(uj, vj, &g).unwrap();
            let ar = AgentState::new(ui.rotated_deg(rot), vi.rotated_deg(rot), &g).unwrap();
            let br = AgentState::new(uj.rotated_deg(rot), vj.rotated_deg(rot), &g).unwrap();
            let f = frame_from_states(&a, &b, &g, 0.0).unwrap();
            let fr = frame_from_states(&ar, &br, &g, 0.0).unwrap();
            let close = |x: f64, y: f64| wrap_deg(x - y).abs() < 1e-7;
            prop_assert!(close(f.wall_angle_deg.unwrap(), fr.wall_angle_deg.unwrap()));
            prop_assert!(close(f.viewing_angle_deg.unwrap(), fr.viewing_angle_deg.unwrap()));
            prop_assert!(close(f.heading_difference_deg.unwrap(), fr.heading_difference_deg.unwrap()));
            prop_assert!((f.interindividual_distance_cm - fr.interindividual_distance_cm).abs() < 1e-9);
        }
    }
}
