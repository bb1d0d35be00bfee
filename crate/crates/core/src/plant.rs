//! Emulated differential-drive robot: a PID position controller with a
//! velocity feed-forward term, driving a saturated unicycle body at the
//! control rate.
//!
//! The model ticks every 0.12 s while control runs at 30 Hz, so each model
//! tick is served by a burst of 3 or 4 control ticks. [`control_ticks`]
//! gives the burst length for model tick `k` using integer arithmetic, which
//! keeps the two clocks phase-locked forever (18 control ticks per 5 model
//! ticks at the default rates).

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_deg, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Bound on the magnitude of the integral accumulator.
    pub integral_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidConfig {
    /// Error in cm, output in cm/s.
    pub linear: PidGains,
    /// Error in degrees, output in deg/s.
    pub angular: PidGains,
    pub feedforward_weight: f64,
    pub max_speed_cm_s: f64,
    pub max_accel_cm_s2: f64,
    pub max_turn_deg_s: f64,
    pub control_hz: u32,
    pub axle_length_cm: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self {
            linear: PidGains {
                kp: 15.0,
                ki: 1.0,
                kd: 0.0,
                integral_limit: 5.0,
            },
            angular: PidGains {
                kp: 15.0,
                ki: 0.0,
                kd: 0.05,
                integral_limit: 30.0,
            },
            feedforward_weight: 1.0,
            max_speed_cm_s: 30.0,
            max_accel_cm_s2: 300.0,
            max_turn_deg_s: 720.0,
            control_hz: 30,
            axle_length_cm: 4.5,
        }
    }
}

impl PidConfig {
    /// Deadbeat gains and effectively unlimited actuation. A plant with this
    /// configuration follows its goals almost exactly.
    pub fn ideal() -> Self {
        let hz = 30.0;
        Self {
            linear: PidGains {
                kp: hz,
                ki: 0.0,
                kd: 0.0,
                integral_limit: 0.0,
            },
            angular: PidGains {
                kp: 2.0 * hz,
                ki: 0.0,
                kd: 0.0,
                integral_limit: 0.0,
            },
            feedforward_weight: 1.0,
            max_speed_cm_s: 1e9,
            max_accel_cm_s2: 1e12,
            max_turn_deg_s: 1e12,
            control_hz: 30,
            axle_length_cm: 4.5,
        }
    }

    pub fn control_dt_s(&self) -> f64 {
        1.0 / self.control_hz as f64
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, g) in [("linear", &self.linear), ("angular", &self.angular)] {
            for (field, v) in [
                ("kp", g.kp),
                ("ki", g.ki),
                ("kd", g.kd),
                ("integral_limit", g.integral_limit),
            ] {
                if !(v.is_finite() && v >= 0.0) {
                    errs.push(format!("plant.{name}.{field} must be finite and >= 0, got {v}"));
                }
            }
        }
        if !(self.feedforward_weight.is_finite() && self.feedforward_weight >= 0.0) {
            errs.push(format!(
                "plant.feedforward_weight must be finite and >= 0, got {}",
                self.feedforward_weight
            ));
        }
        for (field, v) in [
            ("max_speed_cm_s", self.max_speed_cm_s),
            ("max_accel_cm_s2", self.max_accel_cm_s2),
            ("max_turn_deg_s", self.max_turn_deg_s),
            ("axle_length_cm", self.axle_length_cm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("plant.{field} must be finite and > 0, got {v}"));
            }
        }
        if self.control_hz == 0 {
            errs.push("plant.control_hz must be > 0".into());
        }
        errs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantPose {
    pub position: Vec2,
    pub heading_deg: f64,
    pub speed_cm_s: f64,
    pub angular_speed_deg_s: f64,
}

impl PlantPose {
    pub fn at_rest(position: Vec2, heading_deg: f64) -> Self {
        Self {
            position,
            heading_deg: wrap_deg(heading_deg),
            speed_cm_s: 0.0,
            angular_speed_deg_s: 0.0,
        }
    }

    pub fn velocity(&self) -> Vec2 {
        self.speed_cm_s * Vec2::from_angle_deg(self.heading_deg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    pub linear_integral: f64,
    pub angular_integral: f64,
    pub linear_prev: Option<f64>,
    pub angular_prev: Option<f64>,
}

/// Wheel surface speeds in cm/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelCommand {
    pub left_cm_s: f64,
    pub right_cm_s: f64,
}

impl WheelCommand {
    pub fn from_unicycle(v: f64, omega_deg_s: f64, axle_cm: f64) -> Self {
        let half = 0.5 * omega_deg_s.to_radians() * axle_cm;
        Self {
            left_cm_s: v - half,
            right_cm_s: v + half,
        }
    }

    /// Linear speed (cm/s) and turn rate (deg/s) of the body.
    pub fn to_unicycle(self, axle_cm: f64) -> (f64, f64) {
        (
            0.5 * (self.left_cm_s + self.right_cm_s),
            ((self.right_cm_s - self.left_cm_s) / axle_cm).to_degrees(),
        )
    }
}

fn pid_channel(g: &PidGains, e: f64, integral: &mut f64, prev: &mut Option<f64>, dt: f64) -> f64 {
    *integral = (*integral + e * dt).clamp(-g.integral_limit, g.integral_limit);
    let de = prev.map_or(0.0, |p| (e - p) / dt);
    *prev = Some(e);
    g.kp * e + g.ki * *integral + g.kd * de
}

/// One control update toward `goal`.
///
/// The feed-forward velocity is expected to carry the robot
/// `feedforward_v · dt` during this tick, so the linear error is measured
/// against the point the robot should occupy now, `goal - feedforward_v · dt`.
/// It is projected on the heading the body will have at mid-tick under the
/// angular command, and is negative when that point lies behind. The angular
/// error is the bearing to `goal` minus the heading.
pub fn pid_step(
    pose: &PlantPose,
    goal: Vec2,
    feedforward_v: Vec2,
    cfg: &PidConfig,
    state: &PidState,
) -> (WheelCommand, PidState) {
    let dt = cfg.control_dt_s();
    let mut st = *state;

    let to_goal = goal - pose.position;
    let e_ang = if to_goal.norm() > 1e-9 {
        wrap_deg(to_goal.angle_deg() - pose.heading_deg)
    } else if feedforward_v.norm() > 1e-9 {
        wrap_deg(feedforward_v.angle_deg() - pose.heading_deg)
    } else {
        0.0
    };
    let omega = pid_channel(&cfg.angular, e_ang, &mut st.angular_integral, &mut st.angular_prev, dt);

    let turn = omega.clamp(-cfg.max_turn_deg_s, cfg.max_turn_deg_s);
    let mid = Vec2::from_angle_deg(pose.heading_deg + 0.5 * turn * dt);
    let reference = goal - dt * feedforward_v;
    let e_lin = (reference - pose.position).dot(mid);
    let v = pid_channel(&cfg.linear, e_lin, &mut st.linear_integral, &mut st.linear_prev, dt)
        + cfg.feedforward_weight * feedforward_v.norm();
    (WheelCommand::from_unicycle(v, omega, cfg.axle_length_cm), st)
}

/// Advance the body by one control period.
///
/// Linear speed is clipped to the speed cap and then rate-limited by the
/// acceleration cap; turn rate is clipped to the turn cap. Position is
/// integrated along the mid-period heading.
pub fn plant_step(pose: &PlantPose, cmd: WheelCommand, cfg: &PidConfig) -> PlantPose {
    let dt = cfg.control_dt_s();
    let (v_cmd, w_cmd) = cmd.to_unicycle(cfg.axle_length_cm);
    let max_dv = cfg.max_accel_cm_s2 * dt;
    let v = v_cmd
        .clamp(-cfg.max_speed_cm_s, cfg.max_speed_cm_s)
        .clamp(pose.speed_cm_s - max_dv, pose.speed_cm_s + max_dv);
    let w = w_cmd.clamp(-cfg.max_turn_deg_s, cfg.max_turn_deg_s);
    let mid = pose.heading_deg + 0.5 * w * dt;
    PlantPose {
        position: pose.position + (v * dt) * Vec2::from_angle_deg(mid),
        heading_deg: wrap_deg(pose.heading_deg + w * dt),
        speed_cm_s: v,
        angular_speed_deg_s: w,
    }
}

/// Run `n_ticks` control periods toward a goal that should be reached at the
/// end of the burst.
///
/// Intermediate ticks aim at points on the feed-forward line leading to the
/// goal, so a robot already moving with the feed-forward velocity sees no
/// error.
pub fn track_goal(
    pose: &PlantPose,
    goal: Vec2,
    feedforward_v: Vec2,
    cfg: &PidConfig,
    state: &PidState,
    n_ticks: usize,
) -> (PlantPose, PidState) {
    let dt = cfg.control_dt_s();
    let mut p = *pose;
    let mut s = *state;
    for j in 0..n_ticks {
        let lead = (n_ticks - j - 1) as f64 * dt;
        let carrot = goal - lead * feedforward_v;
        let (cmd, next) = pid_step(&p, carrot, feedforward_v, cfg, &s);
        p = plant_step(&p, cmd, cfg);
        s = next;
    }
    (p, s)
}

/// Control ticks completed by the end of model tick `k` (counting from 0).
pub fn control_ticks_total(k: u64, dt_model_s: f64, control_hz: u32) -> u64 {
    let dt_us = (dt_model_s * 1e6).round() as u128;
    (k as u128 * dt_us * control_hz as u128 / 1_000_000) as u64
}

/// Burst length served for model tick `k`, i.e. the control ticks that fall
/// in `(k·dt, (k+1)·dt]`.
pub fn control_ticks(k: u64, dt_model_s: f64, control_hz: u32) -> usize {
    (control_ticks_total(k + 1, dt_model_s, control_hz) - control_ticks_total(k, dt_model_s, control_hz)) as usize
}
