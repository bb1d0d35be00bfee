//! Scripted burst-and-coast pair used as synthetic "fish" data.
//!
//! Every `period_steps` model ticks an agent kicks: it picks a new heading
//! from wall avoidance, alignment, attraction and noise terms, and a new
//! speed. In between it glides straight with exponential speed decay. A kick
//! whose glide would come within the boundary margin of the wall is redrawn,
//! then replaced by progressively more inward headings.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SimConfig, SimError};
use crate::geometry::{self, wrap_deg, Vec2};
use crate::model::sample_normal;
use crate::trajectory::{SourceTag, Trajectory, TrajectorySample, TrajectorySet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub period_steps: usize,
    pub kick_speed_mean: f64,
    pub kick_speed_sd: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    /// Fractional speed loss per second while gliding.
    pub glide_decay_per_s: f64,
    /// Per-axis SD of the random acceleration added while gliding (cm/s²).
    pub glide_noise_cm_s2: f64,
    pub wall_gain_deg: f64,
    pub wall_length_cm: f64,
    pub align_gain_deg: f64,
    pub attraction_gain_deg: f64,
    pub attraction_distance_cm: f64,
    pub attraction_length_cm: f64,
    pub noise_deg: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            period_steps: 5,
            kick_speed_mean: 14.0,
            kick_speed_sd: 3.0,
            min_speed: 3.0,
            max_speed: 30.0,
            glide_decay_per_s: 0.8,
            glide_noise_cm_s2: 3.0,
            wall_gain_deg: 60.0,
            wall_length_cm: 2.0,
            align_gain_deg: 25.0,
            attraction_gain_deg: 6.0,
            attraction_distance_cm: 4.0,
            attraction_length_cm: 10.0,
            noise_deg: 15.0,
        }
    }
}

#[derive(Clone, Copy)]
struct Body {
    u: Vec2,
    v: Vec2,
}

impl TeacherConfig {
    fn glide_factor(&self, dt: f64) -> f64 {
        (1.0 - self.glide_decay_per_s * dt).max(0.0)
    }

    fn glide_clear(&self, u: Vec2, v: Vec2, dt: f64, limit: f64) -> bool {
        let g = self.glide_factor(dt);
        let (mut u, mut v) = (u + dt * v, v);
        for _ in 0..self.period_steps {
            if u.norm() > limit {
                return false;
            }
            v = g * v;
            u += dt * v;
        }
        true
    }

    /// Decayed velocity plus a small random acceleration. A perturbed glide
    /// that would leave its clearance falls back to the plain decay, which
    /// the preceding kick already checked.
    fn glide<R: Rng>(&self, me: Body, g: f64, cfg: &SimConfig, rng: &mut R) -> Vec2 {
        let v = g * me.v;
        if self.glide_noise_cm_s2 <= 0.0 {
            return v;
        }
        let dt = cfg.dt_model_s;
        let a = Vec2::new(
            sample_normal(0.0, self.glide_noise_cm_s2, rng),
            sample_normal(0.0, self.glide_noise_cm_s2, rng),
        );
        let noisy = v + dt * a;
        let limit = cfg.geom.radius_cm() - cfg.boundary.margin_cm;
        if self.glide_clear(me.u, noisy, dt, limit) {
            noisy
        } else {
            v
        }
    }

    fn kick<R: Rng>(&self, me: Body, other: Body, cfg: &SimConfig, rng: &mut R) -> Vec2 {
        let dt = cfg.dt_model_s;
        let limit = cfg.geom.radius_cm() - cfg.boundary.margin_cm;
        let heading = if me.v.norm() > 0.0 {
            me.v.angle_deg()
        } else {
            rng.random_range(-180.0..180.0)
        };
        let rw = cfg.geom.radius_cm() - me.u.norm();
        let mut turn = 0.0;
        if let Ok(tw) = geometry::wall_angle(me.u, me.v) {
            let t = tw.to_radians();
            turn += self.wall_gain_deg * t.sin() * (1.0 + 0.7 * t.cos()) * (-rw / self.wall_length_cm).exp();
        }
        if let Ok(phi) = geometry::heading_difference(me.v, other.v) {
            turn += self.align_gain_deg * phi.to_radians().sin();
        }
        if let Ok(psi) = geometry::viewing_angle(me.u, me.v, other.u) {
            let d = geometry::pair_distance(me.u, other.u);
            turn += self.attraction_gain_deg * (d - self.attraction_distance_cm)
                / (1.0 + d / self.attraction_length_cm)
                * psi.to_radians().sin();
        }
        let speed = sample_normal(self.kick_speed_mean, self.kick_speed_sd, rng).clamp(self.min_speed, self.max_speed);
        for _ in 0..100 {
            let h = heading + turn + self.noise_deg * sample_normal(0.0, 1.0, rng);
            let v = speed * Vec2::from_angle_deg(h);
            if self.glide_clear(me.u, v, dt, limit) {
                return v;
            }
        }
        // turn progressively inward relative to the outward normal
        let outward = if me.u.norm() > 0.0 { me.u.angle_deg() } else { heading };
        let side = if wrap_deg(heading - outward) >= 0.0 { 1.0 } else { -1.0 };
        for step in 0..=9 {
            let tw = 90.0 + 10.0 * step as f64;
            let v = speed * Vec2::from_angle_deg(outward + side * tw);
            if self.glide_clear(me.u, v, dt, limit) {
                return v;
            }
        }
        let inward = Vec2::from_angle_deg(outward + 180.0);
        let mut s = speed;
        while s > 1e-6 && !self.glide_clear(me.u, s * inward, dt, limit) {
            s *= 0.5;
        }
        s * inward
    }
}

/// Generate one teacher experiment with the duration, transient, geometry,
/// labels and seed of `cfg`.
pub fn generate_teacher(cfg: &SimConfig, teacher: &TeacherConfig) -> Result<TrajectorySet, SimError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(SimError::Config(errs));
    }
    if teacher.period_steps == 0
        || !(teacher.kick_speed_sd > 0.0)
        || teacher.min_speed > teacher.max_speed
        || !(teacher.glide_noise_cm_s2 >= 0.0)
    {
        return Err(SimError::Config(vec![
            "teacher: period_steps must be >= 1, kick_speed_sd > 0, min_speed <= max_speed and glide_noise_cm_s2 >= 0"
                .into(),
        ]));
    }
    let dt = cfg.dt_model_s;
    let mut init = super::agent_rng(cfg.seed, 0);
    let warm = super::warm_start(cfg, &mut init);
    let mut bodies = [0, 1].map(|i| Body {
        u: warm[i][2].position_cm,
        v: warm[i][2].velocity_cm_s,
    });
    let phase = [0, 1].map(|_| init.random_range(0..teacher.period_steps));
    let mut rngs = [1, 2].map(|s| super::agent_rng(cfg.seed, s));
    let g = teacher.glide_factor(dt);
    let n_out = cfg.output_steps();
    let start = cfg.transient_steps();
    let mut out: [Vec<TrajectorySample>; 2] = [Vec::with_capacity(n_out), Vec::with_capacity(n_out)];
    for k in 0..start + n_out {
        let prev = bodies;
        for i in 0..2 {
            let v = if (k + phase[i]) % teacher.period_steps == 0 {
                teacher.kick(prev[i], prev[1 - i], cfg, &mut rngs[i])
            } else {
                teacher.glide(prev[i], g, cfg, &mut rngs[i])
            };
            bodies[i] = Body {
                u: prev[i].u + dt * v,
                v,
            };
        }
        if k >= start {
            for i in 0..2 {
                out[i].push(TrajectorySample {
                    t: (k - start) as f64 * dt,
                    position: bodies[i].u,
                    velocity: bodies[i].v,
                });
            }
        }
    }
    let [a, b] = out;
    Ok(TrajectorySet {
        agents: [
            Trajectory {
                agent_id: 0,
                dt_s: dt,
                source: SourceTag::Simulated,
                samples: a,
            },
            Trajectory {
                agent_id: 1,
                dt_s: dt,
                source: SourceTag::Simulated,
                samples: b,
            },
        ],
        condition: cfg.condition.clone(),
        experiment_id: cfg.experiment_id.clone(),
        geom: cfg.geom,
    })
}
