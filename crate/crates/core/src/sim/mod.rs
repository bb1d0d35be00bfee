//! Closed-loop two-agent simulation in the circular tank.
//!
//! Both agents advance synchronously: every state at tick `t + 1` is
//! computed from the histories up to `t` and the pair is committed together.
//! Each agent draws from its own random stream derived from the run seed,
//! so evaluation order never affects the result.
//!
//! A sampled step that would bring an agent closer than `margin_cm` to the
//! wall is redrawn, up to `max_resamples` times. If every draw fails the
//! position is projected radially onto the margin circle and the outward
//! radial velocity is removed.

mod teacher;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{AgentState, TankGeometry, Vec2};
use crate::model::{
    integrate_step, sample_acceleration, BehaviorModel, ModelError, PairStateSequence, MODEL_DT_S, WINDOW_LEN,
};
use crate::plant::{control_ticks, track_goal, PidConfig, PidState, PlantPose};
use crate::trajectory::{SourceTag, Trajectory, TrajectorySample, TrajectorySet, DLI_SP};

pub use teacher::{generate_teacher, TeacherConfig};

/// Agents farther than this from the wall count toward the far-field
/// rejection rate.
pub const FAR_FROM_WALL_CM: f64 = 10.0;
/// Goal-tracking error above which a plant counts as lagging.
pub const DEADLOCK_ERROR_CM: f64 = 2.0;
/// Consecutive lagging model ticks before a deadlock warning.
pub const DEADLOCK_TICKS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryPolicy {
    pub max_resamples: u32,
    pub margin_cm: f64,
}

impl Default for BoundaryPolicy {
    fn default() -> Self {
        Self {
            max_resamples: 100,
            margin_cm: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentMode {
    Model,
    Replay,
    Plant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub geom: TankGeometry,
    pub dt_model_s: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub boundary: BoundaryPolicy,
    /// Simulated time discarded after the warm start.
    pub transient_s: f64,
    pub agents: [AgentMode; 2],
    pub condition: String,
    pub experiment_id: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            geom: TankGeometry::default(),
            dt_model_s: MODEL_DT_S,
            duration_s: 60.0,
            seed: 0,
            boundary: BoundaryPolicy::default(),
            transient_s: 2.0,
            agents: [AgentMode::Model; 2],
            condition: DLI_SP.into(),
            experiment_id: "sim".into(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let r = self.geom.radius_cm();
        if !(r.is_finite() && r > 0.0) {
            errs.push(format!("sim.geom.radius_cm must be > 0, got {r}"));
        }
        if !(self.dt_model_s.is_finite() && self.dt_model_s > 0.0) {
            errs.push(format!("sim.dt_model_s must be > 0, got {}", self.dt_model_s));
        } else if !(self.duration_s.is_finite() && self.duration_s > WINDOW_LEN as f64 * self.dt_model_s) {
            errs.push(format!(
                "sim.duration_s must exceed {} s (five model steps), got {}",
                WINDOW_LEN as f64 * self.dt_model_s,
                self.duration_s
            ));
        }
        if self.boundary.max_resamples < 1 {
            errs.push("sim.boundary.max_resamples must be >= 1".into());
        }
        let m = self.boundary.margin_cm;
        if !(m.is_finite() && m > 0.0 && m < r) {
            errs.push(format!("sim.boundary.margin_cm must lie in (0, radius), got {m}"));
        }
        if !(self.transient_s.is_finite() && self.transient_s >= 0.0) {
            errs.push(format!("sim.transient_s must be >= 0, got {}", self.transient_s));
        }
        errs
    }

    /// Samples per agent in the emitted trajectories.
    pub fn output_steps(&self) -> usize {
        (self.duration_s / self.dt_model_s).round() as usize
    }

    /// Leading simulated samples discarded before output.
    pub fn transient_steps(&self) -> usize {
        (self.transient_s / self.dt_model_s).round() as usize
    }

    fn check(&self) -> Result<(), SimError> {
        let errs = self.validate();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(SimError::Config(errs))
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("cannot replay trajectory: {0}")]
    Replay(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    /// Every draw left the tank; `r_w_cm` is the last rejected wall distance.
    BoundaryProjection { step: usize, agent: u32, r_w_cm: f64 },
    /// The plant body was pushed back inside the margin circle.
    PlantClamped { step: usize, agent: u32, r_w_cm: f64 },
    PlantDeadlock {
        step: usize,
        agent: u32,
        consecutive_ticks: usize,
        error_cm: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: usize,
    pub draws: u64,
    pub rejected_draws: u64,
    pub projections: u64,
    pub far_draws: u64,
    pub far_rejected_draws: u64,
    pub plant_ticks: u64,
    pub plant_rms_error_cm: Option<f64>,
    pub plant_deadlocks: u64,
}

impl RunStats {
    /// Fraction of draws rejected while the agent was far from the wall.
    pub fn far_rejection_rate(&self) -> Option<f64> {
        (self.far_draws > 0).then(|| self.far_rejected_draws as f64 / self.far_draws as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub set: TrajectorySet,
    pub events: Vec<SimEvent>,
    pub stats: RunStats,
}

impl SimOutput {
    /// Events as JSON lines, followed by a `summary` line with the stats.
    pub fn write_event_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        let mut summary = serde_json::to_value(&self.stats)?;
        summary["event"] = "summary".into();
        summary["experiment_id"] = self.set.experiment_id.clone().into();
        serde_json::to_writer(&mut out, &summary)?;
        out.write_all(b"\n")
    }
}

/// Result of one model step for one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: AgentState,
    pub rejected: u32,
    /// Wall distance of the last rejected draw when the step was projected.
    pub projected_from: Option<f64>,
}

fn agent_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn project_inside(s: &AgentState, geom: &TankGeometry, margin: f64) -> AgentState {
    let r = s.position_cm.norm();
    let n = if r > 0.0 {
        (1.0 / r) * s.position_cm
    } else {
        Vec2::new(1.0, 0.0)
    };
    let outward = s.velocity_cm_s.dot(n).max(0.0);
    AgentState {
        position_cm: (geom.radius_cm() - margin) * n,
        velocity_cm_s: s.velocity_cm_s - outward * n,
        wall_distance_cm: margin,
    }
}

/// Forward, sample and integrate one agent, applying the boundary policy.
pub fn step_agent<M, R>(
    model: &M,
    own: &[AgentState],
    neighbor: &[AgentState],
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<StepOutcome, ModelError>
where
    M: BehaviorModel + ?Sized,
    R: Rng + ?Sized,
{
    let seq = PairStateSequence::from_histories(own, neighbor);
    let dist = model.predict(&seq)?;
    if !dist.is_valid() {
        return Err(ModelError::NonFinite { layer: 0 });
    }
    let cur = own[own.len() - 1];
    let margin = cfg.boundary.margin_cm;
    let mut rejected = 0;
    loop {
        let a = sample_acceleration(&dist, rng);
        let next = integrate_step(&cur, a, cfg.dt_model_s, &cfg.geom);
        if next.wall_distance_cm >= margin {
            return Ok(StepOutcome {
                state: next,
                rejected,
                projected_from: None,
            });
        }
        if rejected == cfg.boundary.max_resamples {
            return Ok(StepOutcome {
                state: project_inside(&next, &cfg.geom, margin),
                rejected: rejected + 1,
                projected_from: Some(next.wall_distance_cm),
            });
        }
        rejected += 1;
    }
}

/// Five ballistic frames for one agent, centered on a random position with
/// wall distance in `[2, 10]` cm and a tangential heading.
fn warm_start_agent<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Vec<AgentState> {
    let big_r = cfg.geom.radius_cm();
    let r_out = if big_r >= 4.0 { big_r - 2.0 } else { 0.5 * big_r };
    let r_in = (big_r - 10.0).max(0.0).min(r_out);
    let r = rng.random_range(r_in * r_in..=r_out * r_out).sqrt();
    let alpha = rng.random_range(-180.0..180.0);
    let turn = if rng.random_bool(0.5) { 90.0 } else { -90.0 };
    let mut speed = rng.random_range(5.0..=15.0);
    let center = r * Vec2::from_angle_deg(alpha);
    let dir = Vec2::from_angle_deg(alpha + turn);
    loop {
        let v = speed * dir;
        let frames: Vec<AgentState> = (0..WINDOW_LEN)
            .map(|k| {
                let u = center + ((k as f64 - 2.0) * cfg.dt_model_s) * v;
                AgentState {
                    position_cm: u,
                    velocity_cm_s: v,
                    wall_distance_cm: big_r - u.norm(),
                }
            })
            .collect();
        // only tanks too small for the nominal speeds ever loop
        if frames.iter().all(|s| s.wall_distance_cm >= cfg.boundary.margin_cm) || speed < 1e-9 {
            return frames;
        }
        speed *= 0.5;
    }
}

/// Initial five-frame histories for both agents.
pub fn warm_start<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> [Vec<AgentState>; 2] {
    let a = warm_start_agent(cfg, rng);
    let b = warm_start_agent(cfg, rng);
    [a, b]
}

/// Where the neighbor of a plant-driven agent comes from.
#[derive(Clone, Copy)]
pub enum NeighborSource<'a> {
    Model(&'a dyn BehaviorModel),
    Replay(&'a Trajectory),
}

enum Driver<'a> {
    Model(&'a dyn BehaviorModel),
    Replay(&'a Trajectory),
    Plant(&'a dyn BehaviorModel, &'a PidConfig),
}

struct PlantRun {
    pose: PlantPose,
    pid: PidState,
    err_sq: f64,
    ticks: u64,
    streak: usize,
    warned: bool,
}

fn check_replay(cfg: &SimConfig, rec: &Trajectory, needed: usize) -> Result<(), SimError> {
    if (rec.dt_s - cfg.dt_model_s).abs() > 1e-9 {
        return Err(SimError::Replay(format!(
            "agent {} has dt {} s, the simulation runs at {} s",
            rec.agent_id, rec.dt_s, cfg.dt_model_s
        )));
    }
    if rec.len() < needed {
        return Err(SimError::Replay(format!(
            "agent {} has {} samples, {} needed for {} s plus the {} s transient",
            rec.agent_id,
            rec.len(),
            needed,
            cfg.duration_s,
            cfg.transient_s
        )));
    }
    rec.validate(&cfg.geom).map_err(|e| SimError::Replay(e.to_string()))
}

fn run(cfg: &SimConfig, drivers: [Driver<'_>; 2]) -> Result<SimOutput, SimError> {
    cfg.check()?;
    let n_out = cfg.output_steps();
    let trim = cfg.transient_steps();
    let total = (trim + n_out).max(WINDOW_LEN);
    let geom = cfg.geom;
    let margin = cfg.boundary.margin_cm;

    let mut time_base: Option<&Trajectory> = None;
    for d in &drivers {
        if let Driver::Replay(rec) = d {
            check_replay(cfg, rec, total)?;
            time_base.get_or_insert(rec);
        }
    }

    let mut init_rng = agent_rng(cfg.seed, 0);
    let warm = warm_start(cfg, &mut init_rng);
    let mut hist: [Vec<AgentState>; 2] = [Vec::with_capacity(total), Vec::with_capacity(total)];
    let mut plants: [Option<PlantRun>; 2] = [None, None];
    for i in 0..2 {
        hist[i] = match &drivers[i] {
            Driver::Replay(rec) => rec.samples[..WINDOW_LEN].iter().map(|s| s.state(&geom)).collect(),
            _ => warm[i].clone(),
        };
        if let Driver::Plant(..) = drivers[i] {
            let last = hist[i][WINDOW_LEN - 1];
            let v = last.velocity_cm_s;
            plants[i] = Some(PlantRun {
                pose: PlantPose {
                    position: last.position_cm,
                    heading_deg: if v.norm() > 0.0 { v.angle_deg() } else { 0.0 },
                    speed_cm_s: v.norm(),
                    angular_speed_deg_s: 0.0,
                },
                pid: PidState::default(),
                err_sq: 0.0,
                ticks: 0,
                streak: 0,
                warned: false,
            });
        }
    }
    let mut rngs = [agent_rng(cfg.seed, 1), agent_rng(cfg.seed, 2)];
    let mut events = Vec::new();
    let mut stats = RunStats::default();

    for k in WINDOW_LEN..total {
        let mut next = [hist[0][k - 1]; 2];
        for i in 0..2 {
            let (own, nb) = (&hist[i], &hist[1 - i]);
            let agent = i as u32;
            let model = match &drivers[i] {
                Driver::Replay(rec) => {
                    next[i] = rec.samples[k].state(&geom);
                    continue;
                }
                Driver::Model(m) | Driver::Plant(m, _) => *m,
            };
            let far = own[k - 1].wall_distance_cm > FAR_FROM_WALL_CM;
            let out = step_agent(model, own, nb, cfg, &mut rngs[i])?;
            let draws = out.rejected as u64 + u64::from(out.projected_from.is_none());
            stats.draws += draws;
            stats.rejected_draws += out.rejected as u64;
            if far {
                stats.far_draws += draws;
                stats.far_rejected_draws += out.rejected as u64;
            }
            if let Some(r_w) = out.projected_from {
                stats.projections += 1;
                events.push(SimEvent::BoundaryProjection {
                    step: k,
                    agent,
                    r_w_cm: r_w,
                });
            }
            next[i] = match (&drivers[i], plants[i].as_mut()) {
                (Driver::Plant(_, pid_cfg), Some(p)) => {
                    let goal = out.state;
                    let n = control_ticks((k - WINDOW_LEN) as u64, cfg.dt_model_s, pid_cfg.control_hz);
                    let (pose, pid) = track_goal(&p.pose, goal.position_cm, goal.velocity_cm_s, pid_cfg, &p.pid, n);
                    p.pose = pose;
                    p.pid = pid;
                    let mut realized = AgentState {
                        position_cm: pose.position,
                        velocity_cm_s: Vec2::ZERO,
                        wall_distance_cm: geom.radius_cm() - pose.position.norm(),
                    };
                    if realized.wall_distance_cm < margin {
                        events.push(SimEvent::PlantClamped {
                            step: k,
                            agent,
                            r_w_cm: realized.wall_distance_cm,
                        });
                        realized = project_inside(&realized, &geom, margin);
                        p.pose.position = realized.position_cm;
                    }
                    // velocity as a tracker would measure it over the model step
                    realized.velocity_cm_s = (1.0 / cfg.dt_model_s) * (realized.position_cm - own[k - 1].position_cm);
                    let err = (realized.position_cm - goal.position_cm).norm();
                    p.err_sq += err * err;
                    p.ticks += 1;
                    if err > DEADLOCK_ERROR_CM {
                        p.streak += 1;
                        if p.streak > DEADLOCK_TICKS && !p.warned {
                            p.warned = true;
                            stats.plant_deadlocks += 1;
                            events.push(SimEvent::PlantDeadlock {
                                step: k,
                                agent,
                                consecutive_ticks: p.streak,
                                error_cm: err,
                            });
                        }
                    } else {
                        p.streak = 0;
                        p.warned = false;
                    }
                    realized
                }
                _ => out.state,
            };
        }
        hist[0].push(next[0]);
        hist[1].push(next[1]);
        stats.steps += 1;
    }

    let (ticks, err_sq) = plants
        .iter()
        .flatten()
        .fold((0, 0.0), |(t, e), p| (t + p.ticks, e + p.err_sq));
    if plants.iter().any(Option::is_some) {
        stats.plant_ticks = ticks;
        stats.plant_rms_error_cm = (ticks > 0).then(|| (err_sq / ticks as f64).sqrt());
    }

    let start = total - n_out;
    let time_of = |idx: usize, out: usize| match time_base {
        Some(rec) => rec.samples[idx].t,
        None => out as f64 * cfg.dt_model_s,
    };
    let agents: Vec<Trajectory> = (0..2)
        .map(|i| {
            let (source, samples) = match &drivers[i] {
                Driver::Replay(rec) => (SourceTag::Replayed, rec.samples[start..total].to_vec()),
                d => (
                    if matches!(d, Driver::Plant(..)) {
                        SourceTag::Plant
                    } else {
                        SourceTag::Simulated
                    },
                    hist[i][start..total]
                        .iter()
                        .enumerate()
                        .map(|(out, s)| TrajectorySample {
                            t: time_of(start + out, out),
                            position: s.position_cm,
                            velocity: s.velocity_cm_s,
                        })
                        .collect(),
                ),
            };
            Trajectory {
                agent_id: i as u32,
                dt_s: cfg.dt_model_s,
                source,
                samples,
            }
        })
        .collect();
    let [a, b]: [Trajectory; 2] = agents.try_into().expect("two agents");
    Ok(SimOutput {
        set: TrajectorySet {
            agents: [a, b],
            condition: cfg.condition.clone(),
            experiment_id: cfg.experiment_id.clone(),
            geom,
        },
        events,
        stats,
    })
}

/// Two model-driven agents.
pub fn simulate_pair(
    cfg: &SimConfig,
    model_a: &dyn BehaviorModel,
    model_b: &dyn BehaviorModel,
) -> Result<SimOutput, SimError> {
    run(cfg, [Driver::Model(model_a), Driver::Model(model_b)])
}

/// A model-driven agent 0 reacting to a recorded agent 1.
///
/// Recorded samples from index `transient_steps` onward are copied verbatim
/// into agent 1 of the output, and their timestamps become the output time
/// base.
pub fn simulate_with_replay(
    cfg: &SimConfig,
    model: &dyn BehaviorModel,
    recorded: &Trajectory,
) -> Result<SimOutput, SimError> {
    run(cfg, [Driver::Model(model), Driver::Replay(recorded)])
}

/// Agent 0 is driven by the model through the emulated robot plant: each
/// model step becomes a goal position and feed-forward velocity, the plant
/// tracks it for one control burst, and the realized position is what the
/// model sees next. The realized velocity is the displacement over the model
/// step divided by its duration.
pub fn simulate_biohybrid(
    cfg: &SimConfig,
    model: &dyn BehaviorModel,
    neighbor: NeighborSource<'_>,
    plant: &PidConfig,
) -> Result<SimOutput, SimError> {
    let errs = plant.validate();
    if !errs.is_empty() {
        return Err(SimError::Config(errs));
    }
    let nb = match neighbor {
        NeighborSource::Model(m) => Driver::Model(m),
        NeighborSource::Replay(t) => Driver::Replay(t),
    };
    run(cfg, [Driver::Plant(model, plant), nb])
}

/// Independent runs of `template`, one per seed, executed in parallel.
/// Each run's experiment id is the template id suffixed with its seed.
pub fn run_batch<F>(template: &SimConfig, seeds: &[u64], run: F) -> Vec<Result<SimOutput, SimError>>
where
    F: Fn(&SimConfig) -> Result<SimOutput, SimError> + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = template.clone();
            cfg.seed = seed;
            cfg.experiment_id = format!("{}-{seed}", template.experiment_id);
            run(&cfg)
        })
        .collect()
}
