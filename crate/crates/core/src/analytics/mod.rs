//! Validation statistics for pairs of agents.
//!
//! Six instantaneous observables are histogrammed on fixed grids and
//! compared with the Hellinger distance; three temporal correlations are
//! averaged over reference times, agents and experiments. Uncertainties come
//! from resampling whole experiments.

mod bootstrap;
mod correlation;
mod pdf;
mod report;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, KinematicFrame, Vec2};
use crate::trajectory::TrajectorySet;

pub use bootstrap::{bootstrap_se, draw_rng};
pub use correlation::{correlation, half_second_derivative, CorrelationCurve, CorrelationKind};
pub use pdf::{estimate_pdf, estimate_pdf_on, hellinger, BinSpec, Pdf, MIN_PDF_SAMPLES};
pub use report::{
    summarize, AnalysisOptions, BaselineRow, ConditionInput, ConditionReport, HellingerRow, ObservableReport,
    SummaryStat,
};

/// Minimum number of experiments for the split baseline.
pub const MIN_BASELINE_EXPERIMENTS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("not enough {what}: have {found}, need at least {needed}")]
    InsufficientData { what: String, found: usize, needed: usize },
    #[error("PDFs use different bin grids: {left:?} vs {right:?}")]
    GridMismatch { left: BinSpec, right: BinSpec },
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Speed,
    WallDistance,
    /// Absolute value of the wall angle.
    WallAngle,
    PairDistance,
    /// Absolute value of the heading difference.
    HeadingDifference,
    /// Signed.
    ViewingAngle,
}

impl Observable {
    pub const ALL: [Observable; 6] = [
        Observable::Speed,
        Observable::WallDistance,
        Observable::WallAngle,
        Observable::PairDistance,
        Observable::HeadingDifference,
        Observable::ViewingAngle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Observable::Speed => "V",
            Observable::WallDistance => "r_w",
            Observable::WallAngle => "|theta_w|",
            Observable::PairDistance => "d_ij",
            Observable::HeadingDifference => "|phi_ij|",
            Observable::ViewingAngle => "psi_ij",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Observable::Speed => "cm/s",
            Observable::WallDistance | Observable::PairDistance => "cm",
            _ => "deg",
        }
    }

    /// Canonical histogram grid.
    pub fn grid(self) -> BinSpec {
        match self {
            Observable::Speed => BinSpec::new(0.0, 40.0, 80),
            Observable::WallDistance => BinSpec::new(0.0, 25.0, 50),
            Observable::WallAngle | Observable::HeadingDifference => BinSpec::new(0.0, 180.0, 60),
            Observable::PairDistance => BinSpec::new(0.0, 50.0, 100),
            Observable::ViewingAngle => BinSpec::new(-180.0, 180.0, 72),
        }
    }

    /// Value of this observable in `frame`, `None` when undefined.
    pub fn value(self, frame: &KinematicFrame) -> Option<f64> {
        match self {
            Observable::Speed => Some(frame.speed_cm_s),
            Observable::WallDistance => Some(frame.wall_distance_cm),
            Observable::WallAngle => frame.wall_angle_deg.map(f64::abs),
            Observable::PairDistance => Some(frame.interindividual_distance_cm),
            Observable::HeadingDifference => frame.heading_difference_deg.map(f64::abs),
            Observable::ViewingAngle => frame.viewing_angle_deg,
        }
    }
}

/// Per-agent time series used by the correlation functions.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentStream {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub wall_angles: Vec<Option<f64>>,
}

impl AgentStream {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Frames for both focal perspectives of a trajectory set, agent 0 first.
pub fn extract_frames(ts: &TrajectorySet) -> Result<[Vec<KinematicFrame>; 2], AnalyticsError> {
    ts.validate()
        .map_err(|e| AnalyticsError::Input(format!("{}: {e}", ts.experiment_id)))?;
    let states: Vec<Vec<_>> = ts
        .agents
        .iter()
        .map(|a| a.samples.iter().map(|s| s.state(&ts.geom)).collect())
        .collect();
    let frames = |i: usize| -> Result<Vec<KinematicFrame>, AnalyticsError> {
        states[i]
            .iter()
            .zip(&states[1 - i])
            .zip(&ts.agents[i].samples)
            .map(|((f, n), s)| {
                geometry::frame_from_states(f, n, &ts.geom, s.t).map_err(|e| AnalyticsError::Input(e.to_string()))
            })
            .collect()
    };
    Ok([frames(0)?, frames(1)?])
}

/// Analysis-ready view of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub experiment_id: String,
    pub condition: String,
    pub dt_s: f64,
    /// Frames of both focal perspectives, pooled.
    pub frames: Vec<KinematicFrame>,
    pub streams: Vec<AgentStream>,
}

impl ExperimentData {
    pub fn from_set(ts: &TrajectorySet) -> Result<Self, AnalyticsError> {
        let [a, b] = extract_frames(ts)?;
        let streams = ts
            .agents
            .iter()
            .map(|agent| AgentStream {
                positions: agent.samples.iter().map(|s| s.position).collect(),
                velocities: agent.samples.iter().map(|s| s.velocity).collect(),
                wall_angles: agent
                    .samples
                    .iter()
                    .map(|s| geometry::wall_angle(s.position, s.velocity).ok())
                    .collect(),
            })
            .collect();
        Ok(Self {
            experiment_id: ts.experiment_id.clone(),
            condition: ts.condition.clone(),
            dt_s: ts.dt_s(),
            frames: a.into_iter().chain(b).collect(),
            streams,
        })
    }

    /// Defined values of `obs` across all frames.
    pub fn values(&self, obs: Observable) -> Vec<f64> {
        self.frames.iter().filter_map(|f| obs.value(f)).collect()
    }
}

fn pooled_values(experiments: &[&ExperimentData], obs: Observable) -> Vec<f64> {
    experiments.iter().flat_map(|e| e.values(obs)).collect()
}

/// PDFs of the six observables over the pooled frames of `experiments`.
pub fn observable_pdfs(experiments: &[&ExperimentData]) -> Result<Vec<Pdf>, AnalyticsError> {
    Observable::ALL
        .iter()
        .map(|&obs| estimate_pdf(&pooled_values(experiments, obs), obs))
        .collect()
}

/// Per-observable Hellinger distances and their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HellingerSet {
    pub values: Vec<(Observable, f64)>,
    pub mean: f64,
}

impl HellingerSet {
    pub fn between(f: &[Pdf], g: &[Pdf]) -> Result<Self, AnalyticsError> {
        let values = f
            .iter()
            .zip(g)
            .map(|(p, q)| Ok((p.observable.expect("canonical pdf"), hellinger(p, q)?)))
            .collect::<Result<Vec<_>, AnalyticsError>>()?;
        let mean = values.iter().map(|(_, h)| h).sum::<f64>() / values.len() as f64;
        Ok(Self { values, mean })
    }
}

/// Inherent-variability floor: repeatedly split the experiments into two
/// random halves and average the Hellinger distances between the halves.
/// With an odd count the second half gets the extra experiment.
pub fn split_baseline(
    experiments: &[ExperimentData],
    n_draws: usize,
    seed: u64,
) -> Result<HellingerSet, AnalyticsError> {
    if experiments.len() < MIN_BASELINE_EXPERIMENTS {
        return Err(AnalyticsError::InsufficientData {
            what: "experiments for the split baseline".into(),
            found: experiments.len(),
            needed: MIN_BASELINE_EXPERIMENTS,
        });
    }
    if n_draws == 0 {
        return Err(AnalyticsError::InsufficientData {
            what: "baseline draws".into(),
            found: 0,
            needed: 1,
        });
    }
    let draws: Vec<HellingerSet> = (0..n_draws as u64)
        .into_par_iter()
        .map(|d| {
            let mut idx: Vec<usize> = (0..experiments.len()).collect();
            idx.shuffle(&mut draw_rng(seed, d));
            let (left, right) = idx.split_at(experiments.len() / 2);
            let pick = |s: &[usize]| s.iter().map(|&i| &experiments[i]).collect::<Vec<_>>();
            HellingerSet::between(&observable_pdfs(&pick(left))?, &observable_pdfs(&pick(right))?)
        })
        .collect::<Result<_, _>>()?;
    let values = Observable::ALL
        .iter()
        .enumerate()
        .map(|(k, &obs)| (obs, draws.iter().map(|d| d.values[k].1).sum::<f64>() / n_draws as f64))
        .collect::<Vec<_>>();
    let mean = values.iter().map(|(_, h)| h).sum::<f64>() / values.len() as f64;
    Ok(HellingerSet { values, mean })
}
