//! Run configuration read from a TOML file.

use std::path::PathBuf;

use biogap::analytics::AnalysisOptions;
use biogap::model::train::TrainingConfig;
use biogap::plant::PidConfig;
use biogap::sim::{SimConfig, TeacherConfig};
use serde::{Deserialize, Serialize};

use crate::ingest::IngestConfig;

/// What drives the agents in `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// Both agents follow the network in `weights`.
    #[default]
    Model,
    /// Scripted burst-and-coast pair; needs no weights.
    Teacher,
}

/// Trajectory files analyzed together under one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Group {
    pub label: String,
    pub inputs: Vec<PathBuf>,
    /// Replace the files' own condition labels with `label` instead of
    /// requiring them to match.
    #[serde(default)]
    pub relabel: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides every section's seed when set.
    pub seed: Option<u64>,
    /// Network weights: read by the simulate verbs, written by `train`.
    pub weights: Option<PathBuf>,
    /// Trajectory files or directories of `.traj` files; source files for
    /// `ingest`.
    pub inputs: Vec<PathBuf>,
    /// Explicit condition groups for the analysis verbs.
    pub groups: Vec<Group>,
    /// Recorded neighbor for `simulate-biohybrid`; a second model agent
    /// when absent.
    pub replay: Option<PathBuf>,
    /// Which agent of the `replay` file to replay.
    pub replay_agent: usize,
    /// Independent runs with seeds `seed, seed + 1, ...`.
    pub runs: Option<usize>,
    pub generator: Generator,
    pub sim: SimConfig,
    pub plant: PidConfig,
    pub train: TrainingConfig,
    pub analysis: AnalysisOptions,
    pub teacher: TeacherConfig,
    pub ingest: IngestConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Push `seed` into every section.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.sim.seed = seed;
        self.train.seed = seed;
        self.analysis.seed = seed;
    }

    pub fn runs(&self) -> usize {
        self.runs.unwrap_or(1)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs() as u64).map(|k| self.sim.seed.wrapping_add(k)).collect()
    }
}
