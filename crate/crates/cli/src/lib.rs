//! Command-line front end for `biogap`.
//!
//! Every verb first gathers and validates all of its inputs, collecting
//! every problem it finds, then computes its outputs in memory and only then
//! writes them, each through a temporary file that is renamed into place.
//! A failed command therefore leaves no partial output behind.

pub mod config;
pub mod ingest;

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use biogap::analytics::{summarize, ConditionInput, ExperimentData, ObservableReport};
use biogap::io::{read_trajectory_set, trajectory_set_to_string};
use biogap::model::train::{train, windows_from_set, TrainError};
use biogap::model::weights_io::{describe, load_weights, to_bytes};
use biogap::model::NetworkWeights;
use biogap::sim::{
    generate_teacher, run_batch, simulate_biohybrid, simulate_pair, NeighborSource, RunStats, SimError, SimOutput,
};
use biogap::trajectory::{TrajectorySet, DLI_BP, DLI_SP};
use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{Generator, Group, RunConfig};
use ingest::{ingest_text, IngestConfig};

pub const TRAJECTORY_EXT: &str = "traj";
pub const DEFAULT_WEIGHTS: &str = "weights.pairnet";

#[derive(Debug, Parser)]
#[command(
    name = "biogap",
    version,
    about = "Simulate, train and compare two-agent tank trajectories"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate model-model pairs (or teacher pairs).
    Simulate {
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Drive agent 0 through the emulated robot plant.
    SimulateBiohybrid {
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Recorded neighbor to replay instead of a second model agent.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Train a network on trajectory files.
    Train { inputs: Vec<PathBuf> },
    /// Per-condition statistics, PDFs and correlations.
    Analyze { inputs: Vec<PathBuf> },
    /// Like analyze, plus Hellinger distances between conditions.
    Compare { inputs: Vec<PathBuf> },
    /// Split-half variability baseline per condition.
    Baseline { inputs: Vec<PathBuf> },
    /// Convert external tracking files to the canonical format.
    Ingest {
        inputs: Vec<PathBuf>,
        /// Inputs are canonical trajectory files; keep their labels.
        #[arg(long)]
        canonical: bool,
    },
    /// Describe a weights file.
    WeightsInfo { path: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

/// What a successful command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub stdout: String,
}

type Planned = Vec<(PathBuf, Vec<u8>)>;

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    verbose: bool,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn check(errs: Vec<String>) -> Result<(), CliError> {
    if errs.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(errs))
    }
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Validation(vec![format!("cannot read config {}: {e}", p.display())]))?;
            RunConfig::from_toml(&text)
                .map_err(|e| CliError::Validation(vec![format!("config {}: {e}", p.display())]))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed.or(cfg.seed) {
        cfg.apply_seed(seed);
    }
    let ctx = Ctx {
        cfg,
        out: cli.out.clone(),
        verbose: cli.verbose,
    };
    let planned = match cli.command {
        Command::Simulate { weights } => cmd_simulate(&ctx, weights)?,
        Command::SimulateBiohybrid { weights, replay } => cmd_biohybrid(&ctx, weights, replay)?,
        Command::Train { inputs } => cmd_train(&ctx, inputs)?,
        Command::Analyze { inputs } => cmd_analysis(&ctx, inputs, Analysis::Analyze)?,
        Command::Compare { inputs } => cmd_analysis(&ctx, inputs, Analysis::Compare)?,
        Command::Baseline { inputs } => cmd_analysis(&ctx, inputs, Analysis::Baseline)?,
        Command::Ingest { inputs, canonical } => cmd_ingest(&ctx, inputs, canonical)?,
        Command::WeightsInfo { path } => {
            let w = load_weights_file(&path).map_err(|e| CliError::Validation(vec![e]))?;
            return Ok(Outcome {
                written: Vec::new(),
                stdout: describe(&w),
            });
        }
    };
    let written = commit(&ctx.out, planned)?;
    for p in &written {
        ctx.log(format!("wrote {}", p.display()));
    }
    Ok(Outcome {
        written,
        stdout: String::new(),
    })
}

/// Write every planned file atomically. Paths must be distinct.
fn commit(out: &Path, planned: Planned) -> Result<Vec<PathBuf>, CliError> {
    let mut seen = BTreeSet::new();
    let dups: Vec<String> = planned
        .iter()
        .filter(|(p, _)| !seen.insert(p.clone()))
        .map(|(p, _)| format!("two outputs would be written to {}", p.display()))
        .collect();
    check(dups)?;
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let mut written = Vec::new();
    for (rel, bytes) in planned {
        let path = out.join(&rel);
        write_atomic(&path, &bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn load_weights_file(path: &Path) -> Result<NetworkWeights, String> {
    let f = fs::File::open(path).map_err(|e| format!("cannot open weights {}: {e}", path.display()))?;
    load_weights(std::io::BufReader::new(f)).map_err(|e| format!("weights {}: {e}", path.display()))
}

fn load_trajectory_file(path: &Path) -> Result<TrajectorySet, String> {
    let f = fs::File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))?;
    read_trajectory_set(std::io::BufReader::new(f)).map_err(|e| format!("{}: {e}", path.display()))
}

/// Expand directories into their `.traj` files, sorted by name.
fn expand_inputs(paths: &[PathBuf], errs: &mut Vec<String>) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = match fs::read_dir(p) {
                Ok(rd) => rd
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|f| f.extension().is_some_and(|x| x == TRAJECTORY_EXT))
                    .collect(),
                Err(e) => {
                    errs.push(format!("cannot read directory {}: {e}", p.display()));
                    continue;
                }
            };
            if files.is_empty() {
                errs.push(format!("directory {} holds no .{TRAJECTORY_EXT} files", p.display()));
            }
            files.sort();
            out.extend(files);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            errs.push(format!("input {} does not exist", p.display()));
        }
    }
    out
}

fn load_sets(paths: &[PathBuf], errs: &mut Vec<String>) -> Vec<(PathBuf, TrajectorySet)> {
    let files = expand_inputs(paths, errs);
    let mut sets = Vec::new();
    for f in files {
        match load_trajectory_file(&f) {
            Ok(s) => sets.push((f, s)),
            Err(e) => errs.push(e),
        }
    }
    sets
}

fn all_inputs(ctx: &Ctx, cli_inputs: Vec<PathBuf>) -> Vec<PathBuf> {
    ctx.cfg.inputs.iter().cloned().chain(cli_inputs).collect()
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Config(errs) => CliError::Validation(errs),
        SimError::Replay(msg) => CliError::Validation(vec![msg]),
        e => CliError::Runtime(e.to_string()),
    }
}

fn run_outputs(ctx: &Ctx, results: Vec<Result<SimOutput, SimError>>) -> Result<Planned, CliError> {
    let mut planned = Vec::new();
    for r in results {
        let out = r.map_err(sim_error)?;
        let id = &out.set.experiment_id;
        let text = trajectory_set_to_string(&out.set).map_err(|e| CliError::Runtime(e.to_string()))?;
        let mut log = Vec::new();
        out.write_event_log(&mut log)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        ctx.log(format!(
            "{id}: {} samples, {} rejected draws, {} projections",
            out.set.len(),
            out.stats.rejected_draws,
            out.stats.projections
        ));
        planned.push((PathBuf::from(format!("{id}.{TRAJECTORY_EXT}")), text.into_bytes()));
        planned.push((PathBuf::from(format!("{id}.events.jsonl")), log));
    }
    Ok(planned)
}

fn sim_checks(ctx: &Ctx, errs: &mut Vec<String>) {
    errs.extend(ctx.cfg.sim.validate());
    if ctx.cfg.runs() == 0 {
        errs.push("runs must be >= 1".into());
    }
}

fn weights_for(ctx: &Ctx, flag: Option<PathBuf>, errs: &mut Vec<String>) -> Option<NetworkWeights> {
    match flag.or_else(|| ctx.cfg.weights.clone()) {
        None => {
            errs.push("a weights file is required (--weights or `weights` in the config)".into());
            None
        }
        Some(p) => load_weights_file(&p).map_err(|e| errs.push(e)).ok(),
    }
}

fn cmd_simulate(ctx: &Ctx, weights: Option<PathBuf>) -> Result<Planned, CliError> {
    let mut errs = Vec::new();
    sim_checks(ctx, &mut errs);
    let model = match ctx.cfg.generator {
        Generator::Model => weights_for(ctx, weights, &mut errs),
        Generator::Teacher => None,
    };
    check(errs)?;
    let seeds = ctx.cfg.seeds();
    ctx.log(format!("simulating {} run(s)", seeds.len()));
    let results = match &model {
        Some(w) => run_batch(&ctx.cfg.sim, &seeds, |c| simulate_pair(c, w, w)),
        None => run_batch(&ctx.cfg.sim, &seeds, |c| {
            generate_teacher(c, &ctx.cfg.teacher).map(|set| SimOutput {
                set,
                events: Vec::new(),
                stats: RunStats::default(),
            })
        }),
    };
    run_outputs(ctx, results)
}

fn cmd_biohybrid(ctx: &Ctx, weights: Option<PathBuf>, replay: Option<PathBuf>) -> Result<Planned, CliError> {
    let mut errs = Vec::new();
    sim_checks(ctx, &mut errs);
    errs.extend(ctx.cfg.plant.validate());
    let model = weights_for(ctx, weights, &mut errs);
    let recorded = match replay.or_else(|| ctx.cfg.replay.clone()) {
        None => None,
        Some(p) => match load_trajectory_file(&p) {
            Ok(ts) if ctx.cfg.replay_agent < 2 => Some(ts.agents[ctx.cfg.replay_agent].clone()),
            Ok(_) => {
                errs.push(format!("replay_agent must be 0 or 1, got {}", ctx.cfg.replay_agent));
                None
            }
            Err(e) => {
                errs.push(e);
                None
            }
        },
    };
    check(errs)?;
    let model = model.expect("validated");
    let mut sim = ctx.cfg.sim.clone();
    if sim.condition == DLI_SP {
        sim.condition = DLI_BP.into();
    }
    let seeds = ctx.cfg.seeds();
    ctx.log(format!("simulating {} biohybrid run(s)", seeds.len()));
    let results = run_batch(&sim, &seeds, |c| {
        let nb = match &recorded {
            Some(t) => NeighborSource::Replay(t),
            None => NeighborSource::Model(&model),
        };
        simulate_biohybrid(c, &model, nb, &ctx.cfg.plant)
    });
    run_outputs(ctx, results)
}

fn cmd_train(ctx: &Ctx, inputs: Vec<PathBuf>) -> Result<Planned, CliError> {
    let mut errs = ctx
        .cfg
        .train
        .validate()
        .into_iter()
        .map(|e| format!("train.{e}"))
        .collect::<Vec<_>>();
    let inputs = all_inputs(ctx, inputs);
    if inputs.is_empty() {
        errs.push("train needs trajectory inputs".into());
    }
    let sets = load_sets(&inputs, &mut errs);
    let mut dataset = Vec::new();
    for (path, set) in &sets {
        match windows_from_set(set, ctx.cfg.train.sequence_stride.max(1)) {
            Ok(w) => dataset.extend(w),
            Err(e) => errs.push(format!("{}: {e}", path.display())),
        }
    }
    if errs.is_empty() && dataset.is_empty() {
        errs.push("inputs are too short to form any training window".into());
    }
    check(errs)?;
    ctx.log(format!(
        "training on {} windows from {} files",
        dataset.len(),
        sets.len()
    ));
    let mut metrics_log = Vec::new();
    let outcome = train(&dataset, &ctx.cfg.train, None, |m| {
        serde_json::to_writer(&mut metrics_log, m).expect("metrics serialize");
        metrics_log.push(b'\n');
        ctx.log(format!(
            "epoch {:>3}  train {:.4}  validation {:.4}",
            m.epoch, m.train_nll, m.validation_nll
        ));
    })
    .map_err(|e| match e {
        TrainError::Config(errs) => CliError::Validation(errs),
        e => CliError::Runtime(e.to_string()),
    })?;
    let weights_path = ctx
        .cfg
        .weights
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_WEIGHTS));
    let summary = serde_json::json!({
        "event": "summary",
        "windows": dataset.len(),
        "best_epoch": outcome.best_epoch,
        "initial_validation_nll": outcome.initial_validation_nll(),
        "best_validation_nll": outcome.best_validation_nll(),
    });
    serde_json::to_writer(&mut metrics_log, &summary).expect("summary serializes");
    metrics_log.push(b'\n');
    Ok(vec![
        (weights_path, to_bytes(&outcome.weights)),
        (PathBuf::from("train_metrics.jsonl"), metrics_log),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Analysis {
    Analyze,
    Compare,
    Baseline,
}

/// Condition groups in first-appearance order.
fn gather_groups(ctx: &Ctx, inputs: Vec<PathBuf>, errs: &mut Vec<String>) -> Vec<ConditionInput> {
    let mut groups: Vec<ConditionInput> = Vec::new();
    let add = |label: &str, exp: ExperimentData, groups: &mut Vec<ConditionInput>| match groups
        .iter_mut()
        .find(|g| g.label == label)
    {
        Some(g) => g.experiments.push(exp),
        None => groups.push(ConditionInput {
            label: label.to_string(),
            experiments: vec![exp],
        }),
    };
    let to_data = |path: &Path, set: &TrajectorySet, errs: &mut Vec<String>| -> Option<ExperimentData> {
        ExperimentData::from_set(set)
            .map_err(|e| errs.push(format!("{}: {e}", path.display())))
            .ok()
    };
    for Group { label, inputs, relabel } in &ctx.cfg.groups {
        for (path, mut set) in load_sets(inputs, errs) {
            if set.condition != *label {
                if *relabel {
                    set.condition = label.clone();
                } else {
                    errs.push(format!(
                        "{} is labelled `{}` but listed under group `{label}` (set relabel = true to override)",
                        path.display(),
                        set.condition
                    ));
                    continue;
                }
            }
            if let Some(d) = to_data(&path, &set, errs) {
                add(label, d, &mut groups);
            }
        }
    }
    let loose: Vec<PathBuf> = ctx.cfg.inputs.iter().cloned().chain(inputs).collect();
    for (path, set) in load_sets(&loose, errs) {
        if let Some(d) = to_data(&path, &set, errs) {
            add(&set.condition, d, &mut groups);
        }
    }
    groups
}

fn cmd_analysis(ctx: &Ctx, inputs: Vec<PathBuf>, kind: Analysis) -> Result<Planned, CliError> {
    let mut errs = ctx.cfg.analysis.validate();
    let groups = gather_groups(ctx, inputs, &mut errs);
    if groups.is_empty() && errs.is_empty() {
        errs.push("no trajectory inputs".into());
    }
    match kind {
        Analysis::Compare if !groups.is_empty() && groups.len() < 2 => {
            errs.push(format!("compare needs at least 2 conditions, found {}", groups.len()));
        }
        Analysis::Baseline => {
            for g in &groups {
                if g.experiments.len() < biogap::analytics::MIN_BASELINE_EXPERIMENTS {
                    errs.push(format!(
                        "baseline needs at least {} experiments per condition; `{}` has {}",
                        biogap::analytics::MIN_BASELINE_EXPERIMENTS,
                        g.label,
                        g.experiments.len()
                    ));
                }
            }
        }
        _ => {}
    }
    check(errs)?;
    for g in &groups {
        ctx.log(format!("{}: {} experiments", g.label, g.experiments.len()));
    }
    let analysis_err = |e: biogap::analytics::AnalyticsError| CliError::Validation(vec![e.to_string()]);
    let mut report: ObservableReport = summarize(&groups, &ctx.cfg.analysis).map_err(analysis_err)?;
    match kind {
        Analysis::Analyze => report.comparisons.clear(),
        Analysis::Compare => {}
        Analysis::Baseline => {
            report.comparisons.clear();
            for g in &groups {
                report.add_baseline(g).map_err(analysis_err)?;
            }
        }
    }
    Ok(vec![
        (PathBuf::from("report.json"), report.to_json().into_bytes()),
        (PathBuf::from("report.txt"), report.render_text().into_bytes()),
    ])
}

fn cmd_ingest(ctx: &Ctx, inputs: Vec<PathBuf>, canonical: bool) -> Result<Planned, CliError> {
    let mut errs = Vec::new();
    let base = if canonical {
        IngestConfig::canonical()
    } else {
        ctx.cfg.ingest.clone()
    };
    errs.extend(base.validate());
    let inputs = all_inputs(ctx, inputs);
    if inputs.is_empty() {
        errs.push("ingest needs source files".into());
    }
    let mut planned = Vec::new();
    let mut reports = Vec::new();
    if errs.is_empty() {
        for path in &inputs {
            let text = match fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    errs.push(format!("cannot read {}: {e}", path.display()));
                    continue;
                }
            };
            let mut cfg = base.clone();
            if canonical {
                match read_trajectory_set(text.as_bytes()) {
                    Ok(ts) => {
                        cfg.condition = ts.condition.clone();
                        cfg.experiment_id = Some(ts.experiment_id.clone());
                        cfg.radius_cm = ts.geom.radius_cm();
                    }
                    Err(e) => {
                        errs.push(format!("{}: {e}", path.display()));
                        continue;
                    }
                }
            }
            match ingest_text(&text, &path.display().to_string(), &cfg) {
                Ok((set, report)) => {
                    for w in &report.warnings {
                        ctx.log(format!("{}: warning: {w}", path.display()));
                    }
                    match trajectory_set_to_string(&set) {
                        Ok(s) => planned.push((
                            PathBuf::from(format!("{}.{TRAJECTORY_EXT}", set.experiment_id)),
                            s.into_bytes(),
                        )),
                        Err(e) => errs.push(format!("{}: {e}", path.display())),
                    }
                    reports.push(report);
                }
                Err(e) => errs.push(format!("{}: {e}", path.display())),
            }
        }
    }
    check(errs)?;
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    planned.push((PathBuf::from("ingest_report.json"), json.into_bytes()));
    Ok(planned)
}
