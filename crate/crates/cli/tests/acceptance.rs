//! Acceptance suite. Every criterion prints one `[PASS]`, `[FAIL]` or
//! `[SKIP]` line; the run exits non-zero if any gating criterion fails.
//! Runs without the libtest harness so the lines always show.
//!
//! `BIOGAP_ACCEPTANCE=2,6` limits the run to the listed criteria.
//! `BIOGAP_FISH_ONLY_DIR` points criterion 10 at ingested fish-only `.traj`
//! files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use biogap::analytics::{
    correlation, estimate_pdf_on, half_second_derivative, hellinger, split_baseline, summarize, AgentStream,
    AnalysisOptions, BinSpec, ConditionInput, CorrelationKind, ExperimentData, Observable, Pdf,
};
use biogap::io::read_trajectory_set;
use biogap::model::train::{train, TrainingConfig, TrainingSample};
use biogap::model::weights_io::from_bytes;
use biogap::model::{
    AccelerationDistribution, ConstantModel, NetworkWeights, PairRow, PairStateSequence, ROW_WIDTH, WINDOW_LEN,
};
use biogap::plant::{control_ticks, track_goal, PidConfig, PidState, PlantPose};
use biogap::sim::{
    generate_teacher, simulate_biohybrid, simulate_pair, BoundaryPolicy, NeighborSource, SimConfig, TeacherConfig,
};
use biogap::{TankGeometry, Vec2};
use biogap_cli::{run, Cli};
use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

enum Outcome {
    Gate(Verdict),
    Skip(String),
}

fn cli(args: &[&str]) {
    let mut full = vec!["biogap"];
    full.extend_from_slice(args);
    if let Err(e) = run(Cli::try_parse_from(&full).expect("arguments parse")) {
        panic!("biogap {}: {e}", args.join(" "));
    }
}

fn cli_with(dir: &Path, name: &str, config: &str, tail: &[&str]) -> PathBuf {
    let cfg = dir.join(format!("{name}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(name);
    let mut args = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(tail);
    cli(&args);
    out
}

fn read_dir_sets(dir: &Path) -> Vec<biogap::TrajectorySet> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "traj"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| read_trajectory_set(std::io::BufReader::new(fs::File::open(p).unwrap())).unwrap())
        .collect()
}

fn wanted() -> Option<Vec<u32>> {
    let v = std::env::var("BIOGAP_ACCEPTANCE").ok()?;
    Some(v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
}

// 1

fn hellinger_values() -> Outcome {
    let grid = BinSpec::new(0.0, 1.0, 2);
    let pdf = |m: [f64; 2]| Pdf::from_masses(grid, m.to_vec()).unwrap();
    let same = hellinger(&pdf([0.3, 0.7]), &pdf([0.3, 0.7])).unwrap();
    let disjoint = hellinger(&pdf([1.0, 0.0]), &pdf([0.0, 1.0])).unwrap();
    let half = hellinger(&pdf([1.0, 0.0]), &pdf([0.5, 0.5])).unwrap();
    let expected = 1.0 - 0.5f64.sqrt();
    // histograms from the same samples, on a canonical grid
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<f64> = (0..5000).map(|_| rng.random_range(0.0..40.0)).collect();
    let g = Observable::Speed.grid();
    let hist = hellinger(&estimate_pdf_on(&xs, g).unwrap(), &estimate_pdf_on(&xs, g).unwrap()).unwrap();
    let pass = same.abs() <= 1e-12
        && hist.abs() <= 1e-12
        && (disjoint - 1.0).abs() <= 1e-12
        && (half - expected).abs() <= 1e-12;
    Outcome::Gate(Verdict::new(
        pass,
        format!("identical {same:e}, disjoint {disjoint}, two-bin {half:.15} vs 1-sqrt(0.5) {expected:.15}"),
    ))
}

// 2

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut w = NetworkWeights::zeros([8; 6]);
    for p in w.params_mut() {
        *p = rng.random_range(-1.0..1.0);
    }
    let input: Vec<f64> = (0..WINDOW_LEN * ROW_WIDTH)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let target = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let mut grad = vec![0.0; w.param_count()];
    w.accumulate_gradient(&input, target, &mut grad).unwrap();
    let h = 1e-5;
    let (mut checked, mut skipped, mut worst) = (0usize, 0usize, 0.0f64);
    let mut order: Vec<usize> = (0..w.param_count()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    for &i in order.iter().take(400) {
        let orig = w.params()[i];
        w.params_mut()[i] = orig + h;
        let up = w.loss(&input, target).unwrap();
        w.params_mut()[i] = orig - h;
        let down = w.loss(&input, target).unwrap();
        w.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let denom = fd.abs().max(grad[i].abs());
        if denom < 1e-8 {
            skipped += 1;
            continue;
        }
        worst = worst.max((fd - grad[i]).abs() / denom);
        checked += 1;
    }
    Outcome::Gate(Verdict::new(
        checked >= 100 && worst < 1e-4,
        format!("{checked} coordinates checked ({skipped} with zero gradient skipped), max relative error {worst:.2e}"),
    ))
}

// 3

fn random_window(rng: &mut ChaCha8Rng) -> [PairRow; WINDOW_LEN] {
    let mut rows = [[0.0; ROW_WIDTH]; WINDOW_LEN];
    for r in rows.iter_mut() {
        for x in r.iter_mut() {
            *x = rng.random_range(-10.0..10.0);
        }
    }
    rows
}

fn unit_noise_training() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sample = |rng: &mut ChaCha8Rng| {
        let rows = random_window(rng);
        let n = rand_distr_normal(rng);
        let m = rand_distr_normal(rng);
        (rows, Vec2::new(n, m))
    };
    let data: Vec<TrainingSample> = (0..20_000)
        .map(|_| {
            let (rows, target) = sample(&mut rng);
            TrainingSample {
                input: rows.iter().flatten().copied().collect(),
                target,
            }
        })
        .collect();
    let cfg = TrainingConfig {
        hidden: [16; 6],
        epochs: 8,
        learning_rate: 1e-3,
        lr_decay: 0.7,
        seed: 3,
        ..Default::default()
    };
    let out = train(&data, &cfg, None, |_| {}).unwrap();
    let held_out: Vec<AccelerationDistribution> = (0..4000)
        .map(|_| {
            out.weights
                .forward(&PairStateSequence::new(sample(&mut rng).0))
                .unwrap()
        })
        .collect();
    let n = held_out.len() as f64;
    let mean = |f: fn(&AccelerationDistribution) -> f64| held_out.iter().map(f).sum::<f64>() / n;
    let mu = [mean(|d| d.mu_x), mean(|d| d.mu_y)];
    let sigma = [mean(|d| d.sigma_x), mean(|d| d.sigma_y)];
    let pass = mu.iter().all(|m| m.abs() < 0.05) && sigma.iter().all(|s| (s - 1.0).abs() < 0.05);
    Outcome::Gate(Verdict::new(
        pass,
        format!(
            "held-out mean mu ({:.4}, {:.4}), mean sigma ({:.4}, {:.4}) after {} epochs",
            mu[0], mu[1], sigma[0], sigma[1], cfg.epochs
        ),
    ))
}

fn rand_distr_normal(rng: &mut ChaCha8Rng) -> f64 {
    biogap::model::sample_normal(0.0, 1.0, rng)
}

// 4

const REFERENCE_FISH_VS_SP: f64 = 0.13;

fn end_to_end(dir: &Path, weights_out: &mut Option<NetworkWeights>) -> Outcome {
    let fish = cli_with(
        dir,
        "fish",
        "generator = \"teacher\"\nruns = 12\n[sim]\nduration_s = 600.0\ncondition = \"fish-only\"\nexperiment_id = \"fish\"\n",
        &["--seed", "1000", "simulate"],
    );
    let model = cli_with(
        dir,
        "model",
        "[train]\nhidden = [32, 32, 32, 32, 32, 32]\nepochs = 12\nlearning_rate = 0.005\nlr_decay = 0.85\nbatch_size = 64\n",
        &["--seed", "4", "train", fish.to_str().unwrap()],
    );
    let weights = model.join("weights.pairnet");
    let dli = cli_with(
        dir,
        "dli",
        &format!(
            "runs = 12\nweights = \"{}\"\n[sim]\nduration_s = 600.0\nexperiment_id = \"dli\"\n",
            weights.display()
        ),
        &["--seed", "2000", "simulate"],
    );
    let cmp = cli_with(
        dir,
        "cmp",
        "[analysis]\nbootstrap_resamples = 200\n",
        &["compare", fish.to_str().unwrap(), dli.to_str().unwrap()],
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cmp.join("report.json")).unwrap()).unwrap();
    let row = &report["comparisons"][0];
    let h = row["mean"].as_f64().unwrap();
    let per: Vec<String> = row["values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| format!("{:.3}", v[1].as_f64().unwrap()))
        .collect();
    *weights_out = Some(from_bytes(&fs::read(&weights).unwrap()).unwrap());
    Outcome::Gate(Verdict::new(
        h < 0.20,
        format!(
            "2 h teacher vs 2 h simulated pairs: H = {h:.3} [{}] (threshold 0.20, reference fish vs DLI-SP {REFERENCE_FISH_VS_SP})",
            per.join(", ")
        ),
    ))
}

// 5

fn split_baseline_behavior() -> Outcome {
    let experiments = |teacher: &TeacherConfig, seeds: std::ops::Range<u64>| -> Vec<ExperimentData> {
        seeds
            .map(|seed| {
                let cfg = SimConfig {
                    duration_s: 600.0,
                    seed,
                    condition: "fish-only".into(),
                    ..Default::default()
                };
                ExperimentData::from_set(&generate_teacher(&cfg, teacher).unwrap()).unwrap()
            })
            .collect()
    };
    let base = TeacherConfig::default();
    let fast = TeacherConfig {
        kick_speed_mean: 1.5 * base.kick_speed_mean,
        ..base.clone()
    };
    let homogeneous = experiments(&base, 0..14);
    let h0 = split_baseline(&homogeneous, 200, 5).unwrap().mean;
    let mut mixed = experiments(&base, 0..7);
    mixed.extend(experiments(&fast, 100..107));
    let h1 = split_baseline(&mixed, 200, 5).unwrap().mean;
    let frames = homogeneous[0].frames.len();
    Outcome::Gate(Verdict::new(
        h0 < 0.05 && h1 >= 2.0 * h0,
        format!(
            "14 experiments x {frames} frames: homogeneous H = {h0:.4}, half with 1.5x kick speed H = {h1:.4} ({:.1}x)",
            h1 / h0
        ),
    ))
}

// 6

fn correlation_identities() -> Outcome {
    let dt = 0.12;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    // tank-scale ballistic runs: 7 cm/s for 60 frames covers about 50 cm
    let mut streams = Vec::new();
    for _ in 0..50 {
        let u0 = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let v = 7.0 * Vec2::from_angle_deg(rng.random_range(-180.0..180.0));
        streams.push(AgentStream {
            positions: (0..60).map(|k| u0 + (k as f64 * dt) * v).collect(),
            velocities: vec![v; 60],
            wall_angles: (0..60).map(|_| Some(rng.random_range(-180.0..180.0))).collect(),
        });
    }
    let refs: Vec<&AgentStream> = streams.iter().collect();
    let cx = correlation(&refs, CorrelationKind::Displacement, 50, dt).unwrap();
    let cv = correlation(&refs, CorrelationKind::Velocity, 50, dt).unwrap();
    let ct = correlation(&refs, CorrelationKind::WallAngle, 50, dt).unwrap();
    let mut worst_x: f64 = 0.0;
    for (k, &x) in cx.values.iter().enumerate() {
        let t = k as f64 * dt;
        worst_x = worst_x.max((x - 49.0 * t * t).abs());
    }
    let worst_v = half_second_derivative(&cx)
        .iter()
        .zip(&cv.values)
        .map(|(h, v)| (h - v).abs())
        .fold(0.0, f64::max);

    // zero lag of C_V on irregular velocities
    let noisy = AgentStream {
        positions: vec![Vec2::ZERO; 500],
        velocities: (0..500)
            .map(|_| Vec2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)))
            .collect(),
        wall_angles: vec![None; 500],
    };
    let ms = noisy.velocities.iter().map(|v| v.norm_squared()).sum::<f64>() / 500.0;
    let cv0 = correlation(&[&noisy], CorrelationKind::Velocity, 5, dt).unwrap().values[0];
    let pass = worst_x <= 1e-9 && worst_v <= 1e-9 && (cv0 - ms).abs() <= 1e-9 && ct.values[0] == 1.0;
    Outcome::Gate(Verdict::new(
        pass,
        format!(
            "C_V(0) - <v^2> = {:.1e}, max |C_X - v^2 t^2| = {worst_x:.1e}, max |C_V - C_X''/2| = {worst_v:.1e}, C_thw(0) = {}",
            cv0 - ms,
            ct.values[0]
        ),
    ))
}

// 7

fn containment_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut outside, mut positions, mut projections) = (0usize, 0usize, 0u64);
    for i in 0..100 {
        let radius = rng.random_range(5.0..50.0);
        let cfg = SimConfig {
            geom: TankGeometry::new(radius).unwrap(),
            duration_s: 10_000.0 * 0.12,
            seed: rng.random(),
            boundary: BoundaryPolicy {
                max_resamples: rng.random_range(1..20),
                margin_cm: rng.random_range(0.01..0.2 * radius),
            },
            ..Default::default()
        };
        let out = if i % 2 == 0 {
            let m = ConstantModel(AccelerationDistribution {
                mu_x: rng.random_range(-300.0..300.0),
                sigma_x: rng.random_range(0.01..200.0),
                mu_y: rng.random_range(-300.0..300.0),
                sigma_y: rng.random_range(0.01..200.0),
            });
            simulate_pair(&cfg, &m, &m).unwrap()
        } else {
            let mut w = NetworkWeights::random([8; 6], &mut rng);
            let scale = rng.random_range(0.5..3.0);
            for p in w.params_mut() {
                *p *= scale;
            }
            simulate_pair(&cfg, &w, &w).unwrap()
        };
        projections += out.stats.projections;
        for a in &out.set.agents {
            for s in &a.samples {
                positions += 1;
                if cfg.geom.radius_cm() - s.position.norm() < 0.0 {
                    outside += 1;
                }
            }
        }
    }
    Outcome::Gate(Verdict::new(
        outside == 0,
        format!("{outside} of {positions} positions outside the tank ({projections} boundary projections)"),
    ))
}

// 8

/// Default gains with saturations far above anything the model asks for.
fn loose_plant() -> PidConfig {
    PidConfig {
        max_speed_cm_s: 1e4,
        max_accel_cm_s2: 1e6,
        max_turn_deg_s: 1e6,
        ..PidConfig::default()
    }
}

/// Drive the plant along a recorded agent path and return the RMS distance
/// between realized and recorded positions.
fn follow(samples: &[biogap::TrajectorySample], cfg: &PidConfig) -> f64 {
    let s0 = &samples[0];
    let mut pose = PlantPose {
        position: s0.position,
        heading_deg: s0.velocity.angle_deg(),
        speed_cm_s: s0.velocity.norm(),
        angular_speed_deg_s: 0.0,
    };
    let mut pid = PidState::default();
    let mut sq = 0.0;
    for (k, s) in samples.iter().enumerate().skip(1) {
        let n = control_ticks(k as u64 - 1, 0.12, cfg.control_hz);
        (pose, pid) = track_goal(&pose, s.position, s.velocity, cfg, &pid, n);
        sq += (pose.position - s.position).norm_squared();
    }
    (sq / (samples.len() - 1) as f64).sqrt()
}

fn plant_fidelity(weights: Option<&NetworkWeights>) -> Outcome {
    let Some(w) = weights else {
        return Outcome::Skip("needs the network trained in criterion 4".into());
    };
    let loose = loose_plant();
    let (mut worst_follow, mut worst_closed): (f64, f64) = (0.0, 0.0);
    for seed in 0..3 {
        let cfg = SimConfig {
            duration_s: 600.0,
            seed,
            ..Default::default()
        };
        let pure = simulate_pair(&cfg, w, w).unwrap();
        for a in &pure.set.agents {
            worst_follow = worst_follow.max(follow(&a.samples, &loose));
        }
        let bio = simulate_biohybrid(&cfg, w, NeighborSource::Model(w), &loose).unwrap();
        worst_closed = worst_closed.max(bio.stats.plant_rms_error_cm.unwrap());
    }
    let capped = PidConfig {
        max_speed_cm_s: 5.0,
        ..PidConfig::default()
    };
    let cfg = SimConfig {
        duration_s: 600.0,
        seed: 9,
        ..Default::default()
    };
    let bio = simulate_biohybrid(&cfg, w, NeighborSource::Model(w), &capped).unwrap();
    let speeds: Vec<f64> = bio.set.agents[0].samples.iter().map(|s| s.velocity.norm()).collect();
    let mean_speed = speeds.iter().sum::<f64>() / speeds.len() as f64;
    Outcome::Gate(Verdict::new(
        worst_follow < 1.0 && worst_closed < 1.0 && mean_speed <= 5.0,
        format!(
            "10 min runs: worst RMS following model paths {worst_follow:.3} cm, worst closed-loop goal RMS {worst_closed:.3} cm; \
             5 cm/s cap mean speed {mean_speed:.4} cm/s"
        ),
    ))
}

// 9

fn hash_dir(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let digest = Sha256::digest(fs::read(&p).unwrap());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), hex);
    }
    out
}

fn determinism(dir: &Path) -> Outcome {
    let src = dir.join("src.csv");
    let mut text = String::from("t,x0,y0,x1,y1\n");
    for k in 0..400 {
        let t = k as f64 / 30.0;
        text.push_str(&format!(
            "{t},{},{},{},{}\n",
            10.0 * (0.3 * t).cos(),
            10.0 * (0.3 * t).sin(),
            5.0,
            -0.1 * t
        ));
    }
    fs::write(&src, text).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let weights = dir.join("w.pairnet");
    fs::write(
        &weights,
        biogap::model::weights_io::to_bytes(&NetworkWeights::random([6; 6], &mut rng)),
    )
    .unwrap();
    let common = format!(
        "weights = \"{}\"\nruns = 4\n[sim]\nduration_s = 60.0\n[train]\nepochs = 2\nhidden = [6, 6, 6, 6, 6, 6]\n\
         [analysis]\nmax_lag_s = 5.0\nbootstrap_resamples = 50\nbaseline_draws = 20\n\
         [ingest.columns]\ntime = \"t\"\nx0 = \"x0\"\ny0 = \"y0\"\nx1 = \"x1\"\ny1 = \"y1\"\n",
        weights.display()
    );
    let mut commands: Vec<(&str, Vec<String>, String)> = Vec::new();
    let teacher = format!("generator = \"teacher\"\n{common}").replace("[sim]\n", "[sim]\ncondition = \"fish-only\"\n");
    commands.push(("simulate-teacher", vec!["simulate".into()], teacher));
    commands.push(("simulate", vec!["simulate".into()], common.clone()));
    let mut report = String::new();
    let mut all_same = true;
    let mut total = 0;
    let mut run_twice = |name: &str, args: &[String], config: &str, report: &mut String| -> PathBuf {
        let mut hashes = Vec::new();
        let mut first = None;
        for rep in 0..2 {
            let tail: Vec<&str> = ["--seed", "11"]
                .into_iter()
                .chain(args.iter().map(String::as_str))
                .collect();
            let out = cli_with(dir, &format!("{name}-{rep}"), config, &tail);
            hashes.push(hash_dir(&out));
            first.get_or_insert(out);
        }
        let same = hashes[0] == hashes[1] && !hashes[0].is_empty();
        all_same &= same;
        total += hashes[0].len();
        if !same {
            report.push_str(&format!(" {name} differs;"));
        }
        first.unwrap()
    };
    let mut teacher_dir = None;
    for (name, args, config) in &commands {
        let out = run_twice(name, args, config, &mut report);
        if *name == "simulate-teacher" {
            teacher_dir = Some(out);
        }
    }
    let teacher_dir = teacher_dir.unwrap();
    let data = teacher_dir.to_str().unwrap().to_string();
    let replay = fs::read_dir(&teacher_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "traj"))
        .min()
        .unwrap();
    let sim_dir = dir.join("simulate-0").to_str().unwrap().to_string();
    let rest: Vec<(&str, Vec<String>)> = vec![
        ("biohybrid", vec!["simulate-biohybrid".into()]),
        (
            "biohybrid-replay",
            vec![
                "simulate-biohybrid".into(),
                "--replay".into(),
                replay.to_str().unwrap().into(),
            ],
        ),
        ("train", vec!["train".into(), data.clone()]),
        ("analyze", vec!["analyze".into(), data.clone()]),
        ("compare", vec!["compare".into(), data.clone(), sim_dir]),
        ("baseline", vec!["baseline".into(), data]),
        ("ingest", vec!["ingest".into(), src.to_str().unwrap().into()]),
    ];
    for (name, args) in &rest {
        let config = if *name == "biohybrid-replay" {
            // the replayed recording must cover the output plus the transient
            common
                .replace("runs = 4\n", "")
                .replace("duration_s = 60.0", "duration_s = 50.0")
        } else {
            common.clone()
        };
        run_twice(name, args, &config, &mut report);
    }
    Outcome::Gate(Verdict::new(
        all_same,
        format!(
            "{} command runs, {total} output files hashed twice:{}",
            2 + rest.len(),
            if report.is_empty() {
                " all identical".into()
            } else {
                report
            }
        ),
    ))
}

// 10

const FISH_ONLY_REFERENCE_MEANS: [(Observable, f64, f64); 6] = [
    (Observable::Speed, 10.50, 0.60),
    (Observable::WallDistance, 4.39, 0.43),
    (Observable::WallAngle, 87.42, 0.39),
    (Observable::PairDistance, 8.05, 0.71),
    (Observable::ViewingAngle, 26.72, 1.91),
    (Observable::HeadingDifference, 7.96, 4.73),
];

fn published_fish_only() -> Outcome {
    let Ok(dir) = std::env::var("BIOGAP_FISH_ONLY_DIR") else {
        return Outcome::Skip("BIOGAP_FISH_ONLY_DIR not set; needs the ingested published fish-only dataset".into());
    };
    let sets = read_dir_sets(Path::new(&dir));
    let experiments: Vec<ExperimentData> = sets.iter().map(|s| ExperimentData::from_set(s).unwrap()).collect();
    let input = ConditionInput {
        label: "fish-only".into(),
        experiments,
    };
    let opts = AnalysisOptions {
        max_lag_s: 5.0,
        ..Default::default()
    };
    let report = summarize(&[input], &opts).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (obs, mean, se) in FISH_ONLY_REFERENCE_MEANS {
        let got = report.conditions[0]
            .stats
            .iter()
            .find(|s| s.observable == obs)
            .unwrap()
            .mean;
        let ok = (got - mean).abs() <= 2.0 * se;
        pass &= ok;
        parts.push(format!("{} {got:.2} (ref {mean} +- {se})", obs.label()));
    }
    Outcome::Gate(Verdict::new(pass, parts.join(", ")))
}

fn main() {
    let only = wanted();
    let enabled = |n: u32| {
        only.as_ref()
            .is_none_or(|v| v.contains(&n) || (n == 4 && v.contains(&8)))
    };
    let dir = tempfile::tempdir().unwrap();
    let mut weights = None;
    let mut failed = Vec::new();
    let mut report = |n: u32, name: &str, gating: bool, f: &mut dyn FnMut() -> Outcome| {
        if !enabled(n) {
            return;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Outcome::Gate(v) => {
                let tag = if v.pass { "PASS" } else { "FAIL" };
                println!("[{tag}] {n} {name}: {} ({secs:.1} s)", v.detail);
                if !v.pass && gating {
                    failed.push(n);
                }
            }
            Outcome::Skip(why) => println!("[SKIP] {n} {name}: {why}"),
        }
    };
    report(1, "hellinger correctness", true, &mut hellinger_values);
    report(2, "gradient fidelity", true, &mut gradient_check);
    report(3, "training sanity", true, &mut unit_noise_training);
    report(4, "end-to-end desk-scale comparison", true, &mut || {
        end_to_end(dir.path(), &mut weights)
    });
    report(5, "split baseline behavior", true, &mut split_baseline_behavior);
    report(6, "correlation identities", true, &mut correlation_identities);
    report(7, "containment fuzz", true, &mut containment_fuzz);
    report(8, "plant fidelity", true, &mut || plant_fidelity(weights.as_ref()));
    report(9, "determinism", true, &mut || determinism(dir.path()));
    report(
        10,
        "published fish-only means (optional)",
        false,
        &mut published_fish_only,
    );
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
