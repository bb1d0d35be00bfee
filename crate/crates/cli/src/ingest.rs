//! Conversion of external tracking data into canonical trajectories.
//!
//! Sources are delimited text with either one row per frame holding both
//! agents (`wide`) or one row per agent and frame (`long`, which is also
//! what the canonical format looks like). Columns are mapped by header name,
//! or by zero-based index when the file has no header. Positions are scaled
//! to cm and shifted to the tank center, velocities come from central
//! differences unless mapped, and everything is linearly resampled onto the
//! model time step.

use std::collections::BTreeMap;
use std::path::Path;

use biogap::geometry::{TankGeometry, Vec2};
use biogap::model::MODEL_DT_S;
use biogap::trajectory::{SourceTag, Trajectory, TrajectorySample, TrajectorySet, FISH_ONLY};
use serde::{Deserialize, Serialize};

/// Out-of-tank rows above this fraction are an error.
pub const MAX_OUT_OF_TANK_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    #[default]
    Wide,
    Long,
}

/// Source column for each quantity. Keys: `time`, `agent` (long layout),
/// `x`, `y`, `vx`, `vy` (long) or `x0`, `y0`, `x1`, `y1`, `vx0`, ... (wide).
pub type ColumnMap = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub layout: Layout,
    pub delimiter: char,
    pub has_header: bool,
    pub columns: ColumnMap,
    /// Frame rate used when no time column is mapped.
    pub source_hz: Option<f64>,
    /// Multiplier taking source lengths to cm.
    pub length_scale: f64,
    /// Multiplier taking source times to s.
    pub time_scale: f64,
    /// Tank center in source units.
    pub center: [f64; 2],
    pub radius_cm: f64,
    pub dt_s: f64,
    /// Source gaps longer than this are interpolated with a warning.
    pub warn_gap_s: f64,
    pub condition: String,
    /// Defaults to the source file stem.
    pub experiment_id: Option<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            layout: Layout::Wide,
            delimiter: ',',
            has_header: true,
            columns: ColumnMap::new(),
            source_hz: None,
            length_scale: 1.0,
            time_scale: 1.0,
            center: [0.0, 0.0],
            radius_cm: TankGeometry::DEFAULT_RADIUS_CM,
            dt_s: MODEL_DT_S,
            warn_gap_s: 0.5,
            condition: FISH_ONLY.into(),
            experiment_id: None,
        }
    }
}

impl IngestConfig {
    /// Mapping for files already in the canonical format.
    pub fn canonical() -> Self {
        let columns = [
            ("time", "time_s"),
            ("agent", "agent_id"),
            ("x", "x_cm"),
            ("y", "y_cm"),
            ("vx", "vx_cm_s"),
            ("vy", "vy_cm_s"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Self {
            layout: Layout::Long,
            columns,
            ..Self::default()
        }
    }

    fn required(&self) -> &'static [&'static str] {
        match self.layout {
            Layout::Wide => &["x0", "y0", "x1", "y1"],
            Layout::Long => &["agent", "x", "y"],
        }
    }

    fn optional(&self) -> &'static [&'static str] {
        match self.layout {
            Layout::Wide => &["time", "vx0", "vy0", "vx1", "vy1"],
            Layout::Long => &["time", "vx", "vy"],
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for k in self.required() {
            if !self.columns.contains_key(*k) {
                errs.push(format!(
                    "ingest.columns.{k} is required for the {:?} layout",
                    self.layout
                ));
            }
        }
        for k in self.columns.keys() {
            if !self.required().contains(&k.as_str()) && !self.optional().contains(&k.as_str()) {
                errs.push(format!(
                    "ingest.columns.{k} is not a known column for the {:?} layout",
                    self.layout
                ));
            }
        }
        let has = |k: &str| self.columns.contains_key(k);
        let vel = match self.layout {
            Layout::Wide => ["vx0", "vy0", "vx1", "vy1"].map(has).to_vec(),
            Layout::Long => ["vx", "vy"].map(has).to_vec(),
        };
        if vel.iter().any(|&v| v) && !vel.iter().all(|&v| v) {
            errs.push("ingest.columns: map all velocity columns or none".into());
        }
        if !has("time") {
            match self.source_hz {
                Some(hz) if hz.is_finite() && hz > 0.0 => {}
                _ => errs.push("ingest.source_hz must be > 0 when no time column is mapped".into()),
            }
        }
        if self.layout == Layout::Long && !has("time") {
            errs.push("ingest.columns.time is required for the long layout".into());
        }
        if !self.has_header {
            for (k, v) in &self.columns {
                if v.parse::<usize>().is_err() {
                    errs.push(format!(
                        "ingest.columns.{k} must be a column index when has_header = false"
                    ));
                }
            }
        }
        if !self.delimiter.is_ascii() {
            errs.push("ingest.delimiter must be an ASCII character".into());
        }
        for (name, v) in [
            ("length_scale", self.length_scale),
            ("time_scale", self.time_scale),
            ("radius_cm", self.radius_cm),
            ("dt_s", self.dt_s),
            ("warn_gap_s", self.warn_gap_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("ingest.{name} must be > 0, got {v}"));
            }
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub source: String,
    pub experiment_id: String,
    pub source_rows: usize,
    pub dropped_rows: usize,
    pub frames: usize,
    pub out_of_tank_frames: usize,
    pub velocities: String,
    pub source_start_s: f64,
    pub source_duration_s: f64,
    pub output_samples: usize,
    pub max_interpolation_gap_s: f64,
    pub warnings: Vec<String>,
    pub note: String,
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    t: f64,
    u: [Vec2; 2],
    v: Option<[Vec2; 2]>,
}

fn column_index(header: Option<&csv::StringRecord>, name: &str, key: &str) -> Result<usize, String> {
    match header {
        Some(h) => h
            .iter()
            .position(|c| c.trim() == name)
            .ok_or_else(|| format!("column `{name}` (for {key}) not found in header")),
        None => name.parse().map_err(|_| format!("column {key} must be an index")),
    }
}

fn parse_frames(text: &str, cfg: &IngestConfig) -> Result<(Vec<Frame>, usize, usize), String> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(cfg.delimiter as u8)
        .has_headers(cfg.has_header)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = if cfg.has_header {
        Some(reader.headers().map_err(|e| e.to_string())?.clone())
    } else {
        None
    };
    let mut idx = BTreeMap::new();
    for (k, name) in &cfg.columns {
        idx.insert(k.as_str(), column_index(header.as_ref(), name, k)?);
    }
    let mut rows = 0;
    let mut dropped = 0;
    // long layout: frames keyed by time, gathered per agent
    let mut long: BTreeMap<u64, (f64, [Option<(Vec2, Option<Vec2>)>; 2])> = BTreeMap::new();
    let mut wide = Vec::new();
    let mut prev_t: Option<f64> = None;
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        rows += 1;
        let get = |k: &str| -> Option<f64> {
            idx.get(k)
                .and_then(|&i| rec.get(i))
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|x| x.is_finite())
        };
        let time = match idx.get("time") {
            Some(_) => match get("time") {
                Some(t) => t * cfg.time_scale,
                None => {
                    dropped += 1;
                    continue;
                }
            },
            None => n as f64 / cfg.source_hz.expect("validated"),
        };
        let pos = |x: &str, y: &str| -> Option<Vec2> {
            let c = Vec2::new(cfg.center[0], cfg.center[1]);
            Some(cfg.length_scale * (Vec2::new(get(x)?, get(y)?) - c))
        };
        let vel_scale = cfg.length_scale / cfg.time_scale;
        let vel = |x: &str, y: &str| -> Option<Vec2> { Some(vel_scale * Vec2::new(get(x)?, get(y)?)) };
        match cfg.layout {
            Layout::Wide => {
                let (Some(a), Some(b)) = (pos("x0", "y0"), pos("x1", "y1")) else {
                    dropped += 1;
                    continue;
                };
                let v = if idx.contains_key("vx0") {
                    match (vel("vx0", "vy0"), vel("vx1", "vy1")) {
                        (Some(va), Some(vb)) => Some([va, vb]),
                        _ => {
                            dropped += 1;
                            continue;
                        }
                    }
                } else {
                    None
                };
                if let Some(p) = prev_t {
                    if time <= p {
                        return Err(format!("timestamps not strictly increasing at data row {}", n + 1));
                    }
                }
                prev_t = Some(time);
                wide.push(Frame { t: time, u: [a, b], v });
            }
            Layout::Long => {
                let agent = match get("agent") {
                    Some(a) if a == 0.0 || a == 1.0 => a as usize,
                    Some(a) => return Err(format!("agent id must be 0 or 1, got {a} at data row {}", n + 1)),
                    None => {
                        dropped += 1;
                        continue;
                    }
                };
                let Some(u) = pos("x", "y") else {
                    dropped += 1;
                    continue;
                };
                let v = if idx.contains_key("vx") {
                    match vel("vx", "vy") {
                        Some(v) => Some(v),
                        None => {
                            dropped += 1;
                            continue;
                        }
                    }
                } else {
                    None
                };
                if let Some(p) = prev_t {
                    if time < p {
                        return Err(format!("timestamps not monotone at data row {}", n + 1));
                    }
                }
                prev_t = Some(time);
                let slot = long.entry(time.to_bits()).or_insert((time, [None, None]));
                if slot.1[agent].is_some() {
                    return Err(format!("duplicate row for agent {agent} at t={time}"));
                }
                slot.1[agent] = Some((u, v));
            }
        }
    }
    if cfg.layout == Layout::Long {
        let mut entries: Vec<_> = long.into_values().collect();
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (t, [a, b]) in entries {
            match (a, b) {
                (Some((ua, va)), Some((ub, vb))) => wide.push(Frame {
                    t,
                    u: [ua, ub],
                    v: va.zip(vb).map(|(a, b)| [a, b]),
                }),
                // a frame missing one agent cannot be paired
                (a, b) => dropped += a.is_some() as usize + b.is_some() as usize,
            }
        }
    }
    Ok((wide, rows, dropped))
}

/// Central differences on the source timestamps, one-sided at the ends.
fn central_differences(frames: &[Frame]) -> Vec<[Vec2; 2]> {
    let n = frames.len();
    (0..n)
        .map(|k| {
            let (a, b) = match k {
                0 => (0, 1.min(n - 1)),
                k if k == n - 1 => (k - 1, k),
                k => (k - 1, k + 1),
            };
            if a == b {
                return [Vec2::ZERO; 2];
            }
            let dt = frames[b].t - frames[a].t;
            [0, 1].map(|i| (1.0 / dt) * (frames[b].u[i] - frames[a].u[i]))
        })
        .collect()
}

fn lerp(a: Vec2, b: Vec2, w: f64) -> Vec2 {
    a + w * (b - a)
}

/// Convert one source text into a canonical trajectory set.
pub fn ingest_text(text: &str, source_name: &str, cfg: &IngestConfig) -> Result<(TrajectorySet, IngestReport), String> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(errs.join("; "));
    }
    let (mut frames, source_rows, dropped_rows) = parse_frames(text, cfg)?;
    if frames.len() < 2 {
        return Err(format!(
            "{source_name}: need at least 2 usable frames, found {}",
            frames.len()
        ));
    }
    let geom = TankGeometry::new(cfg.radius_cm).map_err(|e| e.to_string())?;
    let mut warnings = Vec::new();
    let velocities_given = frames[0].v.is_some();
    if !velocities_given {
        let v = central_differences(&frames);
        for (f, v) in frames.iter_mut().zip(v) {
            f.v = Some(v);
        }
    }
    let r = geom.radius_cm();
    let tol = biogap::geometry::POSITION_TOLERANCE_CM;
    let outside = frames.iter().filter(|f| f.u.iter().any(|u| u.norm() > r + tol)).count();
    let frac = outside as f64 / frames.len() as f64;
    if frac > MAX_OUT_OF_TANK_FRACTION {
        return Err(format!(
            "{source_name}: {outside} of {} frames ({:.1}%) lie outside the {r} cm tank; check center, length_scale and radius_cm",
            frames.len(),
            100.0 * frac
        ));
    }
    if outside > 0 {
        warnings.push(format!("{outside} out-of-tank frames pulled onto the wall"));
        for f in &mut frames {
            for u in &mut f.u {
                let n = u.norm();
                if n > r {
                    *u = (r / n) * *u;
                }
            }
        }
    }
    let t0 = frames[0].t;
    let t_end = frames[frames.len() - 1].t;
    let dt = cfg.dt_s;
    let n_out = ((t_end - t0) / dt + 1e-9).floor() as usize + 1;
    let mut samples: [Vec<TrajectorySample>; 2] = [Vec::with_capacity(n_out), Vec::with_capacity(n_out)];
    let mut j = 0;
    let mut max_gap: f64 = 0.0;
    for k in 0..n_out {
        let t = k as f64 * dt;
        let ts = t0 + t;
        while j + 2 < frames.len() && frames[j + 1].t <= ts {
            j += 1;
        }
        let (a, b) = (&frames[j], &frames[j + 1]);
        let w = ((ts - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        if w > 0.0 && w < 1.0 {
            max_gap = max_gap.max(b.t - a.t);
        }
        let (va, vb) = (a.v.expect("set"), b.v.expect("set"));
        for i in 0..2 {
            samples[i].push(TrajectorySample {
                t,
                position: lerp(a.u[i], b.u[i], w),
                velocity: lerp(va[i], vb[i], w),
            });
        }
    }
    let big_gaps = frames.windows(2).filter(|w| w[1].t - w[0].t > cfg.warn_gap_s).count();
    if big_gaps > 0 {
        warnings.push(format!(
            "{big_gaps} source gaps longer than {} s were linearly interpolated",
            cfg.warn_gap_s
        ));
    }
    if dropped_rows > 0 {
        warnings.push(format!("{dropped_rows} rows dropped for missing or non-numeric values"));
    }
    let experiment_id = cfg.experiment_id.clone().unwrap_or_else(|| {
        Path::new(source_name)
            .file_stem()
            .map(|s| s.to_string_lossy().trim_end_matches(".traj").to_string())
            .unwrap_or_else(|| source_name.to_string())
    });
    let [a, b] = samples;
    let traj = |agent_id, samples| Trajectory {
        agent_id,
        dt_s: dt,
        source: SourceTag::Recorded,
        samples,
    };
    let set = TrajectorySet {
        agents: [traj(0, a), traj(1, b)],
        condition: cfg.condition.clone(),
        experiment_id: experiment_id.clone(),
        geom,
    };
    set.validate().map_err(|e| format!("{source_name}: {e}"))?;
    let report = IngestReport {
        source: source_name.to_string(),
        experiment_id,
        source_rows,
        dropped_rows,
        frames: frames.len(),
        out_of_tank_frames: outside,
        velocities: if velocities_given {
            "mapped".into()
        } else {
            "central differences".into()
        },
        source_start_s: t0,
        source_duration_s: t_end - t0,
        output_samples: n_out,
        max_interpolation_gap_s: max_gap,
        warnings,
        note: "no smoothing or outlier filtering is applied beyond the steps listed".into(),
    };
    Ok((set, report))
}
