//! Canonical on-disk trajectory format.
//!
//! A header block of `# key=value` lines is followed by a column line and
//! one comma-separated row per agent and sample, sorted by time then agent:
//!
//! ```text
//! # format_version=1
//! # dt_s=1.20000000000000e-1
//! # radius_cm=2.50000000000000e1
//! # condition=DLI-SP
//! # experiment_id=sim-7
//! # agents=2
//! # sources=simulated,simulated
//! time_s,agent_id,x_cm,y_cm,vx_cm_s,vy_cm_s
//! 0.00000000000000e0,0,...
//! ```
//!
//! Floats are written with 15 significant digits, so writing a file that was
//! read back reproduces it byte for byte.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::geometry::{TankGeometry, Vec2};
use crate::trajectory::{SourceTag, Trajectory, TrajectoryError, TrajectorySample, TrajectorySet};

pub const TRAJECTORY_FORMAT_VERSION: u32 = 1;
pub const COLUMNS: &str = "time_s,agent_id,x_cm,y_cm,vx_cm_s,vy_cm_s";

#[derive(Debug, Error)]
pub enum TrajectoryFileError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid trajectory: {0}")]
    Invalid(#[from] TrajectoryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed 15-significant-digit scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.14e}")
}

fn source_name(s: SourceTag) -> &'static str {
    match s {
        SourceTag::Simulated => "simulated",
        SourceTag::Replayed => "replayed",
        SourceTag::Plant => "plant",
        SourceTag::Recorded => "recorded",
    }
}

fn parse_source(s: &str) -> Option<SourceTag> {
    Some(match s {
        "simulated" => SourceTag::Simulated,
        "replayed" => SourceTag::Replayed,
        "plant" => SourceTag::Plant,
        "recorded" => SourceTag::Recorded,
        _ => return None,
    })
}

fn check_label(what: &str, s: &str) -> std::io::Result<()> {
    if s.contains(['\n', '\r']) {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("{what} must be a single line"),
        ));
    }
    Ok(())
}

pub fn write_trajectory_set<W: Write>(ts: &TrajectorySet, mut w: W) -> Result<(), TrajectoryFileError> {
    ts.validate()?;
    check_label("condition", &ts.condition)?;
    check_label("experiment_id", &ts.experiment_id)?;
    let [a, b] = &ts.agents;
    writeln!(w, "# format_version={TRAJECTORY_FORMAT_VERSION}")?;
    writeln!(w, "# dt_s={}", fmt_f64(ts.dt_s()))?;
    writeln!(w, "# radius_cm={}", fmt_f64(ts.geom.radius_cm()))?;
    writeln!(w, "# condition={}", ts.condition)?;
    writeln!(w, "# experiment_id={}", ts.experiment_id)?;
    writeln!(w, "# agents=2")?;
    writeln!(w, "# sources={},{}", source_name(a.source), source_name(b.source))?;
    writeln!(w, "{COLUMNS}")?;
    for (sa, sb) in a.samples.iter().zip(&b.samples) {
        for (id, s) in [(a.agent_id, sa), (b.agent_id, sb)] {
            writeln!(
                w,
                "{},{id},{},{},{},{}",
                fmt_f64(s.t),
                fmt_f64(s.position.x),
                fmt_f64(s.position.y),
                fmt_f64(s.velocity.x),
                fmt_f64(s.velocity.y)
            )?;
        }
    }
    Ok(())
}

pub fn trajectory_set_to_string(ts: &TrajectorySet) -> Result<String, TrajectoryFileError> {
    let mut buf = Vec::new();
    write_trajectory_set(ts, &mut buf)?;
    Ok(String::from_utf8(buf).expect("ascii output"))
}

pub fn read_trajectory_set<R: BufRead>(r: R) -> Result<TrajectorySet, TrajectoryFileError> {
    let err = |line: usize, message: String| TrajectoryFileError::Parse { line, message };
    let mut header = std::collections::BTreeMap::new();
    let mut columns_seen = false;
    let mut rows: [Vec<TrajectorySample>; 2] = [Vec::new(), Vec::new()];
    let mut last: Option<(f64, u32)> = None;
    for (i, line) in r.lines().enumerate() {
        let n = i + 1;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            if columns_seen {
                return Err(err(n, "header line after the column line".into()));
            }
            let (k, v) = h
                .trim_start()
                .split_once('=')
                .ok_or_else(|| err(n, format!("expected `# key=value`, got `{line}`")))?;
            if header.insert(k.trim().to_string(), v.to_string()).is_some() {
                return Err(err(n, format!("duplicate header key `{}`", k.trim())));
            }
            continue;
        }
        if !columns_seen {
            if line != COLUMNS {
                return Err(err(n, format!("expected column line `{COLUMNS}`")));
            }
            columns_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(err(n, format!("expected 6 fields, got {}", fields.len())));
        }
        let num = |k: usize| -> Result<f64, TrajectoryFileError> {
            fields[k]
                .trim()
                .parse::<f64>()
                .map_err(|e| err(n, format!("field {}: {e}", k + 1)))
        };
        let id: u32 = fields[1].trim().parse().map_err(|e| err(n, format!("agent_id: {e}")))?;
        if id > 1 {
            return Err(err(n, format!("agent_id must be 0 or 1, got {id}")));
        }
        let t = num(0)?;
        if let Some(prev) = last {
            if (t, id) <= prev {
                return Err(err(n, "rows must be sorted by (time, agent) without duplicates".into()));
            }
        }
        last = Some((t, id));
        rows[id as usize].push(TrajectorySample {
            t,
            position: Vec2::new(num(2)?, num(3)?),
            velocity: Vec2::new(num(4)?, num(5)?),
        });
    }
    if !columns_seen {
        return Err(err(0, "missing column line".into()));
    }
    let get = |k: &str| header.get(k).ok_or_else(|| err(0, format!("missing header key `{k}`")));
    let float = |k: &str| -> Result<f64, TrajectoryFileError> {
        get(k)?.trim().parse().map_err(|e| err(0, format!("header `{k}`: {e}")))
    };
    let version: u32 = get("format_version")?
        .trim()
        .parse()
        .map_err(|e| err(0, format!("header `format_version`: {e}")))?;
    if version != TRAJECTORY_FORMAT_VERSION {
        return Err(err(0, format!("unsupported format_version {version}")));
    }
    if get("agents")?.trim() != "2" {
        return Err(err(0, "agents must be 2".into()));
    }
    let dt = float("dt_s")?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(err(0, format!("dt_s must be > 0, got {dt}")));
    }
    let geom = TankGeometry::new(float("radius_cm")?).map_err(|e| err(0, e.to_string()))?;
    let sources = match header.get("sources") {
        None => [SourceTag::Recorded; 2],
        Some(s) => {
            let parts: Vec<Option<SourceTag>> = s.split(',').map(|p| parse_source(p.trim())).collect();
            match parts.as_slice() {
                [Some(a), Some(b)] => [*a, *b],
                _ => return Err(err(0, format!("bad sources `{s}`"))),
            }
        }
    };
    let [a, b] = rows;
    let ts = TrajectorySet {
        agents: [
            Trajectory {
                agent_id: 0,
                dt_s: dt,
                source: sources[0],
                samples: a,
            },
            Trajectory {
                agent_id: 1,
                dt_s: dt,
                source: sources[1],
                samples: b,
            },
        ],
        condition: get("condition")?.clone(),
        experiment_id: get("experiment_id")?.clone(),
        geom,
    };
    ts.validate()?;
    Ok(ts)
}

pub fn trajectory_set_from_str(s: &str) -> Result<TrajectorySet, TrajectoryFileError> {
    read_trajectory_set(s.as_bytes())
}
