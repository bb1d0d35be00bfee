use serde::{Deserialize, Serialize};

use super::{AgentStream, AnalyticsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    /// Mean-squared displacement `⟨|u(t'+t) − u(t')|²⟩`.
    Displacement,
    /// Velocity autocorrelation `⟨v(t'+t)·v(t')⟩`.
    Velocity,
    /// `⟨cos(θ_w(t'+t) − θ_w(t'))⟩` over frames where both angles exist.
    WallAngle,
}

impl CorrelationKind {
    pub const ALL: [CorrelationKind; 3] = [
        CorrelationKind::Displacement,
        CorrelationKind::Velocity,
        CorrelationKind::WallAngle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CorrelationKind::Displacement => "C_X",
            CorrelationKind::Velocity => "C_V",
            CorrelationKind::WallAngle => "C_theta_w",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub kind: CorrelationKind,
    pub dt_s: f64,
    /// Value at lag `k · dt_s`, starting at lag 0.
    pub values: Vec<f64>,
    /// Number of `(t', stream)` pairs averaged at each lag.
    pub counts: Vec<u64>,
}

impl CorrelationCurve {
    pub fn lags_s(&self) -> Vec<f64> {
        (0..self.values.len()).map(|k| k as f64 * self.dt_s).collect()
    }
}

/// Average the kernel of `kind` over every reference time of every stream,
/// for lags `0..=max_lag_steps`.
pub fn correlation(
    streams: &[&AgentStream],
    kind: CorrelationKind,
    max_lag_steps: usize,
    dt_s: f64,
) -> Result<CorrelationCurve, AnalyticsError> {
    if streams.is_empty() {
        return Err(AnalyticsError::InsufficientData {
            what: "correlation streams".into(),
            found: 0,
            needed: 1,
        });
    }
    if let Some(s) = streams.iter().find(|s| s.len() <= max_lag_steps) {
        return Err(AnalyticsError::Input(format!(
            "max lag of {max_lag_steps} steps needs streams longer than that, one has {} samples",
            s.len()
        )));
    }
    let mut sums = vec![0.0; max_lag_steps + 1];
    let mut counts = vec![0u64; max_lag_steps + 1];
    for s in streams {
        let n = s.len();
        for lag in 0..=max_lag_steps {
            let (mut acc, mut c) = (0.0, 0u64);
            match kind {
                CorrelationKind::Displacement => {
                    for t in 0..n - lag {
                        acc += (s.positions[t + lag] - s.positions[t]).norm_squared();
                    }
                    c = (n - lag) as u64;
                }
                CorrelationKind::Velocity => {
                    for t in 0..n - lag {
                        acc += s.velocities[t + lag].dot(s.velocities[t]);
                    }
                    c = (n - lag) as u64;
                }
                CorrelationKind::WallAngle => {
                    for t in 0..n - lag {
                        if let (Some(a), Some(b)) = (s.wall_angles[t], s.wall_angles[t + lag]) {
                            acc += (b - a).to_radians().cos();
                            c += 1;
                        }
                    }
                }
            }
            sums[lag] += acc;
            counts[lag] += c;
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect();
    Ok(CorrelationCurve {
        kind,
        dt_s,
        values,
        counts,
    })
}

/// `½ · d²C_X/dt²` on the lag grid by central differences, using the even
/// symmetry `C_X(−t) = C_X(t)` at lag 0. Comparable to `C_V` lag by lag up
/// to the second-to-last lag.
pub fn half_second_derivative(c_x: &CorrelationCurve) -> Vec<f64> {
    let v = &c_x.values;
    let h2 = c_x.dt_s * c_x.dt_s;
    (0..v.len().saturating_sub(1))
        .map(|k| {
            let prev = if k == 0 { v[1] } else { v[k - 1] };
            0.5 * (v[k + 1] - 2.0 * v[k] + prev) / h2
        })
        .collect()
}
