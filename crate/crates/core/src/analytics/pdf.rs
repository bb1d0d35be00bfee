use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Observable};

/// Minimum number of samples for a PDF estimate.
pub const MIN_PDF_SAMPLES: usize = 100;

/// Uniform bin grid over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl BinSpec {
    pub const fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self { lo, hi, bins }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = self.width();
        (0..=self.bins).map(|k| self.lo + k as f64 * w).collect()
    }

    /// Bin index for `x`, with out-of-range values folded into the edge bins.
    /// The second value is -1, 0 or 1 for below, inside and above the range.
    pub fn index(&self, x: f64) -> (usize, i8) {
        if x < self.lo {
            (0, -1)
        } else if x > self.hi {
            (self.bins - 1, 1)
        } else {
            let k = ((x - self.lo) / self.width()) as usize;
            (k.min(self.bins - 1), 0)
        }
    }
}

/// A normalized histogram on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pdf {
    pub observable: Option<Observable>,
    pub grid: BinSpec,
    /// Probability mass per bin; sums to 1.
    pub masses: Vec<f64>,
    pub sample_count: usize,
    pub clamped_below: usize,
    pub clamped_above: usize,
}

impl Pdf {
    /// A PDF from explicit masses, renormalized to sum to 1.
    pub fn from_masses(grid: BinSpec, masses: Vec<f64>) -> Result<Self, AnalyticsError> {
        if masses.len() != grid.bins || masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(AnalyticsError::Input(format!(
                "need {} finite non-negative masses, got {}",
                grid.bins,
                masses.len()
            )));
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(AnalyticsError::Input("masses sum to zero".into()));
        }
        Ok(Self {
            observable: None,
            grid,
            masses: masses.into_iter().map(|m| m / total).collect(),
            sample_count: 0,
            clamped_below: 0,
            clamped_above: 0,
        })
    }

    pub fn edges(&self) -> Vec<f64> {
        self.grid.edges()
    }

    /// Mass divided by bin width.
    pub fn densities(&self) -> Vec<f64> {
        let w = self.grid.width();
        self.masses.iter().map(|m| m / w).collect()
    }
}

/// Histogram `samples` on an arbitrary grid.
pub fn estimate_pdf_on(samples: &[f64], grid: BinSpec) -> Result<Pdf, AnalyticsError> {
    if !(grid.bins > 0 && grid.hi > grid.lo) {
        return Err(AnalyticsError::Input(format!("bad bin grid {grid:?}")));
    }
    if samples.len() < MIN_PDF_SAMPLES {
        return Err(AnalyticsError::InsufficientData {
            what: "pdf samples".into(),
            found: samples.len(),
            needed: MIN_PDF_SAMPLES,
        });
    }
    let mut counts = vec![0u64; grid.bins];
    let (mut below, mut above) = (0, 0);
    for &x in samples {
        if !x.is_finite() {
            return Err(AnalyticsError::Input(format!("non-finite sample {x}")));
        }
        let (k, side) = grid.index(x);
        counts[k] += 1;
        match side {
            -1 => below += 1,
            1 => above += 1,
            _ => {}
        }
    }
    let n = samples.len() as f64;
    Ok(Pdf {
        observable: None,
        grid,
        masses: counts.into_iter().map(|c| c as f64 / n).collect(),
        sample_count: samples.len(),
        clamped_below: below,
        clamped_above: above,
    })
}

/// Histogram `samples` on the canonical grid of `observable`.
pub fn estimate_pdf(samples: &[f64], observable: Observable) -> Result<Pdf, AnalyticsError> {
    let mut pdf = estimate_pdf_on(samples, observable.grid()).map_err(|e| match e {
        AnalyticsError::InsufficientData { found, needed, .. } => AnalyticsError::InsufficientData {
            what: format!("{} samples", observable.label()),
            found,
            needed,
        },
        e => e,
    })?;
    pdf.observable = Some(observable);
    Ok(pdf)
}

/// `H = 1 − Σ √(p_k q_k)`, clamped to `[0, 1]`.
pub fn hellinger(f: &Pdf, g: &Pdf) -> Result<f64, AnalyticsError> {
    if f.grid != g.grid {
        return Err(AnalyticsError::GridMismatch {
            left: f.grid,
            right: g.grid,
        });
    }
    if f.masses == g.masses {
        return Ok(0.0);
    }
    let bc: f64 = f.masses.iter().zip(&g.masses).map(|(p, q)| (p * q).sqrt()).sum();
    Ok((1.0 - bc).clamp(0.0, 1.0))
}
