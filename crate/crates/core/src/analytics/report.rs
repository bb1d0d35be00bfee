use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    bootstrap_se, correlation, observable_pdfs, split_baseline, AgentStream, AnalyticsError, CorrelationCurve,
    CorrelationKind, ExperimentData, HellingerSet, Observable, Pdf,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub max_lag_s: f64,
    pub bootstrap_resamples: usize,
    pub baseline_draws: usize,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            max_lag_s: 30.0,
            bootstrap_resamples: 1000,
            baseline_draws: 200,
            seed: 0,
        }
    }
}

impl AnalysisOptions {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.max_lag_s.is_finite() && self.max_lag_s >= 0.0) {
            errs.push("analysis.max_lag_s must be finite and >= 0".into());
        }
        if self.bootstrap_resamples < 2 {
            errs.push("analysis.bootstrap_resamples must be >= 2".into());
        }
        if self.baseline_draws == 0 {
            errs.push("analysis.baseline_draws must be >= 1".into());
        }
        errs
    }
}

/// Experiments sharing one condition label.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionInput {
    pub label: String,
    pub experiments: Vec<ExperimentData>,
}

/// Pooled mean and SD of one observable, with bootstrap SEs over experiments.
/// The SEs are `None` with fewer than two experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub observable: Observable,
    pub condition: String,
    pub mean: f64,
    pub sd: f64,
    pub mean_se: Option<f64>,
    pub sd_se: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub experiments: Vec<String>,
    pub frames: usize,
    pub pdfs: Vec<Pdf>,
    pub correlations: Vec<CorrelationCurve>,
    pub stats: Vec<SummaryStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HellingerRow {
    pub left: String,
    pub right: String,
    pub values: Vec<(Observable, f64)>,
    pub mean: f64,
}

/// Split-baseline result for one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub condition: String,
    pub draws: usize,
    pub values: Vec<(Observable, f64)>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableReport {
    pub options: AnalysisOptions,
    pub conditions: Vec<ConditionReport>,
    pub comparisons: Vec<HellingerRow>,
    pub baselines: Vec<BaselineRow>,
}

/// Per-experiment moments, so a resample costs one pass over experiments.
#[derive(Clone, Copy)]
struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn of(xs: &[f64]) -> Self {
        Self {
            n: xs.len() as f64,
            sum: xs.iter().sum(),
            sum_sq: xs.iter().map(|x| x * x).sum(),
        }
    }

    fn pooled(parts: impl Iterator<Item = Moments>) -> (f64, f64) {
        let (mut n, mut s, mut q) = (0.0, 0.0, 0.0);
        for m in parts {
            n += m.n;
            s += m.sum;
            q += m.sum_sq;
        }
        let mean = s / n;
        let var = if n > 1.0 {
            ((q - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        (mean, var.sqrt())
    }
}

fn summary_stat(
    label: &str,
    experiments: &[ExperimentData],
    obs: Observable,
    opts: &AnalysisOptions,
) -> Result<SummaryStat, AnalyticsError> {
    let parts: Vec<Moments> = experiments.iter().map(|e| Moments::of(&e.values(obs))).collect();
    let samples = parts.iter().map(|m| m.n as usize).sum::<usize>();
    if samples < 2 {
        return Err(AnalyticsError::InsufficientData {
            what: format!("{} samples in {label}", obs.label()),
            found: samples,
            needed: 2,
        });
    }
    let (mean, sd) = Moments::pooled(parts.iter().copied());
    let (mean_se, sd_se) = if parts.len() >= 2 {
        // a resample drawing only sample-free experiments contributes nothing
        let stat = |pick: fn((f64, f64)) -> f64| {
            let parts = &parts;
            move |idx: &[usize]| {
                let p = Moments::pooled(idx.iter().map(|&i| parts[i]));
                if p.0.is_finite() {
                    pick(p)
                } else {
                    pick((mean, sd))
                }
            }
        };
        let n = parts.len();
        let r = opts.bootstrap_resamples;
        (
            Some(bootstrap_se(n, stat(|p| p.0), r, opts.seed)?),
            Some(bootstrap_se(n, stat(|p| p.1), r, opts.seed)?),
        )
    } else {
        (None, None)
    };
    Ok(SummaryStat {
        observable: obs,
        condition: label.to_string(),
        mean,
        sd,
        mean_se,
        sd_se,
        samples,
    })
}

fn condition_report(input: &ConditionInput, opts: &AnalysisOptions) -> Result<ConditionReport, AnalyticsError> {
    let exps = &input.experiments;
    let first = exps.first().ok_or_else(|| AnalyticsError::InsufficientData {
        what: format!("experiments in {}", input.label),
        found: 0,
        needed: 1,
    })?;
    let dt = first.dt_s;
    if let Some(e) = exps.iter().find(|e| (e.dt_s - dt).abs() > 1e-9 * dt) {
        return Err(AnalyticsError::Input(format!(
            "{}: experiment {} has dt {} s, {} has {} s",
            input.label, e.experiment_id, e.dt_s, first.experiment_id, dt
        )));
    }
    if let Some(e) = exps.iter().find(|e| e.condition != input.label) {
        return Err(AnalyticsError::Input(format!(
            "experiment {} is labelled {}, expected {}",
            e.experiment_id, e.condition, input.label
        )));
    }
    let refs: Vec<&ExperimentData> = exps.iter().collect();
    let pdfs = observable_pdfs(&refs)?;
    let streams: Vec<&AgentStream> = exps.iter().flat_map(|e| &e.streams).collect();
    let max_lag = (opts.max_lag_s / dt).round() as usize;
    let correlations = CorrelationKind::ALL
        .par_iter()
        .map(|&k| correlation(&streams, k, max_lag, dt))
        .collect::<Result<Vec<_>, _>>()?;
    let stats = Observable::ALL
        .par_iter()
        .map(|&obs| summary_stat(&input.label, exps, obs, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConditionReport {
        condition: input.label.clone(),
        experiments: exps.iter().map(|e| e.experiment_id.clone()).collect(),
        frames: exps.iter().map(|e| e.frames.len()).sum(),
        pdfs,
        correlations,
        stats,
    })
}

/// Full report: per-condition PDFs, correlations and stats, plus Hellinger
/// distances for every pair of conditions in input order.
pub fn summarize(inputs: &[ConditionInput], opts: &AnalysisOptions) -> Result<ObservableReport, AnalyticsError> {
    let errs = opts.validate();
    if !errs.is_empty() {
        return Err(AnalyticsError::Input(errs.join("; ")));
    }
    if inputs.is_empty() {
        return Err(AnalyticsError::InsufficientData {
            what: "conditions".into(),
            found: 0,
            needed: 1,
        });
    }
    let conditions = inputs
        .iter()
        .map(|c| condition_report(c, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let mut comparisons = Vec::new();
    for (i, a) in conditions.iter().enumerate() {
        for b in &conditions[i + 1..] {
            let h = HellingerSet::between(&a.pdfs, &b.pdfs)?;
            comparisons.push(HellingerRow {
                left: a.condition.clone(),
                right: b.condition.clone(),
                values: h.values,
                mean: h.mean,
            });
        }
    }
    Ok(ObservableReport {
        options: opts.clone(),
        conditions,
        comparisons,
        baselines: Vec::new(),
    })
}

impl ObservableReport {
    /// Add the split baseline of `input` to the report.
    pub fn add_baseline(&mut self, input: &ConditionInput) -> Result<(), AnalyticsError> {
        let h = split_baseline(&input.experiments, self.options.baseline_draws, self.options.seed)?;
        self.baselines.push(BaselineRow {
            condition: input.label.clone(),
            draws: self.options.baseline_draws,
            values: h.values,
            mean: h.mean,
        });
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text tables: summary statistics per condition, then Hellinger
    /// distances per comparison and baseline.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let fmt_se = |se: Option<f64>| se.map_or("-".to_string(), |s| format!("{s:.2}"));
        let _ = writeln!(
            out,
            "{:<10} {:<10} {:>10} {:>8} {:>10} {:>8}",
            "observable", "unit", "mean", "se", "sd", "se"
        );
        for c in &self.conditions {
            let _ = writeln!(
                out,
                "\n[{}] {} experiments, {} frames",
                c.condition,
                c.experiments.len(),
                c.frames
            );
            for s in &c.stats {
                let _ = writeln!(
                    out,
                    "{:<10} {:<10} {:>10.2} {:>8} {:>10.2} {:>8}",
                    s.observable.label(),
                    s.observable.unit(),
                    s.mean,
                    fmt_se(s.mean_se),
                    s.sd,
                    fmt_se(s.sd_se)
                );
            }
        }
        let mut cols: Vec<(String, &[(Observable, f64)], f64)> = self
            .comparisons
            .iter()
            .map(|r| (format!("{} vs {}", r.left, r.right), r.values.as_slice(), r.mean))
            .collect();
        cols.extend(
            self.baselines
                .iter()
                .map(|b| (format!("{} split", b.condition), b.values.as_slice(), b.mean)),
        );
        if !cols.is_empty() {
            let _ = writeln!(out, "\nHellinger distance");
            let _ = write!(out, "{:<10}", "");
            for (name, _, _) in &cols {
                let _ = write!(out, " {name:>24}");
            }
            let _ = writeln!(out);
            for (k, obs) in Observable::ALL.iter().enumerate() {
                let _ = write!(out, "{:<10}", obs.label());
                for (_, v, _) in &cols {
                    let _ = write!(out, " {:>24.3}", v[k].1);
                }
                let _ = writeln!(out);
            }
            let _ = write!(out, "{:<10}", "mean");
            for (_, _, m) in &cols {
                let _ = write!(out, " {m:>24.3}");
            }
            let _ = writeln!(out);
        }
        out
    }
}
