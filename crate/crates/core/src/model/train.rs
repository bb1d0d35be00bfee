//! Fitting network weights to observed accelerations.
//!
//! Targets come from inverting the Euler step, `a = (v(t+1) − v(t)) / Δt`.
//! Inputs are standardized per column while training and the
//! standardization is folded into the first layer of the returned weights,
//! so the result consumes raw windows like any other network.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    acceleration_from_velocities, build_pair_row, ModelError, NetworkWeights, DEFAULT_HIDDEN, MODEL_DT_S, ROW_WIDTH,
    WINDOW_LEN,
};
use crate::geometry::Vec2;
use crate::trajectory::TrajectorySet;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Multiplies the learning rate after every epoch.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub sequence_stride: usize,
    pub validation_fraction: f64,
    /// Global gradient-norm clip applied per batch.
    pub grad_clip: f64,
    pub hidden: [usize; 6],
    pub seed: u64,
    /// Also report the full training-split NLL after each epoch.
    pub evaluate_train: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            lr_decay: 1.0,
            batch_size: 64,
            epochs: 20,
            sequence_stride: 1,
            validation_fraction: 0.1,
            grad_clip: 10.0,
            hidden: [DEFAULT_HIDDEN; 6],
            seed: 0,
            evaluate_train: false,
        }
    }
}

impl TrainingConfig {
    /// All violations, one message each.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            errs.push(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            errs.push(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            errs.push(format!("lr_decay must be in (0, 1], got {}", self.lr_decay));
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be positive".into());
        }
        if self.epochs == 0 {
            errs.push("epochs must be positive".into());
        }
        if self.sequence_stride == 0 {
            errs.push("sequence_stride must be positive".into());
        }
        if !(0.0..=0.5).contains(&self.validation_fraction) {
            errs.push(format!(
                "validation_fraction must be in [0, 0.5], got {}",
                self.validation_fraction
            ));
        }
        if !(self.grad_clip > 0.0) {
            errs.push("grad_clip must be positive".into());
        }
        if self.hidden.contains(&0) {
            errs.push("hidden widths must be positive".into());
        }
        errs
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error(
        "trajectory '{experiment}' has dt = {found} s but training needs {expected} s; resample it with the ingest command first"
    )]
    WrongTimestep {
        experiment: String,
        found: f64,
        expected: f64,
    },
    #[error("training diverged at epoch {epoch}, batch {batch}: {reason}")]
    Diverged {
        epoch: usize,
        batch: usize,
        reason: String,
        /// Best weights seen before the failure.
        last_finite: Box<NetworkWeights>,
        metrics: Vec<EpochMetrics>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A flattened `5 × 11` window and the acceleration that followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: Vec<f64>,
    pub target: Vec2,
}

/// Sliding windows over both focal perspectives of a trajectory set.
///
/// A set with `n` samples per agent yields `n − 5` windows per perspective
/// at stride 1.
pub fn windows_from_set(ts: &TrajectorySet, stride: usize) -> Result<Vec<TrainingSample>, TrainError> {
    let dt = ts.dt_s();
    if (dt - MODEL_DT_S).abs() > 1e-9 {
        return Err(TrainError::WrongTimestep {
            experiment: ts.experiment_id.clone(),
            found: dt,
            expected: MODEL_DT_S,
        });
    }
    let n = ts.len();
    let mut out = Vec::new();
    if n < WINDOW_LEN + 1 {
        return Ok(out);
    }
    let states: Vec<Vec<[f64; 5]>> = ts
        .agents
        .iter()
        .map(|a| a.samples.iter().map(|s| (&s.state(&ts.geom)).into()).collect())
        .collect();
    for focal in 0..2 {
        let nb = 1 - focal;
        let mut t = WINDOW_LEN - 1;
        while t + 1 < n {
            let mut input = Vec::with_capacity(WINDOW_LEN * ROW_WIDTH);
            for k in t + 1 - WINDOW_LEN..=t {
                input.extend_from_slice(&build_pair_row(&states[focal][k], &states[nb][k]));
            }
            let s = &ts.agents[focal].samples;
            let target = acceleration_from_velocities(s[t].velocity, s[t + 1].velocity, dt);
            out.push(TrainingSample { input, target });
            t += stride;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochMetrics {
    /// 0 is the untrained network.
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean batch loss seen during the epoch (full-split loss at epoch 0).
    pub train_nll: f64,
    /// Full training-split NLL after the epoch, when requested.
    pub train_nll_full: Option<f64>,
    pub validation_nll: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights with the lowest validation NLL, epoch 0 included.
    pub weights: NetworkWeights,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
}

impl TrainOutcome {
    pub fn initial_validation_nll(&self) -> f64 {
        self.metrics[0].validation_nll
    }

    pub fn best_validation_nll(&self) -> f64 {
        self.metrics[self.best_epoch].validation_nll
    }
}

struct Normalizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Normalizer {
    fn identity() -> Self {
        Self {
            mean: vec![0.0; ROW_WIDTH],
            scale: vec![1.0; ROW_WIDTH],
        }
    }

    fn fit(samples: &[&TrainingSample]) -> Self {
        let mut sum = vec![0.0; ROW_WIDTH];
        let mut sq = vec![0.0; ROW_WIDTH];
        let mut n = 0.0;
        for s in samples {
            for row in s.input.chunks_exact(ROW_WIDTH) {
                for c in 0..ROW_WIDTH {
                    sum[c] += row[c];
                    sq[c] += row[c] * row[c];
                }
                n += 1.0;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let scale = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                if var > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        input
            .iter()
            .enumerate()
            .map(|(k, v)| (v - self.mean[k % ROW_WIDTH]) / self.scale[k % ROW_WIDTH])
            .collect()
    }
}

fn mean_loss(w: &NetworkWeights, data: &[(Vec<f64>, Vec2)]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (x, t) in data {
        total += w.loss(x, *t)?;
    }
    Ok(total / data.len() as f64)
}

/// Trains a network on `dataset`.
///
/// With `init = None` a fresh network is drawn from `cfg.seed`, its head
/// biased to the target mean and spread, and inputs are standardized. With
/// `init = Some(w)` training continues from `w` on raw inputs.
///
/// `on_epoch` sees the metrics of every epoch, including epoch 0.
pub fn train(
    dataset: &[TrainingSample],
    cfg: &TrainingConfig,
    init: Option<&NetworkWeights>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome, TrainError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(TrainError::Config(errs));
    }
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (cfg.validation_fraction * dataset.len() as f64).round() as usize;
    let n_val = n_val.min(dataset.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let train_refs: Vec<&TrainingSample> = train_idx.iter().map(|&i| &dataset[i]).collect();

    let (target_mean, target_sd) = target_moments(&train_refs);
    let (mut w, norm) = match init {
        Some(w) => (w.clone(), Normalizer::identity()),
        None => {
            let norm = Normalizer::fit(&train_refs);
            let mut w = NetworkWeights::random(cfg.hidden, &mut rng);
            w.set_head_bias(target_mean, target_sd);
            (w, norm)
        }
    };
    let gain = head_gain(&w, target_sd);

    let train_set: Vec<(Vec<f64>, Vec2)> = train_refs.iter().map(|s| (norm.apply(&s.input), s.target)).collect();
    let val_set: Vec<(Vec<f64>, Vec2)> = if val_idx.is_empty() {
        train_set.clone()
    } else {
        val_idx
            .iter()
            .map(|&i| (norm.apply(&dataset[i].input), dataset[i].target))
            .collect()
    };

    let export = |w: &NetworkWeights| {
        let mut out = w.clone();
        out.fold_input_normalization(&norm.mean, &norm.scale);
        out
    };

    let initial_train = mean_loss(&w, &train_set)?;
    let initial_val = mean_loss(&w, &val_set)?;
    let mut metrics = vec![EpochMetrics {
        epoch: 0,
        learning_rate: cfg.learning_rate,
        train_nll: initial_train,
        train_nll_full: Some(initial_train),
        validation_nll: initial_val,
    }];
    on_epoch(&metrics[0]);
    let mut best = (0usize, initial_val, w.clone());

    let n_params = w.param_count();
    let mut velocity = vec![0.0; n_params];
    let mut grad = vec![0.0; n_params];
    let mut idx: Vec<usize> = (0..train_set.len()).collect();
    let mut lr = cfg.learning_rate;

    for epoch in 1..=cfg.epochs {
        idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in idx.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let (x, t) = &train_set[i];
                match w.accumulate_gradient(x, *t, &mut grad) {
                    Ok(l) => batch_loss += l,
                    Err(ModelError::NonFinite { layer }) => {
                        return Err(diverged(
                            epoch,
                            b,
                            format!("non-finite activation in layer {layer}"),
                            export(&best.2),
                            metrics,
                        ))
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            let inv = 1.0 / batch.len() as f64;
            batch_loss *= inv;
            let mut norm_sq = 0.0;
            for (g, k) in grad.iter_mut().zip(&gain) {
                *g *= inv;
                norm_sq += k * *g * *g;
            }
            if !batch_loss.is_finite() || !norm_sq.is_finite() {
                return Err(diverged(
                    epoch,
                    b,
                    format!("loss {batch_loss}, gradient norm² {norm_sq}"),
                    export(&best.2),
                    metrics,
                ));
            }
            let clip = if norm_sq.sqrt() > cfg.grad_clip {
                cfg.grad_clip / norm_sq.sqrt()
            } else {
                1.0
            };
            for (((p, v), g), k) in w.params_mut().iter_mut().zip(&mut velocity).zip(&grad).zip(&gain) {
                *v = cfg.momentum * *v - lr * clip * k * g;
                *p += *v;
            }
            epoch_loss += batch_loss * batch.len() as f64;
        }
        let validation_nll = match mean_loss(&w, &val_set) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                return Err(diverged(
                    epoch,
                    0,
                    format!("validation loss {v}"),
                    export(&best.2),
                    metrics,
                ))
            }
            Err(e) => {
                return Err(diverged(epoch, 0, e.to_string(), export(&best.2), metrics));
            }
        };
        let train_nll_full = if cfg.evaluate_train {
            Some(mean_loss(&w, &train_set)?)
        } else {
            None
        };
        let m = EpochMetrics {
            epoch,
            learning_rate: lr,
            train_nll: epoch_loss / train_set.len() as f64,
            train_nll_full,
            validation_nll,
        };
        on_epoch(&m);
        metrics.push(m);
        if validation_nll <= best.1 {
            best = (epoch, validation_nll, w.clone());
        }
        lr *= cfg.lr_decay;
    }

    Ok(TrainOutcome {
        weights: export(&best.2),
        best_epoch: best.0,
        metrics,
    })
}

fn diverged(
    epoch: usize,
    batch: usize,
    reason: String,
    last_finite: NetworkWeights,
    metrics: Vec<EpochMetrics>,
) -> TrainError {
    TrainError::Diverged {
        epoch,
        batch,
        reason,
        last_finite: Box::new(last_finite),
        metrics,
    }
}

/// Per-parameter gradient multipliers. The head is trained as if its
/// outputs were in units of the target SD: a head row `W = s·W̃` updated by
/// SGD on `W̃` moves `W` by `s²` times the raw gradient step. Everything
/// else keeps a multiplier of 1.
fn head_gain(w: &NetworkWeights, target_sd: Vec2) -> Vec<f64> {
    let mut gain = vec![1.0; w.param_count()];
    let l = *w.layers().last().expect("network has layers");
    let off = w.param_count() - l.param_count();
    let scale = [target_sd.x, target_sd.x, target_sd.y, target_sd.y];
    for (r, s) in scale.iter().enumerate() {
        let k = s * s;
        gain[off + r * l.input..off + (r + 1) * l.input].fill(k);
        gain[off + l.output * l.input + r] = k;
    }
    gain
}

fn target_moments(samples: &[&TrainingSample]) -> (Vec2, Vec2) {
    let n = samples.len() as f64;
    let mean = samples.iter().fold(Vec2::ZERO, |acc, s| acc + s.target);
    let mean = (1.0 / n) * mean;
    let var = samples.iter().fold(Vec2::ZERO, |acc, s| {
        let d = s.target - mean;
        acc + Vec2::new(d.x * d.x, d.y * d.y)
    });
    let sd = Vec2::new((var.x / n).sqrt().max(1e-3), (var.y / n).sqrt().max(1e-3));
    (mean, sd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TankGeometry;
    use crate::model::PairStateSequence;
    use crate::trajectory::{SourceTag, Trajectory, TrajectorySample};
    use rand::Rng;

    fn noise_dataset(n: usize, seed: u64) -> Vec<TrainingSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| TrainingSample {
                input: (0..55).map(|_| rng.random_range(-20.0..20.0)).collect(),
                target: Vec2::new(
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                ),
            })
            .collect()
    }

    fn line_set(n: usize, dt: f64) -> TrajectorySet {
        let mk = |id: u32, y: f64| Trajectory {
            agent_id: id,
            dt_s: dt,
            source: SourceTag::Simulated,
            samples: (0..n)
                .map(|k| TrajectorySample {
                    t: k as f64 * dt,
                    position: Vec2::new(-10.0 + 0.1 * k as f64, y),
                    velocity: Vec2::new(0.5 + 0.01 * k as f64, 0.0),
                })
                .collect(),
        };
        TrajectorySet {
            agents: [mk(0, 1.0), mk(1, -1.0)],
            condition: "custom".into(),
            experiment_id: "line".into(),
            geom: TankGeometry::default(),
        }
    }

    #[test]
    fn window_count_and_targets() {
        let ts = line_set(40, MODEL_DT_S);
        let w = windows_from_set(&ts, 1).unwrap();
        assert_eq!(w.len(), (40 - 5) * 2);
        // velocities grow by 0.01 per step
        assert!((w[0].target.x - 0.01 / MODEL_DT_S).abs() < 1e-12);
        // the last row of the first window is the focal state at t = 4
        assert_eq!(w[0].input[44], -10.0 + 0.4);
        assert_eq!(w[0].input[45], 1.0);
        let strided = windows_from_set(&ts, 3).unwrap();
        assert_eq!(strided.len(), 2 * (35usize).div_ceil(3));
    }

    #[test]
    fn wrong_timestep_is_rejected() {
        let ts = line_set(40, 1.0 / 30.0);
        assert!(matches!(
            windows_from_set(&ts, 1),
            Err(TrainError::WrongTimestep { .. })
        ));
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let data = noise_dataset(50, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let init = NetworkWeights::random([4; 6], &mut rng);
        let cfg = TrainingConfig {
            learning_rate: 0.0,
            epochs: 1,
            hidden: [4; 6],
            ..Default::default()
        };
        let out = train(&data, &cfg, Some(&init), |_| {}).unwrap();
        assert_eq!(out.weights, init);
    }

    #[test]
    fn empty_and_bad_config() {
        assert!(matches!(
            train(&[], &TrainingConfig::default(), None, |_| {}),
            Err(TrainError::EmptyDataset)
        ));
        let cfg = TrainingConfig {
            batch_size: 0,
            validation_fraction: 0.7,
            ..Default::default()
        };
        match train(&noise_dataset(5, 0), &cfg, None, |_| {}) {
            Err(TrainError::Config(errs)) => assert_eq!(errs.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn divergence_returns_last_finite_weights() {
        let data = noise_dataset(200, 2);
        let cfg = TrainingConfig {
            learning_rate: 1e12,
            grad_clip: 1e12,
            epochs: 5,
            hidden: [4; 6],
            ..Default::default()
        };
        match train(&data, &cfg, None, |_| {}) {
            Err(TrainError::Diverged { last_finite, .. }) => {
                assert!(last_finite.params().iter().all(|p| p.is_finite()));
            }
            other => panic!("expected divergence, got {:?}", other.map(|o| o.metrics)),
        }
    }

    #[test]
    fn training_is_deterministic_and_never_worse() {
        let data = noise_dataset(300, 4);
        let cfg = TrainingConfig {
            epochs: 3,
            hidden: [6; 6],
            learning_rate: 1e-2,
            ..Default::default()
        };
        let a = train(&data, &cfg, None, |_| {}).unwrap();
        let b = train(&data, &cfg, None, |_| {}).unwrap();
        assert_eq!(a.weights, b.weights);
        assert!(a.best_validation_nll() <= a.initial_validation_nll());
        let seq = PairStateSequence::new([[1.0; 11]; 5]);
        assert!(a.weights.forward(&seq).unwrap().is_valid());
    }
}
