//! Learning-rate schedule, SGD-momentum and LARS updates, and the
//! two-view contrastive pre-training loop.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data_augment::{two_views, Augmenter, LabeledVectors};
use crate::error::{ensure_dim, Error, Result};
use crate::eval::pairwise_similarity_stats;
use crate::losses::{self, LossConfig, LossKind, SimilarityMode};
use crate::model::{backward, forward, init_params, ModelGrads, ModelSpec, ModelState, TensorKind};
use crate::numerics::{norm2, pairwise_sum_by, Mat64, Rng};
use crate::pairing::build_pairs;
use crate::par;

const SHUFFLE_TAG: u64 = 0x7368_7566;

/// Denominator offset of the LARS trust ratio.
pub const LARS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Lars,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub schedule_horizon: usize,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub trust_coefficient: f64,
    pub loss: LossKind,
    pub tau: f64,
    pub lambda: f64,
    pub similarity: SimilarityMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 100,
            base_lr: 1.5,
            warmup_epochs: 10,
            schedule_horizon: 1000,
            optimizer: OptimizerKind::Lars,
            momentum: 0.9,
            trust_coefficient: 0.001,
            loss: LossKind::MioL2,
            tau: 0.5,
            lambda: 1.0,
            similarity: SimilarityMode::Cosine,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, why: String| Err(Error::domain(format!("{field}: {why}")));
        if self.batch_size == 0 {
            return fail("batch_size", "must be at least 1".into());
        }
        if self.loss == LossKind::Infonce && self.batch_size < 2 {
            return fail("batch_size", "infonce needs at least 2".into());
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return fail(
                "base_lr",
                format!("must be finite and > 0, got {}", self.base_lr),
            );
        }
        if self.warmup_epochs >= self.schedule_horizon {
            return fail(
                "warmup_epochs",
                format!(
                    "must be below schedule_horizon ({} >= {})",
                    self.warmup_epochs, self.schedule_horizon
                ),
            );
        }
        if self.epochs > self.schedule_horizon {
            return fail(
                "epochs",
                format!(
                    "must not exceed schedule_horizon ({} > {})",
                    self.epochs, self.schedule_horizon
                ),
            );
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(
                "momentum",
                format!("must lie in [0, 1), got {}", self.momentum),
            );
        }
        if !(self.trust_coefficient.is_finite() && self.trust_coefficient > 0.0) {
            return fail(
                "trust_coefficient",
                format!("must be > 0, got {}", self.trust_coefficient),
            );
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return fail("tau", format!("must be finite and > 0, got {}", self.tau));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return fail(
                "lambda",
                format!("must be finite and >= 0, got {}", self.lambda),
            );
        }
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            tau: self.tau,
            lambda: self.lambda,
            mode: self.similarity,
        }
    }
}

/// Learning rate at a (possibly fractional) epoch.
///
/// Linear warmup `base · min(1, (e + 1) / W)` below `W`, then cosine decay
/// `base · ½(1 + cos(π (e − W) / (H − W)))` down to zero at the horizon.
pub fn lr_at(cfg: &TrainConfig, epoch: f64) -> Result<f64> {
    let horizon = cfg.schedule_horizon as f64;
    let warmup = cfg.warmup_epochs as f64;
    if !(0.0..=horizon).contains(&epoch) {
        return Err(Error::domain(format!(
            "epoch {epoch} is outside [0, {horizon}]"
        )));
    }
    if warmup >= horizon {
        return Err(Error::domain(
            "warmup_epochs must be below schedule_horizon",
        ));
    }
    if epoch < warmup {
        return Ok(cfg.base_lr * ((epoch + 1.0) / warmup).min(1.0));
    }
    let progress = (epoch - warmup) / (horizon - warmup);
    Ok(cfg.base_lr * 0.5 * (1.0 + (PI * progress).cos()))
}

/// `v ← μ v + g; θ ← θ − lr · v`.
pub fn sgd_update(
    theta: &mut [f64],
    grad: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    ensure_dim("sgd gradient", theta.len(), grad.len())?;
    ensure_dim("sgd velocity", theta.len(), velocity.len())?;
    for ((t, g), v) in theta.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *t -= lr * *v;
    }
    Ok(())
}

/// Trust ratio `η ‖θ‖ / (‖g‖ + ε)`, or 1 when `‖θ‖ = 0`.
pub fn lars_local_lr(theta: &[f64], grad: &[f64], trust_coefficient: f64) -> f64 {
    let w = norm2(theta);
    if w == 0.0 {
        return 1.0;
    }
    trust_coefficient * w / (norm2(grad) + LARS_EPS)
}

/// One LARS update of a single tensor: `v ← μ v + local · g; θ ← θ − lr · v`.
pub fn lars_update(
    theta: &mut [f64],
    grad: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
    trust_coefficient: f64,
) -> Result<()> {
    ensure_dim("lars gradient", theta.len(), grad.len())?;
    ensure_dim("lars velocity", theta.len(), velocity.len())?;
    let local = lars_local_lr(theta, grad, trust_coefficient);
    for ((t, g), v) in theta.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v + local * g;
        *t -= lr * *v;
    }
    Ok(())
}

fn check_shapes(state: &ModelState, grads: &ModelGrads, velocity: &ModelState) -> Result<()> {
    let s = state.tensors();
    let g = grads.tensors();
    let v = velocity.tensors();
    ensure_dim("gradient tensors", s.len(), g.len())?;
    ensure_dim("velocity tensors", s.len(), v.len())?;
    for ((a, b), c) in s.iter().zip(&g).zip(&v) {
        ensure_dim("gradient tensor size", a.values.len(), b.values.len())?;
        ensure_dim("velocity tensor size", a.values.len(), c.values.len())?;
    }
    Ok(())
}

/// SGD with momentum over every tensor.
pub fn sgd_step(
    state: &mut ModelState,
    grads: &ModelGrads,
    lr: f64,
    momentum: f64,
    velocity: &mut ModelState,
) -> Result<()> {
    check_shapes(state, grads, velocity)?;
    for ((t, g), v) in state
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(velocity.tensors_mut())
    {
        sgd_update(t.values, g.values, v.values, lr, momentum)?;
    }
    Ok(())
}

/// LARS: weight tensors get their own trust ratio; biases use plain
/// momentum SGD.
pub fn lars_step(
    state: &mut ModelState,
    grads: &ModelGrads,
    lr: f64,
    momentum: f64,
    trust_coefficient: f64,
    velocity: &mut ModelState,
) -> Result<()> {
    check_shapes(state, grads, velocity)?;
    for ((t, g), v) in state
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(velocity.tensors_mut())
    {
        match t.kind {
            TensorKind::Weight => lars_update(
                t.values,
                g.values,
                v.values,
                lr,
                momentum,
                trust_coefficient,
            )?,
            TensorKind::Bias => sgd_update(t.values, g.values, v.values, lr, momentum)?,
        }
    }
    Ok(())
}

/// Optimizer kind plus its velocity buffers.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    momentum: f64,
    trust_coefficient: f64,
    velocity: ModelState,
}

impl Optimizer {
    pub fn new(cfg: &TrainConfig, spec: &ModelSpec) -> Self {
        Self {
            kind: cfg.optimizer,
            momentum: cfg.momentum,
            trust_coefficient: cfg.trust_coefficient,
            velocity: ModelState::zeros_like(spec),
        }
    }

    pub fn step(&mut self, state: &mut ModelState, grads: &ModelGrads, lr: f64) -> Result<()> {
        match self.kind {
            OptimizerKind::SgdMomentum => {
                sgd_step(state, grads, lr, self.momentum, &mut self.velocity)
            }
            OptimizerKind::Lars => lars_step(
                state,
                grads,
                lr,
                self.momentum,
                self.trust_coefficient,
                &mut self.velocity,
            ),
        }
    }
}

/// Batch-averaged statistics of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    pub loss: f64,
    /// Mean cosine similarity of positive pairs.
    pub pos_sim: f64,
    /// Mean cosine similarity of negative pairs.
    pub neg_sim: f64,
    /// Learning rate at the start of the epoch.
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ModelState,
    pub metrics: Vec<MetricsRow>,
}

struct BatchResult {
    loss: f64,
    pos_sim: f64,
    neg_sim: f64,
}

fn similarity_extrema(z: &Mat64, mode: SimilarityMode) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..z.rows() {
        for j in 0..z.rows() {
            if i == j {
                continue;
            }
            let d: f64 = z.row(i).iter().zip(z.row(j)).map(|(a, b)| a * b).sum();
            let c = match mode {
                SimilarityMode::Dot => d,
                SimilarityMode::Cosine => d / (norm2(z.row(i)) * norm2(z.row(j))),
            };
            if c.is_nan() {
                return (f64::NAN, f64::NAN);
            }
            lo = lo.min(c);
            hi = hi.max(c);
        }
    }
    (lo, hi)
}

#[allow(clippy::too_many_arguments)]
fn train_batch<A: Augmenter + ?Sized>(
    cfg: &TrainConfig,
    spec: &ModelSpec,
    state: &mut ModelState,
    optimizer: &mut Optimizer,
    data: &LabeledVectors,
    indices: &[usize],
    aug: &A,
    epoch: usize,
    batch: usize,
    lr: f64,
) -> Result<BatchResult> {
    let n = indices.len();
    let views = par::try_map_indexed(n, |k| {
        let idx = indices[k];
        two_views(
            aug,
            data.features.row(idx),
            cfg.seed,
            epoch as u64,
            idx as u64,
        )
    })?;
    let width = data.dim();
    let mut x = Vec::with_capacity(2 * n * width);
    for (a, b) in &views {
        x.extend_from_slice(a);
        x.extend_from_slice(b);
    }
    let x = Mat64::new(2 * n, width, x)?;
    let pairs = build_pairs(n)?;
    let trace = forward(state, spec, &x)?;
    let z = trace.z();

    let diverged = |what: &str| {
        let (min_similarity, max_similarity) = similarity_extrema(z, cfg.similarity);
        Error::Divergence {
            epoch,
            batch,
            what: what.to_string(),
            min_similarity,
            max_similarity,
        }
    };
    if !z.is_finite() {
        return Err(diverged("non-finite projector output"));
    }
    let report =
        losses::evaluate(cfg.loss, z, &pairs, &cfg.loss_config()).map_err(|e| match e {
            Error::DegenerateVector { .. } => diverged("zero-norm feature vector"),
            other => other,
        })?;
    if !report.value.is_finite() || !report.grad().is_finite() {
        return Err(diverged("non-finite loss"));
    }
    let grads = backward(state, spec, &trace, report.grad())?;
    if !grads.is_finite() {
        return Err(diverged("non-finite parameter gradient"));
    }
    let stats = pairwise_similarity_stats(z, &pairs)?;
    optimizer.step(state, &grads, lr)?;
    Ok(BatchResult {
        loss: report.value,
        pos_sim: stats.mean_pos,
        neg_sim: stats.mean_neg,
    })
}

/// Self-supervised pre-training from a fresh He initialization.
///
/// `on_epoch` sees every metrics row together with the current state, so
/// callers can stream CSV rows and checkpoints.
pub fn pretrain<A, F>(
    cfg: &TrainConfig,
    data: &LabeledVectors,
    spec: &ModelSpec,
    aug: &A,
    on_epoch: F,
) -> Result<TrainOutcome>
where
    A: Augmenter + ?Sized,
    F: FnMut(&MetricsRow, &ModelState) -> Result<()>,
{
    let state = init_params(spec, cfg.seed)?;
    pretrain_from(cfg, data, spec, aug, state, on_epoch)
}

/// Pre-training starting from `state`.
pub fn pretrain_from<A, F>(
    cfg: &TrainConfig,
    data: &LabeledVectors,
    spec: &ModelSpec,
    aug: &A,
    mut state: ModelState,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    A: Augmenter + ?Sized,
    F: FnMut(&MetricsRow, &ModelState) -> Result<()>,
{
    cfg.validate()?;
    spec.validate()?;
    state.check(spec)?;
    ensure_dim("dataset width", spec.encoder.input_dim(), data.dim())?;
    if data.is_empty() {
        return Err(Error::domain("the training set is empty"));
    }
    if cfg.batch_size > data.len() {
        return Err(Error::domain(format!(
            "batch_size: {} exceeds the dataset size {}",
            cfg.batch_size,
            data.len()
        )));
    }

    let batches = data.len() / cfg.batch_size;
    let mut optimizer = Optimizer::new(cfg, spec);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let order = Rng::derive(cfg.seed, &[SHUFFLE_TAG, epoch as u64]).permutation(data.len());
        let mut results = Vec::with_capacity(batches);
        for b in 0..batches {
            let lr = lr_at(cfg, epoch as f64 + b as f64 / batches as f64)?;
            let indices = &order[b * cfg.batch_size..(b + 1) * cfg.batch_size];
            results.push(train_batch(
                cfg,
                spec,
                &mut state,
                &mut optimizer,
                data,
                indices,
                aug,
                epoch,
                b,
                lr,
            )?);
            step += 1;
        }
        let mean = |f: fn(&BatchResult) -> f64| {
            pairwise_sum_by(results.len(), |i| f(&results[i])) / results.len() as f64
        };
        let row = MetricsRow {
            epoch,
            step,
            loss: mean(|r| r.loss),
            pos_sim: mean(|r| r.pos_sim),
            neg_sim: mean(|r| r.neg_sim),
            lr: lr_at(cfg, epoch as f64)?,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&row, &state)?;
        metrics.push(row);
    }
    Ok(TrainOutcome { state, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainConfig {
        TrainConfig::default()
    }

    #[test]
    fn schedule_boundaries() {
        let c = cfg();
        assert_eq!(lr_at(&c, 10.0).unwrap(), 1.5);
        assert_eq!(lr_at(&c, 1000.0).unwrap(), 0.0);
        assert!((lr_at(&c, 505.0).unwrap() - 0.75).abs() < 1e-15);
        assert!((lr_at(&c, 0.0).unwrap() - 0.15).abs() < 1e-15);
        assert!(lr_at(&c, -0.1).is_err());
        assert!(lr_at(&c, 1000.5).is_err());
    }

    #[test]
    fn schedule_is_continuous_at_warmup_end() {
        let c = cfg();
        let left = lr_at(&c, 10.0 - 1e-9).unwrap();
        let right = lr_at(&c, 10.0).unwrap();
        assert!((left - right).abs() <= 1e-12 * c.base_lr);
    }

    #[test]
    fn sgd_examples() {
        let mut theta = [0.0];
        let mut v = [0.0];
        sgd_update(&mut theta, &[1.0], &mut v, 1.0, 0.0).unwrap();
        assert_eq!(theta, [-1.0]);

        let mut theta = [2.0, -1.0];
        let mut v = [0.5, 0.25];
        sgd_update(&mut theta, &[0.0, 0.0], &mut v, 0.1, 0.9).unwrap();
        assert_eq!(v, [0.45, 0.225]);
        assert!((theta[0] - (2.0 - 0.1 * 0.45)).abs() < 1e-15);

        // v1 = g, v2 = 0.9 g + g; θ = −lr (v1 + v2).
        let mut theta = [0.0];
        let mut v = [0.0];
        for _ in 0..2 {
            sgd_update(&mut theta, &[2.0], &mut v, 0.5, 0.9).unwrap();
        }
        assert!((theta[0] - -(0.5 * 2.0 + 0.5 * 3.8)).abs() < 1e-15);
    }

    #[test]
    fn lars_examples() {
        let mut theta = [3.0, 4.0];
        let grad = [0.0, 5.0];
        assert!((lars_local_lr(&theta, &grad, 0.001) - 0.001).abs() < 1e-9);
        let mut v = [0.0, 0.0];
        lars_update(&mut theta, &grad, &mut v, 1.0, 0.9, 0.001).unwrap();
        assert_eq!(theta[0], 3.0);
        assert!((theta[1] - 3.995).abs() < 1e-15);

        let mut zero = [0.0, 0.0];
        assert_eq!(lars_local_lr(&zero, &grad, 0.001), 1.0);
        let mut v = [0.0, 0.0];
        lars_update(&mut zero, &grad, &mut v, 0.1, 0.0, 0.001).unwrap();
        assert!((zero[1] - -0.5).abs() < 1e-15);

        let mut theta = [1.0, -2.0];
        let mut v = [0.0, 0.0];
        lars_update(&mut theta, &[0.0, 0.0], &mut v, 1.0, 0.9, 0.001).unwrap();
        assert_eq!(theta, [1.0, -2.0]);
    }

    #[test]
    fn config_validation_names_fields() {
        let mut c = cfg();
        c.tau = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("tau"));
        c = cfg();
        c.epochs = 2000;
        assert!(c.validate().unwrap_err().to_string().contains("epochs"));
        c = cfg();
        c.warmup_epochs = 1000;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("warmup_epochs"));
    }
}
