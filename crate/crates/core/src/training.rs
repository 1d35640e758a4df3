//! Full-batch transductive training.
//!
//! Every epoch runs the whole hypergraph forward, takes the masked
//! cross-entropy over training vertices, backpropagates and applies one
//! optimizer step. Test accuracy is measured with dropout disabled.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{class_histogram, MultiModalDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{Model, ModelConfig, ModelParams};

/// RNG stream for parameter initialization.
pub const INIT_STREAM: u64 = 0;
/// RNG stream for dropout masks.
pub const DROPOUT_STREAM: u64 = 1;
/// RNG stream for resampled train/test splits.
pub const SPLIT_STREAM: u64 = 2;
/// RNG stream for balanced training subsets.
pub const BALANCED_STREAM: u64 = 3;

/// Seeded generator on an independent stream.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            optimizer: Optimizer::Adam,
            eval_every: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.eval_every == 0 {
            return Err(Error::Parameter(
                "epochs and eval_every must be positive".into(),
            ));
        }
        // lr = 0 is allowed: it freezes the parameters.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Parameter(format!(
                "weight_decay must be finite and >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub final_test_accuracy: f64,
    pub best_test_accuracy: f64,
    pub loss_curve: Vec<f64>,
    /// Wall-clock seconds.
    pub elapsed: f64,
    pub seed: u64,
}

/// Fraction of masked rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy(logits: &Matrix, labels: &[usize], mask: &[bool]) -> Result<f64> {
    if labels.len() != logits.rows() || mask.len() != logits.rows() {
        return Err(Error::shape(
            "accuracy",
            format!(
                "{} rows, {} labels, {} mask entries",
                logits.rows(),
                labels.len(),
                mask.len()
            ),
        ));
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for r in (0..logits.rows()).filter(|&r| mask[r]) {
        total += 1;
        let row = logits.row(r);
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        if !row.is_empty() && best == labels[r] {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(Error::Parameter("accuracy mask selects no rows".into()));
    }
    Ok(hits as f64 / total as f64)
}

/// Training and evaluation masks of the balanced protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancedSplit {
    pub train_mask: Vec<bool>,
    /// Every vertex not selected for training.
    pub eval_mask: Vec<bool>,
}

/// The smallest per-class count among labelled vertices.
pub fn default_per_class(labels: &[usize], train_mask: &[bool], n_classes: usize) -> usize {
    class_histogram(labels, train_mask, n_classes)
        .into_iter()
        .min()
        .unwrap_or(0)
}

/// Keeps exactly `per_class` uniformly chosen training vertices of each
/// class; all remaining vertices become the evaluation set.
pub fn balanced_subset<R: Rng + ?Sized>(
    labels: &[usize],
    train_mask: &[bool],
    n_classes: usize,
    per_class: usize,
    rng: &mut R,
) -> Result<BalancedSplit> {
    if per_class == 0 {
        return Err(Error::Parameter("per_class must be positive".into()));
    }
    if labels.len() != train_mask.len() {
        return Err(Error::shape(
            "balanced_subset",
            format!("{} labels, {} mask entries", labels.len(), train_mask.len()),
        ));
    }
    let hist = class_histogram(labels, train_mask, n_classes);
    if let Some((c, &have)) = hist.iter().enumerate().find(|&(_, &h)| h < per_class) {
        return Err(Error::Validation(format!(
            "class {c} has {have} labelled vertices, fewer than per_class = {per_class}"
        )));
    }
    let n = labels.len();
    let mut selected = vec![false; n];
    for c in 0..n_classes {
        let mut pool: Vec<usize> = (0..n).filter(|&v| train_mask[v] && labels[v] == c).collect();
        pool.shuffle(rng);
        for &v in &pool[..per_class] {
            selected[v] = true;
        }
    }
    let eval_mask = selected.iter().map(|s| !s).collect();
    Ok(BalancedSplit {
        train_mask: selected,
        eval_mask,
    })
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: i32,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let m: Vec<Matrix> = shapes.into_iter().map(|(r, c)| Matrix::zeros(r, c)).collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }

    pub fn step(&self) -> i32 {
        self.step
    }
}

/// One Adam update with decoupled weight decay (`p -= lr * wd * p` first).
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("param {:?}, grad {:?}", p.shape(), g.shape()),
            ));
        }
    }
    state.step += 1;
    let (b1, b2) = (AdamState::BETA1, AdamState::BETA2);
    let bc1 = 1.0 - b1.powi(state.step);
    let bc2 = 1.0 - b2.powi(state.step);
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            *w -= lr * weight_decay * *w;
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + AdamState::EPS);
        }
    }
    Ok(())
}

/// Plain gradient descent with the same decoupled weight decay.
pub fn sgd_step(params: &mut [&mut Matrix], grads: &[Matrix], lr: f64, weight_decay: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(
            "sgd_step",
            format!("{} params, {} grads", params.len(), grads.len()),
        ));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::shape("sgd_step", "param/grad shape mismatch"));
        }
        for (w, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * weight_decay * *w + lr * gv;
        }
    }
    Ok(())
}

/// A finished run and its final parameters.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub result: RunResult,
    pub initial_params: ModelParams,
    pub params: ModelParams,
    pub model: Model,
}

pub fn train(model_cfg: &ModelConfig, train_cfg: &TrainConfig, ds: &MultiModalDataset) -> Result<RunResult> {
    train_model(model_cfg, train_cfg, ds).map(|t| t.result)
}

pub fn train_model(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    ds: &MultiModalDataset,
) -> Result<TrainedModel> {
    train_cfg.validate()?;
    ds.validate()?;
    if !ds.train_mask.iter().any(|&b| b) || !ds.test_mask.iter().any(|&b| b) {
        return Err(Error::Validation("train and test masks must be non-empty".into()));
    }
    let start = Instant::now();
    let model = Model::new(model_cfg.clone(), ds)?;
    let mut init_rng = seeded_rng(model_cfg.seed, INIT_STREAM);
    let mut params = model.init_params(&mut init_rng)?;
    let initial_params = params.clone();
    let mut dropout_rng = seeded_rng(train_cfg.seed, DROPOUT_STREAM);
    let mut adam = AdamState::new(params.tensors().iter().map(|m| m.shape()));

    let mut loss_curve = Vec::with_capacity(train_cfg.epochs);
    let mut best = f64::NEG_INFINITY;
    let mut last = f64::NAN;
    let mut tape = Tape::new();
    for epoch in 1..=train_cfg.epochs {
        tape.clear();
        let pass = model.forward(&mut tape, &params, true, &mut dropout_rng)?;
        let loss = tape.softmax_cross_entropy(pass.logits, &ds.labels, &ds.train_mask)?;
        let loss_value = tape.value(loss).get(0, 0);
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!(
                "loss is {loss_value} at epoch {epoch}"
            )));
        }
        loss_curve.push(loss_value);
        let mut grads = tape.backward(loss)?;
        let grads: Vec<Matrix> = pass.params.iter().map(|&v| grads.take(v)).collect();
        {
            let mut tensors = params.tensors_mut();
            match train_cfg.optimizer {
                Optimizer::Adam => adam_step(
                    &mut tensors,
                    &grads,
                    &mut adam,
                    train_cfg.learning_rate,
                    train_cfg.weight_decay,
                )?,
                Optimizer::Sgd => sgd_step(
                    &mut tensors,
                    &grads,
                    train_cfg.learning_rate,
                    train_cfg.weight_decay,
                )?,
            }
        }

        if epoch % train_cfg.eval_every == 0 || epoch == train_cfg.epochs {
            let logits = model.logits(&params)?;
            last = accuracy(&logits, &ds.labels, &ds.test_mask)?;
            best = best.max(last);
        }
    }

    Ok(TrainedModel {
        result: RunResult {
            final_test_accuracy: last,
            best_test_accuracy: best,
            loss_curve,
            elapsed: start.elapsed().as_secs_f64(),
            seed: train_cfg.seed,
        },
        initial_params,
        params,
        model,
    })
}
