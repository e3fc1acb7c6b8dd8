//! Training objectives, the optimiser, and adaptive graph sparsification:
//! pretraining, magnitude-ranked progressive gating, and L0-driven pruning.
//!
//! The sparsifier runs in three phases. A dense model is pretrained on the
//! plain prediction loss. Off-diagonal edges are then ranked once by the
//! pretrained adjacency magnitude; everything outside the lowest
//! `s_g` fraction is frozen as kept, and the prune candidates are activated
//! in per-iteration quanta as stochastic hard-concrete gates whose expected
//! L0 mass is penalised. Candidates whose noise-free gate falls below 0.5
//! freeze to pruned. Once the whole candidate set has frozen, the penalty
//! is constant and the remaining iterations of the `n2` budget train the
//! weights against the settled mask, recovering the accuracy lost to edge
//! removal. Diagonal entries are never candidates, so every node always
//! sees its own history.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use indexmap::IndexMap;

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::graph::{self, EdgeMask, EdgeState, GateParams};
use crate::metrics::{compute_metrics, MetricReport, DEFAULT_MAPE_EPSILON};
use crate::model::Model;
use crate::tensor::{Gradients, ParamSet, Tensor};

fn default_s_g() -> f64 {
    0.99
}
fn default_lambda() -> f64 {
    1e-4
}
fn default_n1() -> usize {
    400
}
fn default_n2() -> usize {
    200
}
fn default_lr() -> f64 {
    3e-3
}
fn default_batch() -> usize {
    8
}
fn default_patience() -> usize {
    15
}
fn default_val_every() -> usize {
    1
}

/// Budgets and knobs shared by pretraining, sparsification and the
/// reinitialise-and-retrain control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsifyConfig {
    /// Target fraction of off-diagonal edges to prune.
    #[serde(default = "default_s_g")]
    pub s_g: f64,
    /// Weight on the expected-L0 penalty.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Pretraining steps (one minibatch each).
    #[serde(default = "default_n1")]
    pub n1: usize,
    /// Sparsification steps; the loop always runs this many, so the budget
    /// covers both closing the gates and re-training against the settled
    /// mask afterwards.
    #[serde(default = "default_n2")]
    pub n2: usize,
    /// Fraction of off-diagonal edges activated as candidates per step;
    /// `None` uses `s_g / 20` (twenty linear phases).
    #[serde(default)]
    pub p_g: Option<f64>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Validation checks without improvement before training stops early;
    /// 0 disables early stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Run validation every this many iterations.
    #[serde(default = "default_val_every")]
    pub val_every: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SparsifyConfig {
    fn default() -> SparsifyConfig {
        SparsifyConfig {
            s_g: default_s_g(),
            lambda: default_lambda(),
            n1: default_n1(),
            n2: default_n2(),
            p_g: None,
            lr: default_lr(),
            batch_size: default_batch(),
            patience: default_patience(),
            val_every: default_val_every(),
            seed: 0,
        }
    }
}

impl SparsifyConfig {
    /// Candidate-activation fraction per sparsification step.
    pub fn quantum_fraction(&self) -> f64 {
        self.p_g.unwrap_or(self.s_g / 20.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.s_g) {
            return Err(Error::config(format!("s_g must lie in [0, 1], got {}", self.s_g)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.val_every == 0 {
            return Err(Error::config("val_every must be >= 1"));
        }
        if let Some(p) = self.p_g {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::config(format!("p_g must lie in (0, 1], got {p}")));
            }
        }
        if self.s_g > 0.0 && self.quantum_fraction() * self.n2 as f64 + 1e-12 < self.s_g {
            return Err(Error::config(format!(
                "target sparsity {} is unreachable: {} steps activating {} each cover only {}",
                self.s_g,
                self.n2,
                self.quantum_fraction(),
                self.quantum_fraction() * self.n2 as f64
            )));
        }
        Ok(())
    }
}

/// One training-loop row: loss on the optimised batch, mask sparsity, and
/// validation metrics when this iteration ran validation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: usize,
    pub loss: f64,
    pub sparsity: f64,
    pub val_mae: Option<f64>,
    pub val_rmse: Option<f64>,
    pub val_mape: Option<f64>,
}

/// Per-iteration training trace plus outcome flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
    /// Sparsification ran out of iterations before reaching `s_g`.
    pub target_missed: bool,
    /// Validation patience ran out before the iteration budget.
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn final_sparsity(&self) -> f64 {
        self.records.last().map(|r| r.sparsity).unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("iteration,loss,sparsity,val_mae,val_rmse,val_mape\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iteration,
                r.loss,
                r.sparsity,
                opt(r.val_mae),
                opt(r.val_rmse),
                opt(r.val_mape)
            ));
        }
        out
    }
}

/// Mean absolute error over a batch of prediction matrices: the per-node L1
/// norm summed over every sample and node, normalised by samples x nodes.
pub fn loss_prediction(preds: &[Tensor], targets: &[Tensor]) -> Result<Tensor> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::shape(
            "loss_prediction",
            format!("{} predictions against {} targets", preds.len(), targets.len()),
        ));
    }
    let nodes = preds[0].shape()[0];
    let mut total: Option<Tensor> = None;
    for (p, t) in preds.iter().zip(targets) {
        if p.shape() != t.shape() || p.shape()[0] != nodes {
            return Err(Error::shape(
                "loss_prediction",
                format!("prediction {:?} against target {:?}", p.shape(), t.shape()),
            ));
        }
        let l1 = p.sub(t)?.abs()?.sum_all()?;
        total = Some(match total {
            Some(acc) => acc.add(&l1)?,
            None => l1,
        });
    }
    total.expect("nonempty batch").scale(1.0 / (preds.len() * nodes) as f64)
}

/// Sparsification objective: prediction loss plus `lambda` times the
/// expected number of surviving edges. With `lambda == 0` this is the
/// prediction loss itself, bit for bit.
pub fn loss_ags(
    preds: &[Tensor],
    targets: &[Tensor],
    gate_logits: &Tensor,
    gate: &GateParams,
    mask: &EdgeMask,
    lambda: f64,
) -> Result<Tensor> {
    let prediction = loss_prediction(preds, targets)?;
    if lambda == 0.0 {
        return Ok(prediction);
    }
    if lambda < 0.0 {
        return Err(Error::config(format!("lambda must be >= 0, got {lambda}")));
    }
    prediction.add(&graph::expected_l0(gate_logits, gate, mask)?.scale(lambda)?)
}

/// Adaptive moment estimation with bias correction. State is keyed by
/// parameter name; parameters the loss never touched receive zero gradients
/// and stay put.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: IndexMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, moments: IndexMap::new() }
    }

    /// Apply one update to every trainable parameter.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<()> {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut updates: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
        for (name, tensor, grad) in params.gradients(grads) {
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; grad.len()], vec![0.0; grad.len()]));
            let mut data = tensor.to_vec();
            for i in 0..grad.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                data[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
            updates.push((name.to_string(), tensor.shape().to_vec(), data));
        }
        for (name, shape, data) in updates {
            params.replace(&name, Tensor::var(&shape, data)?)?;
        }
        Ok(())
    }
}

/// Epoch-shuffled index cycling: every window is visited once per epoch, in
/// an order reshuffled at each epoch boundary.
struct BatchCycle {
    order: Vec<usize>,
    pos: usize,
}

impl BatchCycle {
    fn new(len: usize) -> BatchCycle {
        BatchCycle { order: (0..len).collect(), pos: len }
    }

    fn take(&mut self, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            if self.pos >= self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn batch_outputs(
    model: &Model,
    mask_values: &Tensor,
    windows: &[WindowSample],
    idx: &[usize],
) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    let mut preds = Vec::with_capacity(idx.len());
    let mut targets = Vec::with_capacity(idx.len());
    for &i in idx {
        preds.push(model.forward(&windows[i].history, mask_values)?);
        targets.push(windows[i].target_matrix()?);
    }
    Ok((preds, targets))
}

fn validation_metrics(
    model: &Model,
    mask_values: &Tensor,
    val: &[WindowSample],
) -> Result<Option<MetricReport>> {
    if val.is_empty() {
        return Ok(None);
    }
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for w in val {
        preds.extend_from_slice(model.forward(&w.history, mask_values)?.data());
        targets.extend_from_slice(w.target_matrix()?.data());
    }
    compute_metrics(&preds, &targets, DEFAULT_MAPE_EPSILON).map(Some)
}

fn record(
    iteration: usize,
    loss: f64,
    sparsity: f64,
    metrics: &Option<MetricReport>,
) -> TrainRecord {
    TrainRecord {
        iteration,
        loss,
        sparsity,
        val_mae: metrics.as_ref().map(|m| m.mae),
        val_rmse: metrics.as_ref().map(|m| m.rmse),
        val_mape: metrics.as_ref().and_then(|m| m.mape),
    }
}

fn train_loop(
    start: &Model,
    mask_values: &Tensor,
    train: &[WindowSample],
    val: &[WindowSample],
    iterations: usize,
    sparsity: f64,
    config: &SparsifyConfig,
) -> Result<(Model, TrainLog)> {
    if train.is_empty() {
        return Err(Error::config("training requires at least one window"));
    }
    let mut work = start.clone();
    let mut adam = Adam::new(config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cycle = BatchCycle::new(train.len());
    let mut best: Option<(f64, ParamSet)> = None;
    let mut stale = 0usize;
    let mut log = TrainLog::default();

    for iteration in 0..iterations {
        let idx = cycle.take(config.batch_size, &mut rng);
        let (preds, targets) = batch_outputs(&work, mask_values, train, &idx)?;
        let loss = loss_prediction(&preds, &targets)?;
        let loss_value = loss.item()?;
        let grads = loss.backward()?;
        adam.step(&mut work.params, &grads)?;

        let metrics = if (iteration + 1) % config.val_every == 0 || iteration + 1 == iterations {
            validation_metrics(&work, mask_values, val)?
        } else {
            None
        };
        if let Some(m) = &metrics {
            match &best {
                Some((b, _)) if m.mae >= *b => stale += 1,
                _ => {
                    best = Some((m.mae, work.params.snapshot()));
                    stale = 0;
                }
            }
        }
        log.records.push(record(iteration, loss_value, sparsity, &metrics));
        if config.patience > 0 && stale >= config.patience {
            log.stopped_early = true;
            break;
        }
    }
    if let Some((_, params)) = best {
        work.params = params;
    }
    Ok((work, log))
}

/// Train the dense model against the prediction loss for up to `n1` steps,
/// with early stopping on validation MAE; returns the best-validation
/// parameters.
pub fn pretrain(
    model: &Model,
    train: &[WindowSample],
    val: &[WindowSample],
    config: &SparsifyConfig,
) -> Result<(Model, TrainLog)> {
    config.validate()?;
    if config.n1 == 0 {
        return Err(Error::config("pretraining needs n1 >= 1"));
    }
    let n = model.config.num_nodes();
    train_loop(model, &Tensor::ones(&[n, n]), train, val, config.n1, 0.0, config)
}

/// Off-diagonal coordinates sorted by adjacency magnitude ascending, ties
/// broken lexicographically. The head of this list is pruned first.
pub fn rank_edges(adjacency: &Tensor) -> Vec<(usize, usize)> {
    let n = adjacency.shape()[0];
    let mut edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
        .collect();
    edges.sort_by(|a, b| {
        let va = adjacency.at(&[a.0, a.1]).abs();
        let vb = adjacency.at(&[b.0, b.1]).abs();
        va.total_cmp(&vb).then(a.cmp(b))
    });
    edges
}

/// Fraction of off-diagonal edges currently pruned.
pub fn current_sparsity(mask: &EdgeMask) -> f64 {
    mask.off_diagonal_prune_fraction()
}

/// Progressive L0 sparsification of a pretrained model (the AGS loop).
///
/// Edges are ranked once against the pretrained adjacency; the keep-set and
/// the diagonal freeze immediately. Each iteration activates the next
/// quantum of candidates as sampled gates, takes one optimiser step on the
/// penalised objective, and freezes candidates whose noise-free gate
/// dropped below 0.5. The loop always runs the full `n2` iterations: once
/// every candidate is frozen the penalty term is constant, so the remaining
/// steps continue training the weights against the (now effectively fixed)
/// mask — the recovery phase that lets a heavily localised model win back
/// the accuracy it lost while edges were being severed. Ending below the
/// target sparsity sets `target_missed` on the log. The returned mask is
/// fully frozen (binary).
pub fn ags_sparsify(
    pretrained: &Model,
    train: &[WindowSample],
    val: &[WindowSample],
    config: &SparsifyConfig,
) -> Result<(Model, EdgeMask, TrainLog)> {
    config.validate()?;
    let n = pretrained.config.num_nodes();
    let off_diag = n * n - n;
    let mut mask = EdgeMask::all_open(n);
    for i in 0..n {
        mask.transition(i, i, EdgeState::FrozenKeep)?;
    }
    let ranked = rank_edges(&graph::adaptive_adjacency(pretrained.embedding()?)?);
    let prefix = ((config.s_g * off_diag as f64).ceil() as usize).min(off_diag);
    for &(i, j) in &ranked[prefix..] {
        mask.transition(i, j, EdgeState::FrozenKeep)?;
    }
    let quantum = ((config.quantum_fraction() * off_diag as f64).ceil() as usize).max(1);

    let mut work = pretrained.clone();
    let mut adam = Adam::new(config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cycle = BatchCycle::new(train.len());
    let mut log = TrainLog::default();
    let mut activated = 0usize;
    let mut iteration = 0usize;

    while iteration < config.n2 {
        if train.is_empty() {
            return Err(Error::config("sparsification requires at least one window"));
        }
        let next_active = (activated + quantum).min(prefix);
        for &(i, j) in &ranked[activated..next_active] {
            mask.transition(i, j, EdgeState::Gated)?;
        }
        activated = next_active;

        let idx = cycle.take(config.batch_size, &mut rng);
        let logits = work.gate_logits()?;
        let noise = graph::sample_gate_noise(n, &mut rng);
        let gates = graph::sample_hard_concrete(&logits, &work.gate, &noise, &mask)?;
        let (preds, targets) = batch_outputs(&work, &gates, train, &idx)?;
        let loss = loss_ags(&preds, &targets, &logits, &work.gate, &mask, config.lambda)?;
        let loss_value = loss.item()?;
        let grads = loss.backward()?;
        adam.step(&mut work.params, &grads)?;

        let det = graph::deterministic_gate(&work.gate_logits()?, &work.gate, &mask)?;
        for &(i, j) in &ranked[..activated] {
            if mask.state(i, j) == EdgeState::Gated && det.at(&[i, j]) < 0.5 {
                mask.transition(i, j, EdgeState::FrozenPrune)?;
            }
        }

        let metrics = if (iteration + 1) % config.val_every == 0 {
            validation_metrics(&work, &mask.inference_values(), val)?
        } else {
            None
        };
        log.records.push(record(iteration, loss_value, current_sparsity(&mask), &metrics));
        iteration += 1;
    }

    log.target_missed = current_sparsity(&mask) < config.s_g;
    for i in 0..n {
        for j in 0..n {
            if matches!(mask.state(i, j), EdgeState::Open | EdgeState::Gated) {
                mask.transition(i, j, EdgeState::FrozenKeep)?;
            }
        }
    }
    Ok((work, mask, log))
}

/// The localisation control: reinitialise every parameter from the scheme
/// with a fresh seed and train against the fixed binary mask, with the same
/// budget and early stopping as pretraining.
pub fn reinit_retrain(
    localised: &Model,
    mask: &EdgeMask,
    train: &[WindowSample],
    val: &[WindowSample],
    config: &SparsifyConfig,
    fresh_seed: u64,
) -> Result<(Model, TrainLog)> {
    config.validate()?;
    if config.n1 == 0 {
        return Err(Error::config("retraining needs n1 >= 1"));
    }
    let fresh = Model::new(localised.config.clone(), localised.gate, fresh_seed)?;
    train_loop(
        &fresh,
        &mask.inference_values(),
        train,
        val,
        config.n1,
        current_sparsity(mask),
        config,
    )
}
