//! Learned graph structure: adaptive adjacency from node embeddings, the
//! node-adaptive graph convolution used by both architectures, and the
//! hard-concrete edge gates that sparsify the graph.
//!
//! The adjacency is never given; it is `softmax(relu(E Eᵀ))` row-wise over a
//! trainable embedding `E` of shape `(N, d)`. Each convolution also derives
//! per-node weights from `E`, so node i applies its own `(C, F)` transform
//! `Θ_i = Σ_k E[i,k] W[k]`. Edge gates are logits `U = E W_gate` pushed
//! through a stretched, clamped sigmoid; frozen entries override the gate
//! value with exact constants so pruning is permanent and exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn const_nn(n: usize, data: Vec<f64>) -> Tensor {
    Tensor::from_vec(&[n, n], data).expect("finite constant matrix")
}

/// Row-stochastic adjacency from node embeddings: `softmax(relu(E Eᵀ))`.
///
/// Every row sums to one by construction; a zero embedding degenerates to the
/// uniform matrix because softmax of an all-zero row is uniform.
pub fn adaptive_adjacency(embedding: &Tensor) -> Result<Tensor> {
    if embedding.rank() != 2 {
        return Err(Error::shape(
            "adaptive_adjacency",
            format!("embedding must be (N, d), got {:?}", embedding.shape()),
        ));
    }
    let scores = embedding.matmul(&embedding.transpose(0, 1)?)?;
    scores.relu()?.softmax_last()
}

/// Activation applied by a graph convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(&self, t: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Identity => Ok(t.clone()),
            Activation::Sigmoid => t.sigmoid(),
            Activation::Tanh => t.tanh(),
            Activation::Relu => t.relu(),
        }
    }
}

/// Per-node transform stack `Θ` of shape `(N, C, F)` from embeddings `(N, d)`
/// and a weight pool `(d, C, F)`.
pub fn node_transforms(embedding: &Tensor, weights: &Tensor) -> Result<Tensor> {
    if embedding.rank() != 2 || weights.rank() != 3 || embedding.shape()[1] != weights.shape()[0] {
        return Err(Error::shape(
            "node_transforms",
            format!(
                "embedding {:?} does not combine with weight pool {:?}",
                embedding.shape(),
                weights.shape()
            ),
        ));
    }
    let (n, d) = (embedding.shape()[0], embedding.shape()[1]);
    let (c, f) = (weights.shape()[1], weights.shape()[2]);
    let flat = weights.reshape(&[d, c * f])?;
    embedding.matmul(&flat)?.reshape(&[n, c, f])
}

/// Node-wise application of the per-node transforms: `P[i] = X[i] Θ_i`,
/// giving `(N, F)` from inputs `(N, C)`.
pub fn node_transform_apply(x: &Tensor, transforms: &Tensor) -> Result<Tensor> {
    let ok = x.rank() == 2
        && transforms.rank() == 3
        && x.shape()[0] == transforms.shape()[0]
        && x.shape()[1] == transforms.shape()[1];
    if !ok {
        return Err(Error::shape(
            "node_transform_apply",
            format!("inputs {:?} with transforms {:?}", x.shape(), transforms.shape()),
        ));
    }
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let f = transforms.shape()[2];
    x.reshape(&[n, 1, c])?.bmm(transforms)?.reshape(&[n, f])
}

/// Node-adaptive graph convolution against a pre-masked adjacency:
/// `Z = act(A_eff · (X Θ))` where `Θ_i = Σ_k E[i,k] W[k]`.
pub fn napl_agcn_forward(
    a_eff: &Tensor,
    x: &Tensor,
    embedding: &Tensor,
    weights: &Tensor,
    act: Activation,
) -> Result<Tensor> {
    let p = node_transform_apply(x, &node_transforms(embedding, weights)?)?;
    act.apply(&a_eff.matmul(&p)?)
}

/// Same convolution with adjacency and mask kept separate so aggregation can
/// skip pruned (exactly zero) mask entries.
pub fn napl_agcn_forward_masked(
    adjacency: &Tensor,
    mask_values: &Tensor,
    x: &Tensor,
    embedding: &Tensor,
    weights: &Tensor,
    act: Activation,
) -> Result<Tensor> {
    let p = node_transform_apply(x, &node_transforms(embedding, weights)?)?;
    act.apply(&Tensor::masked_matmul(adjacency, mask_values, &p)?)
}

/// Elementwise adjacency masking, no renormalisation.
pub fn apply_mask(adjacency: &Tensor, mask_values: &Tensor) -> Result<Tensor> {
    adjacency.mul(mask_values)
}

/// Edge gate logits `U = E W_gate`, shape `(N, N)`.
pub fn gate_logits(embedding: &Tensor, gate_weights: &Tensor) -> Result<Tensor> {
    let ok = embedding.rank() == 2
        && gate_weights.rank() == 2
        && embedding.shape()[1] == gate_weights.shape()[0]
        && embedding.shape()[0] == gate_weights.shape()[1];
    if !ok {
        return Err(Error::shape(
            "gate_logits",
            format!(
                "embedding {:?} with gate weights {:?} (want (N,d) x (d,N))",
                embedding.shape(),
                gate_weights.shape()
            ),
        ));
    }
    embedding.matmul(gate_weights)
}

/// Hard-concrete gate distribution parameters.
///
/// The sigmoid is stretched over `[stretch_lo, stretch_hi]` and clamped back
/// to `[0, 1]`, which puts positive mass on exactly-0 and exactly-1 gates.
/// Orientation: larger logits mean more-open gates.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct GateParams {
    pub beta: f64,
    pub stretch_lo: f64,
    pub stretch_hi: f64,
}

impl Default for GateParams {
    fn default() -> Self {
        GateParams {
            beta: 2.0 / 3.0,
            stretch_lo: -0.1,
            stretch_hi: 1.1,
        }
    }
}

impl GateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::config(format!("gate beta must be positive, got {}", self.beta)));
        }
        if !(self.stretch_lo < 0.0 && self.stretch_hi > 1.0) {
            return Err(Error::config(format!(
                "gate stretch interval [{}, {}] must cover [0, 1] strictly",
                self.stretch_lo, self.stretch_hi
            )));
        }
        Ok(())
    }

    /// Additive bias of the expected-L0 surrogate:
    /// `P(gate > 0) = sigmoid(U - beta * ln(-lo / hi))`.
    pub fn l0_bias(&self) -> f64 {
        -self.beta * (-self.stretch_lo / self.stretch_hi).ln()
    }
}

/// Lifecycle of one adjacency entry during sparsification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeState {
    /// Kept with mask value 1; not yet a pruning candidate.
    Open,
    /// Permanently kept: mask value exactly 1.
    FrozenKeep,
    /// Permanently pruned: mask value exactly 0.
    FrozenPrune,
    /// Active pruning candidate: mask value comes from the sampled gate.
    Gated,
}

/// Edge mask: the per-entry gate override state for an `(N, N)` adjacency.
///
/// Frozen states are permanent; transitions only move entries toward frozen.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMask {
    n: usize,
    states: Vec<EdgeState>,
}

impl EdgeMask {
    /// Dense mask: every entry open (mask value 1).
    pub fn all_open(n: usize) -> EdgeMask {
        EdgeMask {
            n,
            states: vec![EdgeState::Open; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn state(&self, i: usize, j: usize) -> EdgeState {
        self.states[i * self.n + j]
    }

    pub fn transition(&mut self, i: usize, j: usize, next: EdgeState) -> Result<()> {
        let cur = self.state(i, j);
        let legal = matches!(
            (cur, next),
            (EdgeState::Open, EdgeState::Gated)
                | (EdgeState::Open, EdgeState::FrozenKeep)
                | (EdgeState::Open, EdgeState::FrozenPrune)
                | (EdgeState::Gated, EdgeState::FrozenPrune)
                | (EdgeState::Gated, EdgeState::FrozenKeep)
        );
        if !legal {
            return Err(Error::config(format!(
                "illegal edge state transition ({i},{j}): {cur:?} -> {next:?}"
            )));
        }
        self.states[i * self.n + j] = next;
        Ok(())
    }

    pub fn count(&self, s: EdgeState) -> usize {
        self.states.iter().filter(|x| **x == s).count()
    }

    /// Fraction of off-diagonal entries that are pruned.
    pub fn off_diagonal_prune_fraction(&self) -> f64 {
        if self.n <= 1 {
            return 0.0;
        }
        let pruned = self
            .states
            .iter()
            .enumerate()
            .filter(|(k, s)| k / self.n != k % self.n && **s == EdgeState::FrozenPrune)
            .count();
        pruned as f64 / (self.n * self.n - self.n) as f64
    }

    /// Binary mask for inference: 0 where pruned, 1 everywhere else.
    pub fn inference_values(&self) -> Tensor {
        let data = self
            .states
            .iter()
            .map(|s| if *s == EdgeState::FrozenPrune { 0.0 } else { 1.0 })
            .collect();
        const_nn(self.n, data)
    }

    /// Entries still counted by the L0 surrogate (neither frozen kept nor
    /// frozen pruned).
    pub fn unfrozen_indicator(&self) -> Tensor {
        let data = self
            .states
            .iter()
            .map(|s| match s {
                EdgeState::Open | EdgeState::Gated => 1.0,
                EdgeState::FrozenKeep | EdgeState::FrozenPrune => 0.0,
            })
            .collect();
        const_nn(self.n, data)
    }

    fn gated_indicator(&self) -> Tensor {
        let data = self
            .states
            .iter()
            .map(|s| if *s == EdgeState::Gated { 1.0 } else { 0.0 })
            .collect();
        const_nn(self.n, data)
    }

    fn kept_constant(&self) -> Tensor {
        let data = self
            .states
            .iter()
            .map(|s| match s {
                EdgeState::Open | EdgeState::FrozenKeep => 1.0,
                EdgeState::FrozenPrune | EdgeState::Gated => 0.0,
            })
            .collect();
        const_nn(self.n, data)
    }

    /// Compose raw gate values with the override state: gated entries pass
    /// the gate through, kept entries become exactly 1, pruned exactly 0.
    pub fn apply_overrides(&self, gates: &Tensor) -> Result<Tensor> {
        if gates.shape() != [self.n, self.n] {
            return Err(Error::shape(
                "apply_overrides",
                format!("gates {:?} for mask of {} nodes", gates.shape(), self.n),
            ));
        }
        gates.mul(&self.gated_indicator())?.add(&self.kept_constant())
    }

    /// Number of edges that survive at inference (including the diagonal).
    pub fn kept_edges(&self) -> usize {
        self.states.iter().filter(|s| **s != EdgeState::FrozenPrune).count()
    }

    /// Compact byte encoding for checkpoints.
    pub fn to_codes(&self) -> Vec<u8> {
        self.states
            .iter()
            .map(|s| match s {
                EdgeState::Open => 0u8,
                EdgeState::FrozenKeep => 1,
                EdgeState::FrozenPrune => 2,
                EdgeState::Gated => 3,
            })
            .collect()
    }

    pub fn from_codes(n: usize, codes: &[u8]) -> Result<EdgeMask> {
        if codes.len() != n * n {
            return Err(Error::artifact(format!(
                "edge mask expects {} codes for {n} nodes, got {}",
                n * n,
                codes.len()
            )));
        }
        let states = codes
            .iter()
            .map(|c| match c {
                0 => Ok(EdgeState::Open),
                1 => Ok(EdgeState::FrozenKeep),
                2 => Ok(EdgeState::FrozenPrune),
                3 => Ok(EdgeState::Gated),
                other => Err(Error::artifact(format!("unknown edge state code {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EdgeMask { n, states })
    }
}

/// Uniform noise in the open interval (0, 1), rejecting the endpoints.
pub fn sample_gate_noise<R: rand::Rng>(n: usize, rng: &mut R) -> Tensor {
    let data = (0..n * n)
        .map(|_| loop {
            let z: f64 = rng.gen();
            if z > 0.0 && z < 1.0 {
                break z;
            }
        })
        .collect();
    const_nn(n, data)
}

/// Stochastic hard-concrete gates for training.
///
/// `s = sigmoid((U + ln(z / (1 - z))) / beta)`, stretched to
/// `[stretch_lo, stretch_hi]` and clamped to `[0, 1]`; frozen entries are
/// overridden exactly. Gradients flow to the logits through the unclamped
/// region. Noise values must lie strictly inside (0, 1).
pub fn sample_hard_concrete(
    logits: &Tensor,
    gp: &GateParams,
    noise: &Tensor,
    mask: &EdgeMask,
) -> Result<Tensor> {
    gp.validate()?;
    if noise.shape() != logits.shape() {
        return Err(Error::shape(
            "sample_hard_concrete",
            format!("noise {:?} vs logits {:?}", noise.shape(), logits.shape()),
        ));
    }
    let logit_noise: Vec<f64> = noise
        .data()
        .iter()
        .map(|z| {
            if *z <= 0.0 || *z >= 1.0 {
                Err(Error::config(format!(
                    "hard-concrete noise must be strictly inside (0, 1), got {z}"
                )))
            } else {
                Ok((z / (1.0 - z)).ln())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let logit_noise = Tensor::from_vec(logits.shape(), logit_noise)?;
    let raw = logits
        .add(&logit_noise)?
        .scale(1.0 / gp.beta)?
        .sigmoid()?
        .scale(gp.stretch_hi - gp.stretch_lo)?
        .add_scalar(gp.stretch_lo)?
        .clamp(0.0, 1.0)?;
    mask.apply_overrides(&raw)
}

/// Noise-free gate used for evaluation and cost accounting:
/// `clamp(sigmoid(U / beta) * (hi - lo) + lo, 0, 1)` with frozen overrides.
pub fn deterministic_gate(logits: &Tensor, gp: &GateParams, mask: &EdgeMask) -> Result<Tensor> {
    gp.validate()?;
    let raw = logits
        .scale(1.0 / gp.beta)?
        .sigmoid()?
        .scale(gp.stretch_hi - gp.stretch_lo)?
        .add_scalar(gp.stretch_lo)?
        .clamp(0.0, 1.0)?;
    mask.apply_overrides(&raw)
}

/// Differentiable expected L0 of the mask: each unfrozen entry contributes
/// `sigmoid(U + l0_bias)`, frozen-keep entries contribute exactly 1 and
/// frozen-pruned entries exactly 0. Monotone nondecreasing in every logit.
pub fn expected_l0(logits: &Tensor, gp: &GateParams, mask: &EdgeMask) -> Result<Tensor> {
    gp.validate()?;
    if logits.shape() != [mask.n(), mask.n()] {
        return Err(Error::shape(
            "expected_l0",
            format!("logits {:?} for mask of {} nodes", logits.shape(), mask.n()),
        ));
    }
    let soft = logits.add_scalar(gp.l0_bias())?.sigmoid()?;
    let live = soft.mul(&mask.unfrozen_indicator())?.sum_all()?;
    live.add_scalar(mask.count(EdgeState::FrozenKeep) as f64)
}
