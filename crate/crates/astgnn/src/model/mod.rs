//! The two forecasting architectures (recurrent AGCRN and attention-based
//! AGFormer), sharing the node-adaptive graph convolution from [`crate::graph`].
//!
//! Every affine map in both architectures is a node-adaptive layer: the
//! per-node transform is built from the node embeddings once per forward
//! pass, and aggregation runs through the (masked) adaptive adjacency. The
//! output head is a per-node linear projection from the final hidden state
//! to `horizon * channels` values.

mod agcrn;
mod agformer;
mod checkpoint;

pub use agcrn::{cell_step, AgcrnCell};
pub use agformer::{block_forward, AgformerBlock};
pub use checkpoint::{
    checkpoint_hash, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION,
};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, Activation, GateParams};
use crate::tensor::{ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgcrnConfig {
    pub num_nodes: usize,
    pub channels: usize,
    /// Hidden width F.
    pub hidden: usize,
    /// Node embedding dimension d.
    pub embed: usize,
    /// Stacked recurrent layers L.
    pub layers: usize,
    /// History length T.
    pub history: usize,
    /// Horizon H.
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgformerConfig {
    pub num_nodes: usize,
    pub channels: usize,
    pub hidden: usize,
    pub embed: usize,
    pub heads: usize,
    pub blocks: usize,
    pub history: usize,
    pub horizon: usize,
    pub ffn_width: usize,
}

/// Architecture selector plus dimensions; serialises with an
/// `architecture` tag so experiment configs stay declarative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "kebab-case")]
pub enum ModelConfig {
    Agcrn(AgcrnConfig),
    Agformer(AgformerConfig),
}

impl ModelConfig {
    pub fn num_nodes(&self) -> usize {
        match self {
            ModelConfig::Agcrn(c) => c.num_nodes,
            ModelConfig::Agformer(c) => c.num_nodes,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            ModelConfig::Agcrn(c) => c.channels,
            ModelConfig::Agformer(c) => c.channels,
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            ModelConfig::Agcrn(c) => c.hidden,
            ModelConfig::Agformer(c) => c.hidden,
        }
    }

    pub fn embed(&self) -> usize {
        match self {
            ModelConfig::Agcrn(c) => c.embed,
            ModelConfig::Agformer(c) => c.embed,
        }
    }

    pub fn history(&self) -> usize {
        match self {
            ModelConfig::Agcrn(c) => c.history,
            ModelConfig::Agformer(c) => c.history,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            ModelConfig::Agcrn(c) => c.horizon,
            ModelConfig::Agformer(c) => c.horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_positive = [
            self.num_nodes(),
            self.channels(),
            self.hidden(),
            self.embed(),
            self.history(),
            self.horizon(),
        ]
        .iter()
        .all(|v| *v > 0);
        if !all_positive {
            return Err(Error::config("every model dimension must be positive".to_string()));
        }
        match self {
            ModelConfig::Agcrn(c) => {
                if c.layers == 0 {
                    return Err(Error::config("at least one recurrent layer required".to_string()));
                }
            }
            ModelConfig::Agformer(c) => {
                if c.blocks == 0 || c.heads == 0 || c.ffn_width == 0 {
                    return Err(Error::config(
                        "blocks, heads and ffn_width must be positive".to_string(),
                    ));
                }
                if c.hidden % c.heads != 0 {
                    return Err(Error::config(format!(
                        "hidden width {} is not divisible by {} heads",
                        c.hidden, c.heads
                    )));
                }
            }
        }
        Ok(())
    }

    /// Upper bound on how many graph aggregations any input-to-output path
    /// crosses in one forward pass; beyond this many hops in the kept-edge
    /// digraph, nodes cannot influence each other.
    pub fn hop_bound(&self) -> usize {
        match self {
            // per timestep and layer the candidate path aggregates twice
            // (once inside the reset gate, once in the candidate itself)
            ModelConfig::Agcrn(c) => 2 * c.layers * c.history,
            // Q/K/V projections aggregate once, the feed-forward twice
            ModelConfig::Agformer(c) => 3 * c.blocks,
        }
    }
}

/// A model: configuration, named parameters and the gate distribution
/// hyper-parameters used when its mask is trained.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub gate: GateParams,
    pub seed: u64,
    /// Sinusoidal position table, `(T, N, hidden)`, attention models only.
    pe: Option<Tensor>,
}

fn uniform_fan_in(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let fan_in: usize = shape[..shape.len() - 1].iter().product();
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::rand_uniform(shape, -bound, bound, rng)
}

fn sinusoidal_pe(t_len: usize, n: usize, f: usize) -> Tensor {
    let mut table = vec![0.0; t_len * f];
    for t in 0..t_len {
        for k in 0..f {
            let rate = 10_000f64.powf(-((k / 2 * 2) as f64) / f as f64);
            let angle = t as f64 * rate;
            table[t * f + k] = if k % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    let mut data = Vec::with_capacity(t_len * n * f);
    for t in 0..t_len {
        for _ in 0..n {
            data.extend_from_slice(&table[t * f..(t + 1) * f]);
        }
    }
    Tensor::from_vec(&[t_len, n, f], data).expect("finite table")
}

impl Model {
    /// Build a freshly initialised model. Weights draw from
    /// `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`, embeddings from
    /// `uniform(-0.1, 0.1)`, gate weights from `uniform(-3/sqrt(d), 3/sqrt(d))`,
    /// biases start at zero and layer norms at identity. Identical
    /// `(config, seed)` gives identical parameters.
    pub fn new(config: ModelConfig, gate: GateParams, seed: u64) -> Result<Model> {
        config.validate()?;
        gate.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let (n, d, f) = (config.num_nodes(), config.embed(), config.hidden());
        let out_width = config.horizon() * config.channels();

        params.insert("embedding", Tensor::rand_uniform(&[n, d], -0.1, 0.1, &mut rng))?;
        // Wide gate-weight init spreads the derived edge logits across the
        // open region, so sparsification closes gates progressively instead
        // of collapsing the whole candidate set within a few iterations.
        let gate_bound = 3.0 / (d as f64).sqrt();
        params.insert("gate_weights", Tensor::rand_uniform(&[d, n], -gate_bound, gate_bound, &mut rng))?;

        match &config {
            ModelConfig::Agcrn(c) => {
                for layer in 0..c.layers {
                    let cin = if layer == 0 { c.channels } else { f } + f;
                    for gate_name in ["update", "reset", "cand"] {
                        params.insert(
                            format!("agcrn.l{layer}.{gate_name}.w"),
                            uniform_fan_in(&[d, cin, f], &mut rng),
                        )?;
                        params.insert(format!("agcrn.l{layer}.{gate_name}.b"), Tensor::zeros(&[f]))?;
                    }
                }
            }
            ModelConfig::Agformer(c) => {
                params.insert("embed.w", uniform_fan_in(&[c.channels, f], &mut rng))?;
                params.insert("embed.b", Tensor::zeros(&[f]))?;
                for b in 0..c.blocks {
                    for ln in ["ln1", "ln2"] {
                        params.insert(format!("block{b}.{ln}.gamma"), Tensor::ones(&[f]))?;
                        params.insert(format!("block{b}.{ln}.beta"), Tensor::zeros(&[f]))?;
                    }
                    for proj in ["q", "k", "v"] {
                        params.insert(
                            format!("block{b}.{proj}.w"),
                            uniform_fan_in(&[d, f, f], &mut rng),
                        )?;
                        params.insert(format!("block{b}.{proj}.b"), Tensor::zeros(&[f]))?;
                    }
                    params.insert(
                        format!("block{b}.ffn1.w"),
                        uniform_fan_in(&[d, f, c.ffn_width], &mut rng),
                    )?;
                    params.insert(format!("block{b}.ffn1.b"), Tensor::zeros(&[c.ffn_width]))?;
                    params.insert(
                        format!("block{b}.ffn2.w"),
                        uniform_fan_in(&[d, c.ffn_width, f], &mut rng),
                    )?;
                    params.insert(format!("block{b}.ffn2.b"), Tensor::zeros(&[f]))?;
                }
            }
        }
        params.insert("head.w", uniform_fan_in(&[f, out_width], &mut rng))?;
        params.insert("head.b", Tensor::zeros(&[out_width]))?;

        let pe = match &config {
            ModelConfig::Agformer(c) => Some(sinusoidal_pe(c.history, c.num_nodes, f)),
            ModelConfig::Agcrn(_) => None,
        };
        Ok(Model { config, params, gate, seed, pe })
    }

    pub fn embedding(&self) -> Result<&Tensor> {
        self.params.get("embedding")
    }

    /// Edge gate logits `E W_gate` for the current parameters.
    pub fn gate_logits(&self) -> Result<Tensor> {
        graph::gate_logits(self.params.get("embedding")?, self.params.get("gate_weights")?)
    }

    /// One forward pass: `(T, N, C)` history to `(N, H*C)` prediction, with
    /// aggregation running through `mask_values` (gate values or a binary
    /// mask; pass all-ones for a dense model).
    pub fn forward(&self, history: &Tensor, mask_values: &Tensor) -> Result<Tensor> {
        let (n, c, t) = (self.config.num_nodes(), self.config.channels(), self.config.history());
        if history.shape() != [t, n, c] {
            return Err(Error::shape(
                "forward",
                format!("history {:?}, model expects [{t}, {n}, {c}]", history.shape()),
            ));
        }
        if mask_values.shape() != [n, n] {
            return Err(Error::shape(
                "forward",
                format!("mask {:?} for {n} nodes", mask_values.shape()),
            ));
        }
        let embedding = self.params.get("embedding")?;
        let adjacency = graph::adaptive_adjacency(embedding)?;
        let hidden = match &self.config {
            ModelConfig::Agcrn(c) => {
                agcrn::unroll(c, &self.params, &adjacency, mask_values, history)?
            }
            ModelConfig::Agformer(c) => agformer::encode(
                c,
                &self.params,
                &adjacency,
                mask_values,
                history,
                self.pe.as_ref().expect("attention models carry a position table"),
            )?,
        };
        hidden
            .matmul(self.params.get("head.w")?)?
            .add_bias(self.params.get("head.b")?)
    }

    /// See [`ModelConfig::hop_bound`].
    pub fn hop_bound(&self) -> usize {
        self.config.hop_bound()
    }
}

/// Reshape a `(N, H*C)` prediction into `(H, N, C)` frames.
pub fn prediction_frames(pred: &Tensor, horizon: usize, channels: usize) -> Result<Tensor> {
    let n = pred.shape()[0];
    pred.reshape(&[n, horizon, channels])?.transpose(0, 1)
}

/// One node-adaptive layer application on a single frame: `x` is `(N, Cin)`,
/// `theta` `(N, Cin, F)`; aggregation skips zero mask entries.
pub(crate) fn napl_apply(
    adjacency: &Tensor,
    mask_values: &Tensor,
    x: &Tensor,
    theta: &Tensor,
    bias: &Tensor,
    act: Activation,
) -> Result<Tensor> {
    let p = graph::node_transform_apply(x, theta)?;
    act.apply(&Tensor::masked_matmul(adjacency, mask_values, &p)?.add_bias(bias)?)
}

/// The same layer batched over time: `xseq` is `(T, N, Cin)` and the
/// aggregation for all timesteps runs as one masked product against the
/// `(N, T*F)` stack, which touches each kept edge once.
pub(crate) fn napl_apply_seq(
    adjacency: &Tensor,
    mask_values: &Tensor,
    xseq: &Tensor,
    theta: &Tensor,
    bias: &Tensor,
    act: Activation,
) -> Result<Tensor> {
    let (t, n) = (xseq.shape()[0], xseq.shape()[1]);
    let f = theta.shape()[2];
    let p = xseq.transpose(0, 1)?.bmm(theta)?; // (N, T, Cin) x (N, Cin, F)
    let agg = Tensor::masked_matmul(adjacency, mask_values, &p.reshape(&[n, t * f])?)?;
    act.apply(&agg.reshape(&[n, t, f])?.add_bias(bias)?.transpose(0, 1)?)
}

#[cfg(test)]
mod tests;
