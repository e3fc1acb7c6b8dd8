//! Attention architecture: pre-norm transformer blocks whose Q/K/V and
//! feed-forward projections are node-adaptive graph convolutions; attention
//! itself runs per node across the time axis.

use crate::error::Result;
use crate::graph::{node_transforms, Activation};
use crate::tensor::{ParamSet, Tensor};

use super::{napl_apply_seq, AgformerConfig};

/// One block's tensors with node transforms prebuilt for the forward pass.
#[derive(Debug, Clone)]
pub struct AgformerBlock {
    pub heads: usize,
    pub ln1_gamma: Tensor,
    pub ln1_beta: Tensor,
    pub theta_q: Tensor,
    pub bias_q: Tensor,
    pub theta_k: Tensor,
    pub bias_k: Tensor,
    pub theta_v: Tensor,
    pub bias_v: Tensor,
    pub ln2_gamma: Tensor,
    pub ln2_beta: Tensor,
    pub theta_ffn1: Tensor,
    pub bias_ffn1: Tensor,
    pub theta_ffn2: Tensor,
    pub bias_ffn2: Tensor,
}

const LN_EPS: f64 = 1e-5;

impl AgformerBlock {
    pub fn build(
        params: &ParamSet,
        embedding: &Tensor,
        heads: usize,
        index: usize,
    ) -> Result<AgformerBlock> {
        let theta = |name: &str| -> Result<Tensor> {
            node_transforms(embedding, params.get(&format!("block{index}.{name}.w"))?)
        };
        let get = |name: &str| -> Result<Tensor> {
            Ok(params.get(&format!("block{index}.{name}"))?.clone())
        };
        Ok(AgformerBlock {
            heads,
            ln1_gamma: get("ln1.gamma")?,
            ln1_beta: get("ln1.beta")?,
            theta_q: theta("q")?,
            bias_q: get("q.b")?,
            theta_k: theta("k")?,
            bias_k: get("k.b")?,
            theta_v: theta("v")?,
            bias_v: get("v.b")?,
            ln2_gamma: get("ln2.gamma")?,
            ln2_beta: get("ln2.beta")?,
            theta_ffn1: theta("ffn1")?,
            bias_ffn1: get("ffn1.b")?,
            theta_ffn2: theta("ffn2")?,
            bias_ffn2: get("ffn2.b")?,
        })
    }
}

/// Split `(T, N, F)` into `(N*heads, T, F/heads)` attention batches.
fn to_heads(x: &Tensor, heads: usize) -> Result<Tensor> {
    let (t, n, f) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    x.reshape(&[t, n, heads, f / heads])?
        .transpose(0, 1)?
        .transpose(1, 2)?
        .reshape(&[n * heads, t, f / heads])
}

fn from_heads(x: &Tensor, t: usize, n: usize, heads: usize) -> Result<Tensor> {
    let dk = x.shape()[2];
    x.reshape(&[n, heads, t, dk])?
        .transpose(1, 2)?
        .transpose(0, 1)?
        .reshape(&[t, n, heads * dk])
}

/// Per-node multi-head self-attention over the time axis.
fn temporal_attention(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> Result<Tensor> {
    let (t, n, f) = (q.shape()[0], q.shape()[1], q.shape()[2]);
    let dk = f / heads;
    let qb = to_heads(q, heads)?;
    let kb = to_heads(k, heads)?;
    let vb = to_heads(v, heads)?;
    let scores = qb.bmm(&kb.transpose(1, 2)?)?.scale(1.0 / (dk as f64).sqrt())?;
    let mixed = scores.softmax_last()?.bmm(&vb)?;
    from_heads(&mixed, t, n, heads)
}

/// One pre-norm block: `x + Attn(LN(x))`, then `y + FFN(LN(y))`.
pub fn block_forward(
    block: &AgformerBlock,
    adjacency: &Tensor,
    mask_values: &Tensor,
    x: &Tensor,
) -> Result<Tensor> {
    let normed = x.layer_norm(&block.ln1_gamma, &block.ln1_beta, LN_EPS)?;
    let q = napl_apply_seq(adjacency, mask_values, &normed, &block.theta_q, &block.bias_q, Activation::Identity)?;
    let k = napl_apply_seq(adjacency, mask_values, &normed, &block.theta_k, &block.bias_k, Activation::Identity)?;
    let v = napl_apply_seq(adjacency, mask_values, &normed, &block.theta_v, &block.bias_v, Activation::Identity)?;
    let x = x.add(&temporal_attention(&q, &k, &v, block.heads)?)?;

    let normed = x.layer_norm(&block.ln2_gamma, &block.ln2_beta, LN_EPS)?;
    let mid = napl_apply_seq(
        adjacency,
        mask_values,
        &normed,
        &block.theta_ffn1,
        &block.bias_ffn1,
        Activation::Relu,
    )?;
    let out = napl_apply_seq(
        adjacency,
        mask_values,
        &mid,
        &block.theta_ffn2,
        &block.bias_ffn2,
        Activation::Identity,
    )?;
    x.add(&out)
}

/// Embed, run the block stack and mean-pool over time, returning `(N, F)`.
pub(super) fn encode(
    config: &AgformerConfig,
    params: &ParamSet,
    adjacency: &Tensor,
    mask_values: &Tensor,
    history: &Tensor,
    pe: &Tensor,
) -> Result<Tensor> {
    let (t, n, c, f) = (config.history, config.num_nodes, config.channels, config.hidden);
    let embedding = params.get("embedding")?;
    let embedded = history
        .reshape(&[t * n, c])?
        .matmul(params.get("embed.w")?)?
        .add_bias(params.get("embed.b")?)?
        .reshape(&[t, n, f])?
        .add(pe)?;
    let mut x = embedded;
    for index in 0..config.blocks {
        let block = AgformerBlock::build(params, embedding, config.heads, index)?;
        x = block_forward(&block, adjacency, mask_values, &x)?;
    }
    x.mean_axis(0)
}
