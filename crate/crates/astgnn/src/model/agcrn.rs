//! Recurrent architecture: a GRU whose three affine maps are node-adaptive
//! graph convolutions sharing one adjacency and one set of node embeddings.

use crate::error::{Error, Result};
use crate::graph::{node_transforms, Activation};
use crate::tensor::{ParamSet, Tensor};

use super::{napl_apply, AgcrnConfig};

/// Per-layer cell tensors with the node transforms already built, so the
/// embedding-to-transform product happens once per forward pass rather than
/// once per timestep.
#[derive(Debug, Clone)]
pub struct AgcrnCell {
    pub theta_update: Tensor,
    pub bias_update: Tensor,
    pub theta_reset: Tensor,
    pub bias_reset: Tensor,
    pub theta_cand: Tensor,
    pub bias_cand: Tensor,
}

impl AgcrnCell {
    /// Assemble layer `layer`'s cell from the parameter set.
    pub fn build(params: &ParamSet, embedding: &Tensor, layer: usize) -> Result<AgcrnCell> {
        let theta = |gate: &str| -> Result<Tensor> {
            node_transforms(embedding, params.get(&format!("agcrn.l{layer}.{gate}.w"))?)
        };
        Ok(AgcrnCell {
            theta_update: theta("update")?,
            bias_update: params.get(&format!("agcrn.l{layer}.update.b"))?.clone(),
            theta_reset: theta("reset")?,
            bias_reset: params.get(&format!("agcrn.l{layer}.reset.b"))?.clone(),
            theta_cand: theta("cand")?,
            bias_cand: params.get(&format!("agcrn.l{layer}.cand.b"))?.clone(),
        })
    }
}

/// One GRU step over the graph: `x_t` is `(N, Cin)`, `h_prev` `(N, F)`.
///
/// `u = sigmoid(G_u([x||h]))`, `r = sigmoid(G_r([x||h]))`,
/// `c = tanh(G_c([x||r*h]))`, `h = u*h_prev + (1-u)*c`, with every `G` a
/// node-adaptive convolution through the masked adjacency.
pub fn cell_step(
    cell: &AgcrnCell,
    adjacency: &Tensor,
    mask_values: &Tensor,
    x_t: &Tensor,
    h_prev: &Tensor,
) -> Result<Tensor> {
    let gates_in = Tensor::concat(&[x_t.clone(), h_prev.clone()], 1)?;
    let update = napl_apply(
        adjacency,
        mask_values,
        &gates_in,
        &cell.theta_update,
        &cell.bias_update,
        Activation::Sigmoid,
    )?;
    let reset = napl_apply(
        adjacency,
        mask_values,
        &gates_in,
        &cell.theta_reset,
        &cell.bias_reset,
        Activation::Sigmoid,
    )?;
    let cand_in = Tensor::concat(&[x_t.clone(), reset.mul(h_prev)?], 1)?;
    let cand = napl_apply(
        adjacency,
        mask_values,
        &cand_in,
        &cell.theta_cand,
        &cell.bias_cand,
        Activation::Tanh,
    )?;
    let carry = update.mul(h_prev)?;
    let blend = update.neg()?.add_scalar(1.0)?.mul(&cand)?;
    carry.add(&blend)
}

/// Unroll the stacked cells over the whole window and return the last
/// layer's final hidden state `(N, F)`.
pub(super) fn unroll(
    config: &AgcrnConfig,
    params: &ParamSet,
    adjacency: &Tensor,
    mask_values: &Tensor,
    history: &Tensor,
) -> Result<Tensor> {
    let embedding = params.get("embedding")?;
    let cells: Vec<AgcrnCell> = (0..config.layers)
        .map(|l| AgcrnCell::build(params, embedding, l))
        .collect::<Result<_>>()?;
    let (n, f) = (config.num_nodes, config.hidden);
    let mut hidden = vec![Tensor::zeros(&[n, f]); config.layers];
    for t in 0..config.history {
        let mut input = history.slice(0, t, 1)?.reshape(&[n, config.channels])?;
        for (layer, cell) in cells.iter().enumerate() {
            hidden[layer] = cell_step(cell, adjacency, mask_values, &input, &hidden[layer])
                .map_err(|e| at_timestep(e, t))?;
            input = hidden[layer].clone();
        }
    }
    Ok(hidden[config.layers - 1].clone())
}

fn at_timestep(e: Error, t: usize) -> Error {
    match e {
        Error::NonFinite { context } => Error::NonFinite {
            context: format!("{context} at timestep {t}"),
        },
        other => other,
    }
}
