//! Inference-cost accounting: a closed-form flop model next to instrumented
//! counts from the kernel, sharing one counting convention.
//!
//! The analytic model walks the same op sequence the forward pass executes
//! and charges each op its documented cost (see `tensor::count`), so for a
//! given architecture and mask it reproduces the instrumented number
//! exactly. Costs group into the four complexity terms:
//!
//! * `adjacency`   — building `softmax(relu(E Eᵀ))`, ~ `N²d`
//! * `node_param`  — generating per-node transforms from the pool, ~ `NdF`
//! * `temporal`    — per-node work across time (transforms, gates,
//!   attention, norms, head), ~ `LNTF²`
//! * `aggregation` — masked neighbourhood mixing, ~ `LT‖A⊙M‖₀F`; the only
//!   term that shrinks when edges are pruned

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{AgcrnConfig, AgformerConfig, Model, ModelConfig};
use crate::tensor::{measure_flops, Tensor};

/// Scalar-operation totals split by complexity term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsBreakdown {
    pub adjacency: u64,
    pub node_param: u64,
    pub temporal: u64,
    pub aggregation: u64,
}

impl FlopsBreakdown {
    pub fn total(&self) -> u64 {
        self.adjacency + self.node_param + self.temporal + self.aggregation
    }
}

/// Cost of one forward pass over a single window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub flops_analytic: u64,
    /// Instrumented count; absent when the report was derived without
    /// running the model.
    pub flops_counted: Option<u64>,
    pub breakdown: FlopsBreakdown,
}

impl CostReport {
    /// The number a speedup is computed from: the instrumented count when
    /// available, the closed form otherwise.
    pub fn flops(&self) -> u64 {
        self.flops_counted.unwrap_or(self.flops_analytic)
    }
}

/// Number of edges the aggregation touches: nonzero entries of the mask.
pub fn kept_edges(mask_values: &Tensor) -> usize {
    mask_values.data().iter().filter(|v| **v != 0.0).count()
}

fn adjacency_flops(n: u64, d: u64) -> u64 {
    // E Eᵀ matmul, relu, then a softmax over each length-N row
    2 * n * n * d + n * n + n * (5 * n - 2)
}

fn head_flops(n: u64, f: u64, out: u64) -> u64 {
    2 * n * f * out + n * out
}

fn agcrn_breakdown(c: &AgcrnConfig, kept: u64) -> FlopsBreakdown {
    let (n, ch, f, d) = (c.num_nodes as u64, c.channels as u64, c.hidden as u64, c.embed as u64);
    let (t, out) = (c.history as u64, (c.horizon * c.channels) as u64);
    let mut b = FlopsBreakdown { adjacency: adjacency_flops(n, d), ..Default::default() };
    for layer in 0..c.layers as u64 {
        let cin = if layer == 0 { ch } else { f } + f;
        // three transform pools built once per forward
        b.node_param += 3 * 2 * n * d * cin * f;
        // per step: three X·Θ products, biases, two sigmoids, one tanh and
        // the six elementwise blend ops
        b.temporal += t * (3 * 2 * n * cin * f + 18 * n * f);
        b.aggregation += t * 3 * kept * (1 + 2 * f);
    }
    b.temporal += head_flops(n, f, out);
    b
}

fn agformer_breakdown(c: &AgformerConfig, kept: u64) -> FlopsBreakdown {
    let (n, ch, f, d) = (c.num_nodes as u64, c.channels as u64, c.hidden as u64, c.embed as u64);
    let (t, w, heads) = (c.history as u64, c.ffn_width as u64, c.heads as u64);
    let out = (c.horizon * c.channels) as u64;
    let mut b = FlopsBreakdown { adjacency: adjacency_flops(n, d), ..Default::default() };
    // input projection, bias and position add
    b.temporal += 2 * t * n * ch * f + 2 * t * n * f;
    for _ in 0..c.blocks as u64 {
        b.node_param += 3 * 2 * n * d * f * f + 2 * 2 * n * d * f * w;
        // two layer norms over T*N rows of width F
        b.temporal += 2 * t * n * (7 * f + 2);
        // Q/K/V transforms and biases
        b.temporal += 3 * (2 * n * t * f * f + t * n * f);
        // attention: scores, scale, row softmax, value mix (heads*dk = F)
        b.temporal += 2 * n * t * t * f
            + n * heads * t * t
            + n * heads * t * (5 * t - 2)
            + 2 * n * t * t * f;
        // FFN transforms, biases, relu, and both residual adds
        b.temporal += 2 * n * t * f * w + t * n * w + t * n * w;
        b.temporal += 2 * n * t * w * f + t * n * f;
        b.temporal += 2 * t * n * f;
        // each NAPL application mixes once through the kept edges with the
        // whole time axis stacked into the columns
        b.aggregation += 4 * kept * (1 + 2 * t * f) + kept * (1 + 2 * t * w);
    }
    // temporal mean pool, then the head
    b.temporal += t * n * f;
    b.temporal += head_flops(n, f, out);
    b
}

/// Closed-form cost of one forward pass with `kept` surviving mask entries
/// (count the diagonal: self-loops are aggregation work too).
pub fn flops_analytic(config: &ModelConfig, kept: usize) -> CostReport {
    let breakdown = match config {
        ModelConfig::Agcrn(c) => agcrn_breakdown(c, kept as u64),
        ModelConfig::Agformer(c) => agformer_breakdown(c, kept as u64),
    };
    CostReport { flops_analytic: breakdown.total(), flops_counted: None, breakdown }
}

/// Instrumented scalar-operation count of one forward pass.
pub fn flops_counted(model: &Model, mask_values: &Tensor, history: &Tensor) -> Result<u64> {
    let (out, flops) = measure_flops(|| model.forward(history, mask_values));
    out.map(|_| flops)
}

/// Analytic and instrumented cost of `model` under `mask_values`, evaluated
/// on one window.
pub fn cost_report(model: &Model, mask_values: &Tensor, history: &Tensor) -> Result<CostReport> {
    let mut report = flops_analytic(&model.config, kept_edges(mask_values));
    report.flops_counted = Some(flops_counted(model, mask_values, history)?);
    Ok(report)
}

/// `dense.flops() / localised.flops()`; > 1 when pruning saved work.
pub fn speedup(dense: &CostReport, localised: &CostReport) -> f64 {
    dense.flops() as f64 / localised.flops() as f64
}

/// Conventional one-decimal rendering, e.g. `3.0x`.
pub fn format_speedup(ratio: f64) -> String {
    format!("{ratio:.1}x")
}
