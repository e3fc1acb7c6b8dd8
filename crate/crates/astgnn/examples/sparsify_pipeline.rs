//! The sparsification pipeline: pretrain dense, rank edges by the learned
//! adjacency, then progressively gate and freeze until the target sparsity.

use astgnn::data::{generate_synthetic, make_windows, split, NormStats, SyntheticSpec};
use astgnn::flops::{cost_report, format_speedup, speedup};
use astgnn::graph::{adaptive_adjacency, EdgeState, GateParams};
use astgnn::model::{AgcrnConfig, Model, ModelConfig};
use astgnn::sparsify::{ags_sparsify, pretrain, rank_edges, SparsifyConfig};
use astgnn::Tensor;

fn main() -> astgnn::Result<()> {
    let n = 8;
    let series = generate_synthetic(&SyntheticSpec::subsumed_benchmark(n, 300, 1))?;
    let parts = split(&series, &[0.6, 0.2, 0.2], &["train", "val", "test"])?;
    let stats = NormStats::fit(&parts[0], true);
    let train = make_windows(&stats.normalize(&parts[0])?, 8, 2)?;
    let val = make_windows(&stats.normalize(&parts[1])?, 8, 2)?;

    let config = ModelConfig::Agcrn(AgcrnConfig {
        num_nodes: n,
        channels: 1,
        hidden: 6,
        embed: 2,
        layers: 1,
        history: 8,
        horizon: 2,
    });
    let seed_model = Model::new(config, GateParams::default(), 0)?;
    let budget = SparsifyConfig {
        n1: 60,
        n2: 250,
        s_g: 0.6,
        lambda: 0.3,
        lr: 0.03,
        p_g: Some(0.05),
        batch_size: 8,
        patience: 0,
        ..SparsifyConfig::default()
    };

    let (dense, _) = pretrain(&seed_model, &train, &val, &budget)?;

    // Candidate order comes from the pretrained adjacency: weakest first.
    let ranked = rank_edges(&adaptive_adjacency(dense.embedding()?)?);
    println!("weakest 5 edges by learned weight: {:?}", &ranked[..5]);

    let (localised, mask, log) = ags_sparsify(&dense, &train, &val, &budget)?;

    // Dense sampling while gates are closing, sparse sampling through the
    // recovery phase where the mask has settled and only the weights move.
    println!("\nsparsity trajectory:");
    let settled = log
        .records
        .iter()
        .position(|r| r.sparsity >= budget.s_g)
        .unwrap_or(log.records.len());
    for (k, r) in log.records.iter().enumerate() {
        if k <= settled + 4 && k % 4 == 0 || k % 50 == 0 || k + 1 == log.records.len() {
            println!("  step {:>4}: loss {:.4}, sparsity {:.3}", r.iteration, r.loss, r.sparsity);
        }
    }
    println!("final sparsity {:.3} (target {}), missed: {}", log.final_sparsity(), budget.s_g, log.target_missed);

    // The mask leaves only frozen states behind.
    let mut kept = 0;
    let mut pruned = 0;
    for i in 0..n {
        for j in 0..n {
            match mask.state(i, j) {
                EdgeState::FrozenKeep => kept += 1,
                EdgeState::FrozenPrune => pruned += 1,
                other => panic!("unexpected live state {other:?}"),
            }
        }
    }
    println!("mask: {kept} kept, {pruned} pruned (diagonal always survives)");

    // Pruned edges buy real multiply-adds in the aggregation term.
    let window = Tensor::zeros(&[8, n, 1]);
    let dense_cost = cost_report(&dense, &Tensor::ones(&[n, n]), &window)?;
    let sparse_cost = cost_report(&localised, &mask.inference_values(), &window)?;
    println!(
        "\nflops {} -> {}, speedup {}",
        dense_cost.flops(),
        sparse_cost.flops(),
        format_speedup(speedup(&dense_cost, &sparse_cost))
    );
    Ok(())
}
