//! The attention architecture on the same data and training loop as the
//! recurrent one; only the model config changes.

use astgnn::data::{generate_synthetic, make_windows, split, NormStats, SyntheticSpec};
use astgnn::graph::GateParams;
use astgnn::model::{AgformerConfig, Model, ModelConfig};
use astgnn::sparsify::{pretrain, SparsifyConfig};

fn main() -> astgnn::Result<()> {
    let series = generate_synthetic(&SyntheticSpec::subsumed_benchmark(8, 400, 5))?;
    let parts = split(&series, &[0.6, 0.2, 0.2], &["train", "val", "test"])?;
    let stats = NormStats::fit(&parts[0], true);
    let train = make_windows(&stats.normalize(&parts[0])?, 12, 3)?;
    let val = make_windows(&stats.normalize(&parts[1])?, 12, 3)?;

    let config = ModelConfig::Agformer(AgformerConfig {
        num_nodes: 8,
        channels: 1,
        hidden: 8,
        embed: 3,
        heads: 2,
        blocks: 2,
        history: 12,
        horizon: 3,
        ffn_width: 16,
    });
    let model = Model::new(config.clone(), GateParams::default(), 0)?;
    println!(
        "attention model: {} blocks, {} heads, hop bound {} (vs 2·L·T for the recurrent one)",
        2,
        2,
        model.hop_bound()
    );

    let budget = SparsifyConfig {
        n1: 60,
        lr: 0.01,
        batch_size: 8,
        patience: 10,
        val_every: 5,
        ..SparsifyConfig::default()
    };
    let (_, log) = pretrain(&model, &train, &val, &budget)?;

    let first = log.records.first().unwrap().loss;
    let last = log.records.last().unwrap().loss;
    println!("loss {first:.4} -> {last:.4} over {} steps", log.records.len());
    let best = log
        .records
        .iter()
        .filter_map(|r| r.val_mae)
        .fold(f64::INFINITY, f64::min);
    println!("best validation MAE: {best:.4}");
    Ok(())
}
