//! The control experiment: does a sparsified model's accuracy live in its
//! surviving weights, or in the graph structure the sparsifier found?
//! Reinitialise everything, keep only the mask, and retrain.

use astgnn::data::{generate_synthetic, make_windows, split, NormStats, SyntheticSpec};
use astgnn::graph::GateParams;
use astgnn::metrics::compute_metrics;
use astgnn::model::{AgcrnConfig, Model, ModelConfig};
use astgnn::sparsify::{ags_sparsify, pretrain, reinit_retrain, SparsifyConfig};
use astgnn::Tensor;

fn mae(model: &Model, mask: &Tensor, windows: &[astgnn::data::WindowSample]) -> astgnn::Result<f64> {
    let mut pred = Vec::new();
    let mut target = Vec::new();
    for w in windows {
        pred.extend_from_slice(model.forward(&w.history, mask)?.data());
        target.extend_from_slice(w.target_matrix()?.data());
    }
    Ok(compute_metrics(&pred, &target, 1e-3)?.mae)
}

fn main() -> astgnn::Result<()> {
    let n = 8;
    let series = generate_synthetic(&SyntheticSpec::subsumed_benchmark(n, 300, 2))?;
    let parts = split(&series, &[0.6, 0.2, 0.2], &["train", "val", "test"])?;
    let stats = NormStats::fit(&parts[0], true);
    let train = make_windows(&stats.normalize(&parts[0])?, 8, 2)?;
    let val = make_windows(&stats.normalize(&parts[1])?, 8, 2)?;
    let test = make_windows(&stats.normalize(&parts[2])?, 8, 2)?;

    let config = ModelConfig::Agcrn(AgcrnConfig {
        num_nodes: n,
        channels: 1,
        hidden: 6,
        embed: 2,
        layers: 1,
        history: 8,
        horizon: 2,
    });
    let budget = SparsifyConfig {
        n1: 80,
        n2: 250,
        s_g: 0.5,
        lambda: 0.3,
        lr: 0.03,
        p_g: Some(0.05),
        batch_size: 8,
        patience: 0,
        ..SparsifyConfig::default()
    };

    let seed_model = Model::new(config, GateParams::default(), 0)?;
    let (dense, _) = pretrain(&seed_model, &train, &val, &budget)?;
    let (localised, mask, _) = ags_sparsify(&dense, &train, &val, &budget)?;

    // Same mask, fresh parameters, fresh seed.
    let (retrained, _) = reinit_retrain(&localised, &mask, &train, &val, &budget, 1234)?;

    let ones = Tensor::ones(&[n, n]);
    let binary = mask.inference_values();
    println!("test MAE (normalised scale):");
    println!("  dense pretrained:     {:.4}", mae(&dense, &ones, &test)?);
    println!("  ags localised:        {:.4}", mae(&localised, &binary, &test)?);
    println!("  reinit + retrain:     {:.4}", mae(&retrained, &binary, &test)?);
    println!(
        "\nboth sparse models use the same {}-edge mask; only their weights differ",
        mask.kept_edges()
    );

    // The retrained parameters really are fresh, not copies.
    let a = localised.params.get("embedding")?.data();
    let b = retrained.params.get("embedding")?.data();
    assert_ne!(a, b);
    println!("retrained embedding differs from the localised one (fresh init confirmed)");
    Ok(())
}
