//! Pretrain the recurrent architecture on a synthetic series and watch the
//! loss fall.

use astgnn::data::{generate_synthetic, make_windows, split, NormStats, SyntheticSpec};
use astgnn::graph::GateParams;
use astgnn::model::{AgcrnConfig, Model, ModelConfig};
use astgnn::sparsify::{pretrain, SparsifyConfig};

fn main() -> astgnn::Result<()> {
    let series = generate_synthetic(&SyntheticSpec::subsumed_benchmark(8, 400, 5))?;
    let parts = split(&series, &[0.6, 0.2, 0.2], &["train", "val", "test"])?;
    let stats = NormStats::fit(&parts[0], true);
    let train = make_windows(&stats.normalize(&parts[0])?, 12, 3)?;
    let val = make_windows(&stats.normalize(&parts[1])?, 12, 3)?;
    println!("{} train windows, {} val windows", train.len(), val.len());

    let config = ModelConfig::Agcrn(AgcrnConfig {
        num_nodes: 8,
        channels: 1,
        hidden: 8,
        embed: 3,
        layers: 2,
        history: 12,
        horizon: 3,
    });
    let model = Model::new(config, GateParams::default(), 0)?;

    let budget = SparsifyConfig {
        n1: 120,
        lr: 0.01,
        batch_size: 8,
        patience: 20,
        val_every: 5,
        ..SparsifyConfig::default()
    };
    let (trained, log) = pretrain(&model, &train, &val, &budget)?;

    println!("\niteration  train_loss  val_mae");
    for r in &log.records {
        if let Some(mae) = r.val_mae {
            println!("{:>9}  {:>10.4}  {:>7.4}", r.iteration, r.loss, mae);
        }
    }
    let first = log.records.first().unwrap().loss;
    let last = log.records.last().unwrap().loss;
    println!("\nloss {first:.4} -> {last:.4} over {} steps", log.records.len());
    if log.stopped_early {
        println!("stopped early; best-validation parameters were restored");
    }

    // The trained model predicts (N, horizon * channels) from a window.
    let pred = trained.forward(&val[0].history, &astgnn::Tensor::ones(&[8, 8]))?;
    println!("one forward pass: history {:?} -> predictions {:?}", val[0].history.shape(), pred.shape());
    Ok(())
}
