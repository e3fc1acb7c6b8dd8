//! Reverse-mode gradients refereed by central finite differences, end to
//! end through a full forward pass.

use astgnn::graph::GateParams;
use astgnn::model::{AgcrnConfig, Model, ModelConfig};
use astgnn::tensor::{finite_diff_gradient, max_rel_err, ParamSet};
use astgnn::Tensor;

fn main() -> astgnn::Result<()> {
    let config = ModelConfig::Agcrn(AgcrnConfig {
        num_nodes: 3,
        channels: 1,
        hidden: 2,
        embed: 2,
        layers: 1,
        history: 2,
        horizon: 1,
    });
    let model = Model::new(config, GateParams::default(), 9)?;
    let history = Tensor::from_vec(&[2, 3, 1], vec![0.3, -0.4, 0.7, 0.1, 0.5, -0.2])?;
    let mask = Tensor::ones(&[3, 3]);

    let loss_of = |params: &ParamSet| -> astgnn::Result<Tensor> {
        let mut probe = model.clone();
        probe.params = params.clone();
        probe.forward(&history, &mask)?.sum_all()
    };

    let analytic = loss_of(&model.params)?.backward()?;
    let numeric = finite_diff_gradient(|p| loss_of(p)?.item(), &model.params, 1e-5)?;

    println!("{:<24} {:>8} {:>14}", "parameter", "size", "max rel err");
    let mut worst: f64 = 0.0;
    for (name, tensor) in model.params.iter() {
        let a = analytic
            .get(tensor)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; tensor.len()]);
        let err = max_rel_err(&a, &numeric[name]);
        worst = worst.max(err);
        println!("{name:<24} {:>8} {err:>14.3e}", tensor.len());
    }
    println!("\nworst disagreement: {worst:.3e}");
    assert!(worst <= 1e-6, "gradients drifted from the finite-difference oracle");
    Ok(())
}
