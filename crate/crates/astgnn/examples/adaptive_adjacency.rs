//! The learned graph: adjacency and per-node transforms both come from one
//! trainable node embedding, so there is no fixed topology anywhere.

use astgnn::graph::{adaptive_adjacency, node_transform_apply, node_transforms};
use astgnn::Tensor;

fn main() -> astgnn::Result<()> {
    // Four nodes, embedding dimension two, picked by hand.
    let embedding = Tensor::from_vec(
        &[4, 2],
        vec![1.0, 0.0, 0.9, 0.1, 0.0, 1.0, -0.5, -0.5],
    )?;
    let adjacency = adaptive_adjacency(&embedding)?;

    println!("adjacency = softmax(relu(E Eᵀ)), row-stochastic by construction:");
    for i in 0..4 {
        let row: Vec<f64> = (0..4).map(|j| adjacency.at(&[i, j])).collect();
        let sum: f64 = row.iter().sum();
        println!("  row {i}: {row:.3?}  (sum {sum:.12})");
    }

    // Nodes 0 and 1 share an embedding direction, so they attend to each
    // other; node 3's scores are all clipped by the relu, giving a uniform row.
    println!("\nnode 0 -> node 1 weight: {:.3}", adjacency.at(&[0, 1]));
    println!("node 3 row is uniform: {:.3}", adjacency.at(&[3, 0]));

    // A zero embedding degenerates to the uniform matrix.
    let uniform = adaptive_adjacency(&Tensor::zeros(&[4, 2]))?;
    println!("\nzero embedding gives uniform rows: {:.3}", uniform.at(&[0, 2]));

    // Per-node transforms: Θ_i = Σ_k E[i,k] W[k]. With a one-hot embedding
    // row, a node applies exactly one pool slice.
    let pool = Tensor::from_vec(&[2, 1, 2], vec![1.0, 2.0, 10.0, 20.0])?;
    let theta = node_transforms(&embedding, &pool)?;
    println!("\ntransform pool has shape (d, C, F) = (2, 1, 2)");
    println!("node 0 (embedding [1, 0]) uses W[0]: Θ_0 = [{}, {}]", theta.at(&[0, 0, 0]), theta.at(&[0, 0, 1]));
    println!("node 2 (embedding [0, 1]) uses W[1]: Θ_2 = [{}, {}]", theta.at(&[2, 0, 0]), theta.at(&[2, 0, 1]));

    let x = Tensor::from_vec(&[4, 1], vec![1.0, 1.0, 1.0, 1.0])?;
    let projected = node_transform_apply(&x, &theta)?;
    println!("same unit input, different node, different projection:");
    println!("  node 0 -> [{}, {}]", projected.at(&[0, 0]), projected.at(&[0, 1]));
    println!("  node 2 -> [{}, {}]", projected.at(&[2, 0]), projected.at(&[2, 1]));
    Ok(())
}
