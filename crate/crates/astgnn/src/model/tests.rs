use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::NormStats;
use crate::graph::{adaptive_adjacency, EdgeMask, EdgeState};
use crate::tensor::{finite_diff_gradient, max_rel_err};

fn agcrn_config(n: usize, t: usize, layers: usize) -> ModelConfig {
    ModelConfig::Agcrn(AgcrnConfig {
        num_nodes: n,
        channels: 1,
        hidden: 2,
        embed: 2,
        layers,
        history: t,
        horizon: 1,
    })
}

fn agformer_config(n: usize, t: usize) -> ModelConfig {
    ModelConfig::Agformer(AgformerConfig {
        num_nodes: n,
        channels: 1,
        hidden: 4,
        embed: 2,
        heads: 2,
        blocks: 1,
        history: t,
        horizon: 1,
        ffn_width: 3,
    })
}

fn randt(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::rand_uniform(shape, -1.0, 1.0, &mut rng)
}

fn eye(n: usize) -> Tensor {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
    }
    Tensor::from_vec(&[n, n], data).unwrap()
}

#[test]
fn config_validation_catches_bad_dimensions() {
    assert!(agcrn_config(3, 2, 1).validate().is_ok());
    assert!(agcrn_config(0, 2, 1).validate().is_err());
    assert!(agcrn_config(3, 2, 0).validate().is_err());
    let bad_heads = ModelConfig::Agformer(AgformerConfig {
        heads: 3,
        ..match agformer_config(2, 2) {
            ModelConfig::Agformer(c) => c,
            _ => unreachable!(),
        }
    });
    assert!(bad_heads.validate().is_err());
}

#[test]
fn init_is_deterministic_and_seed_sensitive() {
    let a = Model::new(agcrn_config(3, 2, 1), GateParams::default(), 7).unwrap();
    let b = Model::new(agcrn_config(3, 2, 1), GateParams::default(), 7).unwrap();
    let c = Model::new(agcrn_config(3, 2, 1), GateParams::default(), 8).unwrap();
    for (name, t) in a.params.iter() {
        assert!(t.bits_eq(b.params.get(name).unwrap()));
    }
    assert!(!a.embedding().unwrap().bits_eq(c.embedding().unwrap()));
    // biases start at zero, layer norm at identity
    assert!(a.params.get("head.b").unwrap().data().iter().all(|v| *v == 0.0));
}

#[test]
fn zero_weight_cell_halves_the_hidden_state() {
    let (n, f, cin) = (3, 2, 3); // cin = channels + hidden
    let cell = AgcrnCell {
        theta_update: Tensor::zeros(&[n, cin, f]),
        bias_update: Tensor::zeros(&[f]),
        theta_reset: Tensor::zeros(&[n, cin, f]),
        bias_reset: Tensor::zeros(&[f]),
        theta_cand: Tensor::zeros(&[n, cin, f]),
        bias_cand: Tensor::zeros(&[f]),
    };
    let h_prev = randt(&[n, f], 1);
    let x = randt(&[n, 1], 2);
    let h = cell_step(&cell, &eye(n), &Tensor::ones(&[n, n]), &x, &h_prev).unwrap();
    // u = sigmoid(0) = 1/2 and c = tanh(0) = 0, so h = h_prev / 2
    for (a, b) in h.data().iter().zip(h_prev.data()) {
        assert_eq!(*a, b * 0.5);
    }

    let zero = Tensor::zeros(&[n, f]);
    let h = cell_step(&cell, &eye(n), &Tensor::ones(&[n, n]), &Tensor::zeros(&[n, 1]), &zero)
        .unwrap();
    assert!(h.data().iter().all(|v| *v == 0.0));
}

#[test]
fn diagonal_mask_blocks_cross_node_flow_through_the_cell() {
    let model = Model::new(agcrn_config(4, 1, 1), GateParams::default(), 3).unwrap();
    let adjacency = adaptive_adjacency(model.embedding().unwrap()).unwrap();
    let cell = AgcrnCell::build(&model.params, model.embedding().unwrap(), 0).unwrap();
    let h_prev = randt(&[4, 2], 4);
    let x = randt(&[4, 1], 5);
    let mut bumped = x.to_vec();
    bumped[2] += 10.0; // perturb node 2 only
    let x2 = Tensor::from_vec(&[4, 1], bumped).unwrap();

    let a = cell_step(&cell, &adjacency, &eye(4), &x, &h_prev).unwrap();
    let b = cell_step(&cell, &adjacency, &eye(4), &x2, &h_prev).unwrap();
    for node in 0..4 {
        let same = a.data()[node * 2..][..2]
            .iter()
            .zip(&b.data()[node * 2..][..2])
            .all(|(p, q)| p.to_bits() == q.to_bits());
        assert_eq!(same, node != 2, "node {node}");
    }
}

// Plain-loop re-implementation of the full recurrent forward pass.
struct Reference<'a> {
    model: &'a Model,
    n: usize,
    d: usize,
    f: usize,
    c: usize,
    layers: usize,
}

impl<'a> Reference<'a> {
    fn sigmoid(x: f64) -> f64 {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    }

    fn adjacency(&self) -> Vec<f64> {
        let e = self.model.embedding().unwrap().data();
        let (n, d) = (self.n, self.d);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..d {
                    s += e[i * d + k] * e[j * d + k];
                }
                a[i * n + j] = s.max(0.0);
            }
        }
        for i in 0..n {
            let row = &mut a[i * n..(i + 1) * n];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        a
    }

    fn theta(&self, name: &str, cin: usize) -> Vec<f64> {
        let e = self.model.embedding().unwrap().data();
        let w = self.model.params.get(name).unwrap().data();
        let mut th = vec![0.0; self.n * cin * self.f];
        for i in 0..self.n {
            for a in 0..cin {
                for b in 0..self.f {
                    let mut s = 0.0;
                    for k in 0..self.d {
                        s += e[i * self.d + k] * w[(k * cin + a) * self.f + b];
                    }
                    th[(i * cin + a) * self.f + b] = s;
                }
            }
        }
        th
    }

    fn gate(
        &self,
        adj: &[f64],
        theta: &[f64],
        bias: &[f64],
        input: &[f64],
        cin: usize,
        act: fn(f64) -> f64,
    ) -> Vec<f64> {
        let (n, f) = (self.n, self.f);
        let mut p = vec![0.0; n * f];
        for i in 0..n {
            for b in 0..f {
                let mut s = 0.0;
                for a in 0..cin {
                    s += input[i * cin + a] * theta[(i * cin + a) * f + b];
                }
                p[i * f + b] = s;
            }
        }
        let mut out = vec![0.0; n * f];
        for i in 0..n {
            for b in 0..f {
                let mut s = 0.0;
                for j in 0..n {
                    s += adj[i * n + j] * p[j * f + b];
                }
                out[i * f + b] = act(s + bias[b]);
            }
        }
        out
    }

    fn forward(&self, history: &Tensor) -> Vec<f64> {
        let (n, f, c) = (self.n, self.f, self.c);
        let adj = self.adjacency();
        let mut hidden = vec![vec![0.0; n * f]; self.layers];
        let t_len = history.shape()[0];
        for t in 0..t_len {
            let mut input: Vec<f64> = (0..n * c).map(|k| history.data()[t * n * c + k]).collect();
            let mut cin = c + f;
            for layer in 0..self.layers {
                let bias = |g: &str| {
                    self.model.params.get(&format!("agcrn.l{layer}.{g}.b")).unwrap().data().to_vec()
                };
                let cat: Vec<f64> = (0..n)
                    .flat_map(|i| {
                        input[i * (cin - f)..(i + 1) * (cin - f)]
                            .iter()
                            .chain(&hidden[layer][i * f..(i + 1) * f])
                            .cloned()
                            .collect::<Vec<_>>()
                    })
                    .collect();
                let u = self.gate(
                    &adj,
                    &self.theta(&format!("agcrn.l{layer}.update.w"), cin),
                    &bias("update"),
                    &cat,
                    cin,
                    Self::sigmoid,
                );
                let r = self.gate(
                    &adj,
                    &self.theta(&format!("agcrn.l{layer}.reset.w"), cin),
                    &bias("reset"),
                    &cat,
                    cin,
                    Self::sigmoid,
                );
                let cat_c: Vec<f64> = (0..n)
                    .flat_map(|i| {
                        let own = input[i * (cin - f)..(i + 1) * (cin - f)].to_vec();
                        let gated: Vec<f64> = (0..f)
                            .map(|b| r[i * f + b] * hidden[layer][i * f + b])
                            .collect();
                        own.into_iter().chain(gated)
                    })
                    .collect();
                let cand = self.gate(
                    &adj,
                    &self.theta(&format!("agcrn.l{layer}.cand.w"), cin),
                    &bias("cand"),
                    &cat_c,
                    cin,
                    f64::tanh,
                );
                for k in 0..n * f {
                    hidden[layer][k] =
                        u[k] * hidden[layer][k] + (1.0 - u[k]) * cand[k];
                }
                input = hidden[layer].clone();
                cin = 2 * f;
            }
        }
        let head_w = self.model.params.get("head.w").unwrap().data();
        let head_b = self.model.params.get("head.b").unwrap().data();
        let out_w = head_b.len();
        let last = &hidden[self.layers - 1];
        let mut pred = vec![0.0; n * out_w];
        for i in 0..n {
            for o in 0..out_w {
                let mut s = head_b[o];
                for b in 0..f {
                    s += last[i * f + b] * head_w[b * out_w + o];
                }
                pred[i * out_w + o] = s;
            }
        }
        pred
    }
}

#[test]
fn recurrent_forward_matches_plain_loop_unrolling() {
    for (layers, seed) in [(1, 10), (2, 11)] {
        let model = Model::new(agcrn_config(2, 2, layers), GateParams::default(), seed).unwrap();
        let history = randt(&[2, 2, 1], seed + 50);
        let got = model.forward(&history, &Tensor::ones(&[2, 2])).unwrap();
        let reference = Reference { model: &model, n: 2, d: 2, f: 2, c: 1, layers };
        let want = reference.forward(&history);
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12, "layers={layers}: {g} vs {w}");
        }
    }
}

#[test]
fn single_step_forward_equals_cell_plus_head() {
    let model = Model::new(agcrn_config(3, 1, 1), GateParams::default(), 12).unwrap();
    let history = randt(&[1, 3, 1], 13);
    let mask = Tensor::ones(&[3, 3]);
    let got = model.forward(&history, &mask).unwrap();

    let adjacency = adaptive_adjacency(model.embedding().unwrap()).unwrap();
    let cell = AgcrnCell::build(&model.params, model.embedding().unwrap(), 0).unwrap();
    let x0 = history.reshape(&[3, 1]).unwrap();
    let h = cell_step(&cell, &adjacency, &mask, &x0, &Tensor::zeros(&[3, 2])).unwrap();
    let want = h
        .matmul(model.params.get("head.w").unwrap())
        .unwrap()
        .add_bias(model.params.get("head.b").unwrap())
        .unwrap();
    assert!(got.bits_eq(&want));
}

#[test]
fn node_permutation_permutes_predictions() {
    for config in [agcrn_config(4, 2, 1), agformer_config(4, 2)] {
        let model = Model::new(config.clone(), GateParams::default(), 20).unwrap();
        let history = randt(&[2, 4, 1], 21);
        let base = model.forward(&history, &Tensor::ones(&[4, 4])).unwrap();

        let perm = [2usize, 0, 3, 1];
        let mut permuted = Model::new(config, GateParams::default(), 20).unwrap();
        let e = permuted.params.get("embedding").unwrap().gather(0, &perm).unwrap();
        permuted.params.replace("embedding", e).unwrap();
        let hist_p = history.gather(1, &perm).unwrap();
        let pred_p = permuted.forward(&hist_p, &Tensor::ones(&[4, 4])).unwrap();

        for (new_row, old_row) in perm.iter().enumerate() {
            let w = base.shape()[1];
            for k in 0..w {
                let a = base.at(&[*old_row, k]);
                let b = pred_p.at(&[new_row, k]);
                assert!((a - b).abs() < 1e-12, "row {old_row}->{new_row}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn zeroed_projections_make_attention_blocks_transparent() {
    let (n, t, f, ffn) = (3, 4, 4, 3);
    let block = AgformerBlock {
        heads: 2,
        ln1_gamma: Tensor::ones(&[f]),
        ln1_beta: Tensor::zeros(&[f]),
        theta_q: Tensor::zeros(&[n, f, f]),
        bias_q: Tensor::zeros(&[f]),
        theta_k: Tensor::zeros(&[n, f, f]),
        bias_k: Tensor::zeros(&[f]),
        theta_v: Tensor::zeros(&[n, f, f]),
        bias_v: Tensor::zeros(&[f]),
        ln2_gamma: Tensor::ones(&[f]),
        ln2_beta: Tensor::zeros(&[f]),
        theta_ffn1: Tensor::zeros(&[n, f, ffn]),
        bias_ffn1: Tensor::zeros(&[ffn]),
        theta_ffn2: Tensor::zeros(&[n, ffn, f]),
        bias_ffn2: Tensor::zeros(&[f]),
    };
    let x = randt(&[t, n, f], 30);
    let out = block_forward(&block, &eye(n), &Tensor::ones(&[n, n]), &x).unwrap();
    assert!(out.bits_eq(&x), "zero scores give uniform attention over zero values");
}

#[test]
fn single_timestep_attention_passes_values_through() {
    let model = Model::new(agformer_config(3, 1), GateParams::default(), 31).unwrap();
    let embedding = model.embedding().unwrap();
    let adjacency = adaptive_adjacency(embedding).unwrap();
    let mask = Tensor::ones(&[3, 3]);
    let block = AgformerBlock::build(&model.params, embedding, 2, 0).unwrap();
    let x = randt(&[1, 3, 4], 32);
    let out = block_forward(&block, &adjacency, &mask, &x).unwrap();

    // with one key the softmax weight is exactly 1, so the attention output
    // is the V projection of the normed input
    let normed = x.layer_norm(&block.ln1_gamma, &block.ln1_beta, 1e-5).unwrap();
    let v = napl_apply_seq(&adjacency, &mask, &normed, &block.theta_v, &block.bias_v, Activation::Identity).unwrap();
    let mid = x.add(&v).unwrap();
    let normed2 = mid.layer_norm(&block.ln2_gamma, &block.ln2_beta, 1e-5).unwrap();
    let f1 = napl_apply_seq(&adjacency, &mask, &normed2, &block.theta_ffn1, &block.bias_ffn1, Activation::Relu).unwrap();
    let f2 = napl_apply_seq(&adjacency, &mask, &f1, &block.theta_ffn2, &block.bias_ffn2, Activation::Identity).unwrap();
    assert!(out.bits_eq(&mid.add(&f2).unwrap()));
}

#[test]
fn forward_is_deterministic_for_both_architectures() {
    for config in [agcrn_config(3, 3, 2), agformer_config(3, 3)] {
        let run = || {
            let model = Model::new(config.clone(), GateParams::default(), 40).unwrap();
            model.forward(&randt(&[3, 3, 1], 41), &Tensor::ones(&[3, 3])).unwrap()
        };
        assert!(run().bits_eq(&run()));
    }
}

// Central differences are only trustworthy when no ReLU argument sits within
// the probe step of its kink; checked explicitly for the attention model.
fn min_relu_margin(model: &Model, history: &Tensor, mask: &Tensor) -> f64 {
    let embedding = model.embedding().unwrap();
    let adjacency = adaptive_adjacency(embedding).unwrap();
    let block = AgformerBlock::build(&model.params, embedding, 2, 0).unwrap();
    let (t, n, c) = (history.shape()[0], history.shape()[1], history.shape()[2]);
    let f = block.ln1_gamma.len();
    let embedded = history
        .reshape(&[t * n, c])
        .unwrap()
        .matmul(model.params.get("embed.w").unwrap())
        .unwrap()
        .add_bias(model.params.get("embed.b").unwrap())
        .unwrap()
        .reshape(&[t, n, f])
        .unwrap()
        .add(model.pe.as_ref().unwrap())
        .unwrap();
    let normed = embedded.layer_norm(&block.ln1_gamma, &block.ln1_beta, 1e-5).unwrap();
    let v = napl_apply_seq(&adjacency, mask, &normed, &block.theta_v, &block.bias_v, Activation::Identity).unwrap();
    // attention is a convex combination of V rows, so probing the FFN on the
    // pre-attention path bounds the kink distances we care about
    let mid = embedded.add(&v).unwrap();
    let normed2 = mid.layer_norm(&block.ln2_gamma, &block.ln2_beta, 1e-5).unwrap();
    let pre = napl_apply_seq(&adjacency, mask, &normed2, &block.theta_ffn1, &block.bias_ffn1, Activation::Identity).unwrap();
    pre.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

#[test]
fn gradients_match_finite_differences_end_to_end() {
    for (config, seed) in [(agcrn_config(3, 2, 1), 50u64), (agformer_config(2, 2), 53)] {
        let model = Model::new(config.clone(), GateParams::default(), seed).unwrap();
        let n = config.num_nodes();
        let history = randt(&[2, n, 1], seed + 5);
        let mask = Tensor::ones(&[n, n]);
        if matches!(config, ModelConfig::Agformer(_)) {
            let margin = min_relu_margin(&model, &history, &mask);
            assert!(margin > 1e-3, "seed places a ReLU argument too close to 0: {margin}");
        }

        let loss_of = |params: &crate::tensor::ParamSet| -> crate::error::Result<Tensor> {
            let probe = Model { params: params.clone(), ..model.clone() };
            probe.forward(&history, &mask)?.sum_all()
        };
        let analytic = loss_of(&model.params).unwrap().backward().unwrap();
        let fd = finite_diff_gradient(|p| loss_of(p)?.item(), &model.params, 1e-5).unwrap();
        for (name, t) in model.params.iter() {
            let a = analytic
                .get(t)
                .map(|s| s.to_vec())
                .unwrap_or_else(|| vec![0.0; t.len()]);
            let err = max_rel_err(&a, &fd[name]);
            assert!(err <= 1e-4, "{name}: relative error {err}");
        }
    }
}

#[test]
fn diagonal_mask_isolates_nodes_in_full_forward() {
    for config in [agcrn_config(4, 2, 1), agformer_config(4, 2)] {
        let model = Model::new(config, GateParams::default(), 60).unwrap();
        let history = randt(&[2, 4, 1], 61);
        let mut bumped = history.to_vec();
        bumped[1] += 5.0; // (t=0, node=1, c=0)
        let history2 = Tensor::from_vec(&[2, 4, 1], bumped).unwrap();

        let a = model.forward(&history, &eye(4)).unwrap();
        let b = model.forward(&history2, &eye(4)).unwrap();
        let w = a.shape()[1];
        for node in 0..4 {
            let same = (0..w).all(|k| a.at(&[node, k]).to_bits() == b.at(&[node, k]).to_bits());
            assert_eq!(same, node != 1, "node {node}");
        }
    }
}

#[test]
fn single_edge_mask_limits_influence_to_reachable_nodes() {
    // mask edge 1 -> 0 only (plus self-loops): node 1 may influence node 0,
    // node 2 must stay isolated from both
    let mut mask_data = vec![0.0; 9];
    for i in 0..3 {
        mask_data[i * 3 + i] = 1.0;
    }
    mask_data[1] = 1.0; // row 0, column 1: aggregation pulls node 1 into node 0
    let mask = Tensor::from_vec(&[3, 3], mask_data).unwrap();

    for config in [agcrn_config(3, 2, 1), agformer_config(3, 2)] {
        let model = Model::new(config, GateParams::default(), 62).unwrap();
        let history = randt(&[2, 3, 1], 63);
        let mut bumped = history.to_vec();
        bumped[1] += 3.0; // node 1 at t=0
        let history2 = Tensor::from_vec(&[2, 3, 1], bumped).unwrap();

        let a = model.forward(&history, &mask).unwrap();
        let b = model.forward(&history2, &mask).unwrap();
        let w = a.shape()[1];
        let same = |node: usize| {
            (0..w).all(|k| a.at(&[node, k]).to_bits() == b.at(&[node, k]).to_bits())
        };
        assert!(!same(1), "a node always sees its own inputs");
        assert!(same(2), "no path from node 1 to node 2");
    }
}

#[test]
fn hop_bounds_follow_architecture_depth() {
    assert_eq!(agcrn_config(3, 5, 2).hop_bound(), 2 * 2 * 5);
    assert_eq!(agformer_config(3, 5).hop_bound(), 3);
}

#[test]
fn forward_rejects_wrong_shapes() {
    let model = Model::new(agcrn_config(3, 2, 1), GateParams::default(), 70).unwrap();
    assert!(model.forward(&randt(&[2, 2, 1], 71), &Tensor::ones(&[3, 3])).is_err());
    assert!(model.forward(&randt(&[2, 3, 1], 72), &Tensor::ones(&[2, 2])).is_err());
}

#[test]
fn numerical_blowup_reports_the_timestep() {
    // saturating activations swallow merely large inputs, so force a genuine
    // overflow: huge input times a huge node transform
    let mut model = Model::new(agcrn_config(2, 3, 1), GateParams::default(), 73).unwrap();
    model.params.replace("embedding", Tensor::full(&[2, 2], 0.1)).unwrap();
    model.params.replace("agcrn.l0.update.w", Tensor::full(&[2, 3, 2], 1e200)).unwrap();
    let history = Tensor::full(&[3, 2, 1], 1e200);
    let err = model.forward(&history, &Tensor::ones(&[2, 2])).unwrap_err();
    assert!(matches!(err, Error::NonFinite { .. }));
    assert!(err.to_string().contains("timestep 0"), "{err}");
}

#[test]
fn prediction_frames_restores_time_major_layout() {
    let pred = randt(&[3, 4], 80); // N=3, H*C = 2*2
    let frames = prediction_frames(&pred, 2, 2).unwrap();
    assert_eq!(frames.shape(), &[2, 3, 2]);
    for n in 0..3 {
        for h in 0..2 {
            for c in 0..2 {
                assert_eq!(frames.at(&[h, n, c]), pred.at(&[n, h * 2 + c]));
            }
        }
    }
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = Model::new(agformer_config(3, 2), GateParams::default(), 90).unwrap();
    let mut mask = EdgeMask::all_open(3);
    mask.transition(0, 1, EdgeState::FrozenPrune).unwrap();
    mask.transition(1, 2, EdgeState::Gated).unwrap();
    let norm = NormStats {
        per_node: true,
        mean: vec![0.5, -1.25, 3.0],
        std: vec![1.0, 2.0, 0.125],
        degenerate_dims: 0,
    };

    let hash = save_checkpoint(&path, &model, &mask, Some(&norm)).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.model.config, model.config);
    assert_eq!(loaded.model.seed, 90);
    assert_eq!(loaded.mask, mask);
    assert_eq!(loaded.norm_stats, Some(norm.clone()));
    for (name, t) in model.params.iter() {
        assert!(loaded.model.params.get(name).unwrap().bits_eq(t), "{name}");
    }

    // saving the loaded model reproduces the identical file
    let path2 = dir.path().join("again.ckpt");
    let hash2 = save_checkpoint(&path2, &loaded.model, &loaded.mask, Some(&norm)).unwrap();
    assert_eq!(hash, hash2);
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    assert_eq!(checkpoint_hash(&path).unwrap(), hash);

    // loaded models evaluate identically
    let x = randt(&[2, 3, 1], 91);
    let m = Tensor::ones(&[3, 3]);
    assert!(model.forward(&x, &m).unwrap().bits_eq(&loaded.model.forward(&x, &m).unwrap()));
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ckpt");
    std::fs::write(&path, "{not json").unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Artifact(_))));

    let model = Model::new(agcrn_config(2, 1, 1), GateParams::default(), 92).unwrap();
    let good = dir.path().join("good.ckpt");
    save_checkpoint(&good, &model, &EdgeMask::all_open(2), None).unwrap();
    let mut text = std::fs::read_to_string(&good).unwrap();
    text = text.replace("\"format_version\": 1", "\"format_version\": 9");
    std::fs::write(&path, text).unwrap();
    let err = load_checkpoint(&path).unwrap_err().to_string();
    assert!(err.contains("version"), "{err}");
}

#[test]
fn position_table_handles_odd_widths() {
    let pe = sinusoidal_pe(3, 2, 5);
    assert_eq!(pe.shape(), &[3, 2, 5]);
    // t = 0: sines are 0, cosines are 1
    for n in 0..2 {
        assert_eq!(pe.at(&[0, n, 0]), 0.0);
        assert_eq!(pe.at(&[0, n, 1]), 1.0);
    }
    // both nodes share the same table
    for t in 0..3 {
        for k in 0..5 {
            assert_eq!(pe.at(&[t, 0, k]), pe.at(&[t, 1, k]));
        }
    }
}
