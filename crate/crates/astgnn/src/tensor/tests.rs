use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randt(shape: &[usize], seed: u64) -> Tensor {
    Tensor::rand_uniform(shape, -1.0, 1.0, &mut rng(seed))
}

#[test]
fn from_vec_rejects_bad_shape_and_values() {
    assert!(matches!(
        Tensor::from_vec(&[2, 2], vec![1.0; 3]),
        Err(Error::Shape { .. })
    ));
    assert!(matches!(
        Tensor::from_vec(&[2], vec![1.0, f64::NAN]),
        Err(Error::NonFinite { .. })
    ));
}

#[test]
fn matmul_identity_is_exact() {
    let x = randt(&[3, 3], 1);
    let eye = Tensor::from_vec(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let y = x.matmul(&eye).unwrap();
    assert!(y.bits_eq(&x));
}

#[test]
fn matmul_shape_error_names_op_and_shapes() {
    let a = Tensor::zeros(&[2, 3]);
    let b = Tensor::zeros(&[2, 3]);
    let err = a.matmul(&b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
}

#[test]
fn softmax_of_equal_scores_is_uniform() {
    let t = Tensor::zeros(&[1, 2]).softmax_last().unwrap();
    assert_eq!(t.data(), &[0.5, 0.5]);
}

#[test]
fn softmax_rows_sum_to_one() {
    let t = randt(&[7, 5], 2).scale(20.0).unwrap().softmax_last().unwrap();
    for row in t.data().chunks(5) {
        let s: f64 = row.iter().sum();
        assert!((s - 1.0).abs() < 1e-12, "row sum {s}");
    }
}

#[test]
fn sigmoid_at_zero_is_exactly_half() {
    let t = Tensor::zeros(&[1]).sigmoid().unwrap();
    assert_eq!(t.data(), &[0.5]);
}

#[test]
fn sum_gradient_is_ones() {
    let x = Tensor::var(&[4], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
    let grads = x.sum_all().unwrap().backward().unwrap();
    assert_eq!(grads.get(&x).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
}

#[test]
fn l1_mean_gradient_is_sign_over_count() {
    let x = Tensor::var(&[4], vec![2.0, -3.0, 0.0, 5.0]).unwrap();
    let y = Tensor::from_vec(&[4], vec![1.0, 1.0, 0.0, 9.0]).unwrap();
    let loss = x.sub(&y).unwrap().abs().unwrap().mean_all().unwrap();
    let grads = loss.backward().unwrap();
    // signs of (x - y): +, -, 0 (kink convention), -
    assert_eq!(grads.get(&x).unwrap(), &[0.25, -0.25, 0.0, -0.25]);
}

#[test]
fn relu_and_clamp_kill_gradient_at_kinks() {
    let x = Tensor::var(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
    let g = x.relu().unwrap().sum_all().unwrap().backward().unwrap();
    assert_eq!(g.get(&x).unwrap(), &[0.0, 0.0, 1.0]);

    let x = Tensor::var(&[3], vec![0.0, 0.5, 1.0]).unwrap();
    let g = x.clamp(0.0, 1.0).unwrap().sum_all().unwrap().backward().unwrap();
    assert_eq!(g.get(&x).unwrap(), &[0.0, 1.0, 0.0]);
}

#[test]
fn backward_requires_recorded_graph_and_scalar() {
    let c = Tensor::from_vec(&[1], vec![3.0]).unwrap();
    assert!(matches!(c.backward(), Err(Error::Config(_))));

    let v = Tensor::var(&[2], vec![1.0, 2.0]).unwrap();
    assert!(matches!(v.add(&v).unwrap().backward(), Err(Error::Shape { .. })));
}

#[test]
fn finite_diff_matches_hand_derivative_of_square() {
    let mut params = ParamSet::new();
    params.insert("x", Tensor::var(&[1], vec![3.0]).unwrap()).unwrap();
    let fd = finite_diff_gradient(
        |p| {
            let x = p.get("x")?;
            x.mul(x)?.sum_all()?.item()
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!((fd["x"][0] - 6.0).abs() < 1e-8);
}

#[test]
fn finite_diff_of_constant_loss_is_zero() {
    let mut params = ParamSet::new();
    params.insert("x", Tensor::var(&[3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
    let fd = finite_diff_gradient(|_| Ok(7.5), &params, 1e-5).unwrap();
    assert_eq!(fd["x"], vec![0.0, 0.0, 0.0]);
}

#[test]
fn non_finite_output_is_rejected_with_context() {
    let t = Tensor::from_vec(&[1], vec![1e308]).unwrap();
    let err = t.scale(10.0).unwrap_err();
    assert!(matches!(err, Error::NonFinite { .. }));
    assert!(err.to_string().contains("scale"));
}

#[test]
fn rand_uniform_is_deterministic_per_seed() {
    let a = randt(&[4, 4], 9);
    let b = randt(&[4, 4], 9);
    assert!(a.bits_eq(&b));
    assert!(!a.bits_eq(&randt(&[4, 4], 10)));
}

// Finite-difference referee for every op's backward rule. The loss is a
// weighted sum of the op output so every output element gets a distinct
// gradient contribution.
fn check_grads(params: ParamSet, f: impl Fn(&ParamSet) -> crate::error::Result<Tensor>) {
    let weights = std::cell::RefCell::new(None::<Tensor>);
    let loss_of = |p: &ParamSet| -> crate::error::Result<Tensor> {
        let out = f(p)?;
        let mut w = weights.borrow_mut();
        if w.is_none() {
            let mut r = rng(0xC0FFEE);
            *w = Some(Tensor::rand_uniform(out.shape(), 0.5, 1.5, &mut r));
        }
        let flat = out.reshape(&[out.len()])?;
        let wf = w.as_ref().unwrap().reshape(&[out.len()])?;
        flat.mul(&wf)?.sum_all()
    };

    let loss = loss_of(&params).unwrap();
    let analytic = loss.backward().unwrap();
    let fd = finite_diff_gradient(|p| loss_of(p)?.item(), &params, 1e-5).unwrap();
    for (name, t) in params.iter() {
        let a = analytic.get(t).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; t.len()]);
        let err = max_rel_err(&a, &fd[name]);
        assert!(err < 1e-6, "op gradient mismatch for {name}: {err}");
    }
}

fn one_param(t: Tensor) -> ParamSet {
    let mut p = ParamSet::new();
    p.insert("x", t).unwrap();
    p
}

fn two_params(a: Tensor, b: Tensor) -> ParamSet {
    let mut p = ParamSet::new();
    p.insert("a", a).unwrap();
    p.insert("b", b).unwrap();
    p
}

#[test]
fn gradcheck_elementwise_ops() {
    check_grads(two_params(randt(&[3, 2], 11), randt(&[3, 2], 12)), |p| {
        p.get("a")?.add(p.get("b")?)
    });
    check_grads(two_params(randt(&[3, 2], 13), randt(&[3, 2], 14)), |p| {
        p.get("a")?.sub(p.get("b")?)
    });
    check_grads(two_params(randt(&[3, 2], 15), randt(&[3, 2], 16)), |p| {
        p.get("a")?.mul(p.get("b")?)
    });
    check_grads(one_param(randt(&[5], 17)), |p| p.get("x")?.neg());
    check_grads(one_param(randt(&[5], 18).add_scalar(3.0).unwrap().to_var()), |p| {
        p.get("x")?.abs()
    });
    check_grads(one_param(randt(&[5], 19).add_scalar(3.0).unwrap().to_var()), |p| {
        p.get("x")?.relu()
    });
    check_grads(one_param(randt(&[5], 20)), |p| p.get("x")?.sigmoid());
    check_grads(one_param(randt(&[5], 21)), |p| p.get("x")?.tanh());
    check_grads(one_param(randt(&[5], 22)), |p| p.get("x")?.scale(-2.5));
    check_grads(one_param(randt(&[5], 23)), |p| p.get("x")?.add_scalar(0.7));
    // interior of the clamp window only; the kink is excluded by construction
    check_grads(one_param(randt(&[5], 24).scale(0.4).unwrap().to_var()), |p| {
        p.get("x")?.clamp(-0.9, 0.9)
    });
}

#[test]
fn gradcheck_matrix_ops() {
    check_grads(two_params(randt(&[3, 4], 30), randt(&[4, 2], 31)), |p| {
        p.get("a")?.matmul(p.get("b")?)
    });
    check_grads(two_params(randt(&[2, 3, 4], 32), randt(&[2, 4, 2], 33)), |p| {
        p.get("a")?.bmm(p.get("b")?)
    });

    // mask with exact zeros: the skip path must still produce the true
    // derivative with respect to every input, including the masked entries
    let mut mask_data = randt(&[3, 3], 34).to_vec();
    mask_data[1] = 0.0;
    mask_data[4] = 0.0;
    let mut p = ParamSet::new();
    p.insert("a", randt(&[3, 3], 35)).unwrap();
    p.insert("m", Tensor::var(&[3, 3], mask_data).unwrap()).unwrap();
    p.insert("b", randt(&[3, 2], 36)).unwrap();
    check_grads(p, |p| Tensor::masked_matmul(p.get("a")?, p.get("m")?, p.get("b")?));
}

#[test]
fn gradcheck_shape_ops() {
    check_grads(one_param(randt(&[2, 3, 4], 40)), |p| p.get("x")?.transpose(0, 2));
    check_grads(one_param(randt(&[2, 6], 41)), |p| p.get("x")?.reshape(&[3, 4]));
    check_grads(two_params(randt(&[2, 2], 42), randt(&[3, 2], 43)), |p| {
        Tensor::concat(&[p.get("a")?.clone(), p.get("b")?.clone()], 0)
    });
    check_grads(one_param(randt(&[4, 3], 44)), |p| p.get("x")?.slice(0, 1, 2));
    check_grads(one_param(randt(&[4, 3], 45)), |p| p.get("x")?.gather(0, &[2, 0, 2]));
}

#[test]
fn gradcheck_normalisation_and_reductions() {
    check_grads(one_param(randt(&[4, 5], 50)), |p| p.get("x")?.softmax_last());
    let mut p = ParamSet::new();
    p.insert("x", randt(&[3, 4], 51)).unwrap();
    p.insert("g", randt(&[4], 52).add_scalar(2.0).unwrap().to_var()).unwrap();
    p.insert("b", randt(&[4], 53)).unwrap();
    check_grads(p, |p| p.get("x")?.layer_norm(p.get("g")?, p.get("b")?, 1e-5));

    check_grads(two_params(randt(&[3, 4], 54), randt(&[4], 55)), |p| {
        p.get("a")?.add_bias(p.get("b")?)
    });
    check_grads(one_param(randt(&[3, 4], 56)), |p| p.get("x")?.sum_all());
    check_grads(one_param(randt(&[3, 4], 57)), |p| p.get("x")?.mean_all());
    check_grads(one_param(randt(&[3, 4, 2], 58)), |p| p.get("x")?.sum_axis(1));
    check_grads(one_param(randt(&[3, 4, 2], 59)), |p| p.get("x")?.mean_axis(0));
}

#[test]
fn gradcheck_softmax_relu_chain() {
    // the adjacency construction chain: softmax(relu(E Eᵀ)), summed
    check_grads(one_param(randt(&[4, 2], 60)), |p| {
        let e = p.get("x")?;
        e.matmul(&e.transpose(0, 1)?)?.relu()?.softmax_last()
    });
}

#[test]
fn flop_counter_sees_documented_costs() {
    let a = randt(&[2, 3], 70);
    let b = randt(&[3, 4], 71);
    let ((), n) = measure_flops(|| {
        a.matmul(&b).unwrap();
    });
    assert_eq!(n, 2 * 2 * 3 * 4);

    let x = randt(&[5], 72);
    let ((), n) = measure_flops(|| {
        x.sigmoid().unwrap();
    });
    assert_eq!(n, 5 * SIGMOID_FLOPS);
}

#[test]
fn masked_matmul_skips_pruned_edges_in_count_and_matches_dense() {
    let a = randt(&[4, 4], 80);
    let b = randt(&[4, 3], 81);
    let mut mdata = vec![1.0; 16];
    for k in [1, 2, 3, 6, 7, 11] {
        mdata[k] = 0.0;
    }
    let m = Tensor::from_vec(&[4, 4], mdata).unwrap();

    let (masked, n) = measure_flops(|| Tensor::masked_matmul(&a, &m, &b).unwrap());
    assert_eq!(n, 10 * (1 + 2 * 3));

    let dense = a.mul(&m).unwrap().matmul(&b).unwrap();
    assert!(masked.bits_eq(&dense), "skip path must be bitwise identical");
}

#[test]
fn replay_of_same_graph_is_bitwise_identical() {
    let run = || {
        let x = randt(&[6, 6], 90);
        let w = randt(&[6, 6], 91);
        x.matmul(&w)
            .unwrap()
            .sigmoid()
            .unwrap()
            .layer_norm(&Tensor::ones(&[6]), &Tensor::zeros(&[6]), 1e-5)
            .unwrap()
    };
    assert!(run().bits_eq(&run()));
}

#[test]
fn param_set_rejects_duplicates_and_replaces_by_shape() {
    let mut p = ParamSet::new();
    p.insert("w", Tensor::zeros(&[2, 2])).unwrap();
    assert!(p.insert("w", Tensor::zeros(&[2, 2])).is_err());
    assert!(p.replace("w", Tensor::zeros(&[3])).is_err());
    p.replace("w", Tensor::ones(&[2, 2])).unwrap();
    assert_eq!(p.get("w").unwrap().data(), &[1.0; 4]);
}

#[test]
fn gather_accumulates_gradients_for_repeated_indices() {
    let x = Tensor::var(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let g = x
        .gather(0, &[1, 1, 0])
        .unwrap()
        .sum_all()
        .unwrap()
        .backward()
        .unwrap();
    assert_eq!(g.get(&x).unwrap(), &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
}

#[test]
fn transpose_roundtrip_is_identity() {
    let x = randt(&[2, 3, 4], 100);
    let y = x.transpose(0, 2).unwrap().transpose(0, 2).unwrap();
    assert!(y.bits_eq(&x));
}

#[test]
fn concat_then_slice_recovers_parts() {
    let a = randt(&[2, 3], 101);
    let b = randt(&[2, 2], 102);
    let cat = Tensor::concat(&[a.clone(), b.clone()], 1).unwrap();
    assert!(cat.slice(1, 0, 3).unwrap().bits_eq(&a));
    assert!(cat.slice(1, 3, 2).unwrap().bits_eq(&b));
}

#[test]
fn uniform_draws_stay_in_range() {
    let mut r = rng(5);
    for _ in 0..100 {
        let v: f64 = r.gen();
        assert!((0.0..1.0).contains(&v));
    }
}
