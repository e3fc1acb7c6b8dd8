//! Reverse-mode gradient accumulation over the recorded op graph.

use std::collections::{HashMap, HashSet};

use super::ops::{matmul_raw, transpose_raw, Op};
use super::Tensor;
use crate::error::{Error, Result};

/// Gradient buffers keyed by tensor id, produced by [`Tensor::backward`].
pub struct Gradients {
    grads: HashMap<u64, Vec<f64>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `t`, if `t` was reached.
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        self.grads.get(&t.id()).map(|v| v.as_slice())
    }

    pub fn contains(&self, t: &Tensor) -> bool {
        self.grads.contains_key(&t.id())
    }
}

fn acc(grads: &mut HashMap<u64, Vec<f64>>, t: &Tensor, f: impl FnOnce(&mut [f64])) {
    if !t.tracked() {
        return;
    }
    let slot = grads.entry(t.id()).or_insert_with(|| vec![0.0; t.len()]);
    f(slot);
}

fn transpose2(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

impl Tensor {
    /// Walk the recorded graph from this scalar and accumulate gradients for
    /// every tracked tensor it depends on.
    pub fn backward(&self) -> Result<Gradients> {
        if self.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a single element, shape is {:?}", self.shape()),
            ));
        }
        if !self.tracked() {
            return Err(Error::config(
                "backward: value has no recorded computation graph (no forward involving variables)",
            ));
        }

        // Post-order over tracked nodes; reversed it yields parents first.
        let mut topo: Vec<Tensor> = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        enum Visit {
            Enter(Tensor),
            Exit(Tensor),
        }
        let mut stack = vec![Visit::Enter(self.clone())];
        while let Some(v) = stack.pop() {
            match v {
                Visit::Enter(t) => {
                    if !seen.insert(t.id()) {
                        continue;
                    }
                    if let Some(op) = t.op() {
                        let children: Vec<Tensor> =
                            op.inputs().into_iter().filter(|c| c.tracked()).cloned().collect();
                        stack.push(Visit::Exit(t));
                        for c in children {
                            stack.push(Visit::Enter(c));
                        }
                    } else {
                        topo.push(t);
                    }
                }
                Visit::Exit(t) => topo.push(t),
            }
        }

        let mut grads: HashMap<u64, Vec<f64>> = HashMap::new();
        grads.insert(self.id(), vec![1.0]);

        for node in topo.iter().rev() {
            let Some(op) = node.op() else { continue };
            let Some(g) = grads.get(&node.id()).cloned() else { continue };
            propagate(&mut grads, node, op, &g);
        }

        Ok(Gradients { grads })
    }
}

fn propagate(grads: &mut HashMap<u64, Vec<f64>>, node: &Tensor, op: &Op, g: &[f64]) {
    match op {
        Op::Add(a, b) => {
            acc(grads, a, |d| add_into(d, g, 1.0));
            acc(grads, b, |d| add_into(d, g, 1.0));
        }
        Op::Sub(a, b) => {
            acc(grads, a, |d| add_into(d, g, 1.0));
            acc(grads, b, |d| add_into(d, g, -1.0));
        }
        Op::Mul(a, b) => {
            acc(grads, a, |d| {
                for ((d, g), bv) in d.iter_mut().zip(g).zip(b.data()) {
                    *d += g * bv;
                }
            });
            acc(grads, b, |d| {
                for ((d, g), av) in d.iter_mut().zip(g).zip(a.data()) {
                    *d += g * av;
                }
            });
        }
        Op::Neg(a) => acc(grads, a, |d| add_into(d, g, -1.0)),
        // |x| has derivative sign(x), defined as 0 at x == 0.
        Op::Abs(a) => acc(grads, a, |d| {
            for ((d, g), x) in d.iter_mut().zip(g).zip(a.data()) {
                *d += g * if *x > 0.0 {
                    1.0
                } else if *x < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
        }),
        Op::Relu(a) => acc(grads, a, |d| {
            for ((d, g), x) in d.iter_mut().zip(g).zip(a.data()) {
                if *x > 0.0 {
                    *d += g;
                }
            }
        }),
        Op::Sigmoid(a) => {
            let y = node.data();
            acc(grads, a, |d| {
                for ((d, g), y) in d.iter_mut().zip(g).zip(y) {
                    *d += g * y * (1.0 - y);
                }
            });
        }
        Op::Tanh(a) => {
            let y = node.data();
            acc(grads, a, |d| {
                for ((d, g), y) in d.iter_mut().zip(g).zip(y) {
                    *d += g * (1.0 - y * y);
                }
            });
        }
        Op::Scale(a, c) => acc(grads, a, |d| add_into(d, g, *c)),
        Op::Shift(a) => acc(grads, a, |d| add_into(d, g, 1.0)),
        // Pass-through strictly inside the interval, zero outside and at the
        // boundary (kink convention matching |x| at 0).
        Op::Clamp(a, lo, hi) => acc(grads, a, |d| {
            for ((d, g), x) in d.iter_mut().zip(g).zip(a.data()) {
                if *x > *lo && *x < *hi {
                    *d += g;
                }
            }
        }),
        Op::Matmul(a, b) => {
            let (m, k) = (a.shape()[0], a.shape()[1]);
            let n = b.shape()[1];
            if a.tracked() {
                let bt = transpose2(b.data(), k, n);
                let da = matmul_raw(g, &bt, m, n, k);
                acc(grads, a, |d| add_into(d, &da, 1.0));
            }
            if b.tracked() {
                let at = transpose2(a.data(), m, k);
                let db = matmul_raw(&at, g, k, m, n);
                acc(grads, b, |d| add_into(d, &db, 1.0));
            }
        }
        Op::Bmm(a, b) => {
            let (bs, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
            let n = b.shape()[2];
            if a.tracked() {
                let mut da = Vec::with_capacity(a.len());
                for i in 0..bs {
                    let gb = &g[i * m * n..(i + 1) * m * n];
                    let bt = transpose2(&b.data()[i * k * n..(i + 1) * k * n], k, n);
                    da.extend_from_slice(&matmul_raw(gb, &bt, m, n, k));
                }
                acc(grads, a, |d| add_into(d, &da, 1.0));
            }
            if b.tracked() {
                let mut db = Vec::with_capacity(b.len());
                for i in 0..bs {
                    let gb = &g[i * m * n..(i + 1) * m * n];
                    let at = transpose2(&a.data()[i * m * k..(i + 1) * m * k], m, k);
                    db.extend_from_slice(&matmul_raw(&at, gb, k, m, n));
                }
                acc(grads, b, |d| add_into(d, &db, 1.0));
            }
        }
        Op::MaskedMatmul(a, mask, b) => {
            let (m, k) = (a.shape()[0], a.shape()[1]);
            let f = b.shape()[1];
            if a.tracked() {
                acc(grads, a, |d| {
                    for i in 0..m {
                        for j in 0..k {
                            let mv = mask.data()[i * k + j];
                            if mv == 0.0 {
                                continue;
                            }
                            let dot: f64 =
                                (0..f).map(|c| g[i * f + c] * b.data()[j * f + c]).sum();
                            d[i * k + j] += mv * dot;
                        }
                    }
                });
            }
            if mask.tracked() {
                acc(grads, mask, |d| {
                    for i in 0..m {
                        for j in 0..k {
                            let dot: f64 =
                                (0..f).map(|c| g[i * f + c] * b.data()[j * f + c]).sum();
                            d[i * k + j] += a.data()[i * k + j] * dot;
                        }
                    }
                });
            }
            if b.tracked() {
                acc(grads, b, |d| {
                    for i in 0..m {
                        for j in 0..k {
                            let w = a.data()[i * k + j] * mask.data()[i * k + j];
                            if w == 0.0 {
                                continue;
                            }
                            for c in 0..f {
                                d[j * f + c] += w * g[i * f + c];
                            }
                        }
                    }
                });
            }
        }
        Op::Transpose(a, ax0, ax1) => {
            let da = transpose_raw(g, node.shape(), *ax0, *ax1);
            acc(grads, a, |d| add_into(d, &da, 1.0));
        }
        Op::Reshape(a) => acc(grads, a, |d| add_into(d, g, 1.0)),
        Op::Concat(parts, axis) => {
            let axis = *axis;
            let outer: usize = node.shape()[..axis].iter().product();
            let inner: usize = node.shape()[axis + 1..].iter().product();
            let total_span = node.shape()[axis] * inner;
            let mut offset = 0;
            for p in parts {
                let span = p.shape()[axis] * inner;
                if p.tracked() {
                    let po = offset;
                    acc(grads, p, |d| {
                        for o in 0..outer {
                            let src = o * total_span + po;
                            for i in 0..span {
                                d[o * span + i] += g[src + i];
                            }
                        }
                    });
                }
                offset += span;
            }
        }
        Op::Slice(a, axis, start, len) => {
            let axis_len = a.shape()[*axis];
            let outer: usize = a.shape()[..*axis].iter().product();
            let inner: usize = a.shape()[*axis + 1..].iter().product();
            acc(grads, a, |d| {
                for o in 0..outer {
                    let dst = (o * axis_len + start) * inner;
                    let src = o * len * inner;
                    for i in 0..len * inner {
                        d[dst + i] += g[src + i];
                    }
                }
            });
        }
        Op::Gather(a, axis, indices) => {
            let axis_len = a.shape()[*axis];
            let outer: usize = a.shape()[..*axis].iter().product();
            let inner: usize = a.shape()[*axis + 1..].iter().product();
            acc(grads, a, |d| {
                for o in 0..outer {
                    for (pos, &i) in indices.iter().enumerate() {
                        let dst = (o * axis_len + i) * inner;
                        let src = (o * indices.len() + pos) * inner;
                        for c in 0..inner {
                            d[dst + c] += g[src + c];
                        }
                    }
                }
            });
        }
        Op::SoftmaxLast(a) => {
            let w = *node.shape().last().unwrap();
            let y = node.data();
            acc(grads, a, |d| {
                for r in 0..y.len() / w {
                    let row = &y[r * w..(r + 1) * w];
                    let grow = &g[r * w..(r + 1) * w];
                    let dot: f64 = row.iter().zip(grow).map(|(y, g)| y * g).sum();
                    for c in 0..w {
                        d[r * w + c] += row[c] * (grow[c] - dot);
                    }
                }
            });
        }
        Op::LayerNorm(x, gamma, beta, eps) => {
            let w = *x.shape().last().unwrap();
            let rows = x.len() / w;
            let mut dx = vec![0.0; x.len()];
            let mut dgamma = vec![0.0; w];
            let mut dbeta = vec![0.0; w];
            for r in 0..rows {
                let xr = &x.data()[r * w..(r + 1) * w];
                let gr = &g[r * w..(r + 1) * w];
                let mean = xr.iter().sum::<f64>() / w as f64;
                let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
                let denom = (var + eps).sqrt();
                let xhat: Vec<f64> = xr.iter().map(|v| (v - mean) / denom).collect();
                let ghat: Vec<f64> = gr.iter().zip(gamma.data()).map(|(g, gm)| g * gm).collect();
                let m1 = ghat.iter().sum::<f64>() / w as f64;
                let m2 = ghat.iter().zip(&xhat).map(|(g, x)| g * x).sum::<f64>() / w as f64;
                for c in 0..w {
                    dx[r * w + c] += (ghat[c] - m1 - xhat[c] * m2) / denom;
                    dgamma[c] += gr[c] * xhat[c];
                    dbeta[c] += gr[c];
                }
            }
            acc(grads, x, |d| add_into(d, &dx, 1.0));
            acc(grads, gamma, |d| add_into(d, &dgamma, 1.0));
            acc(grads, beta, |d| add_into(d, &dbeta, 1.0));
        }
        Op::AddBias(x, bias) => {
            acc(grads, x, |d| add_into(d, g, 1.0));
            let w = bias.len();
            acc(grads, bias, |d| {
                for (i, gv) in g.iter().enumerate() {
                    d[i % w] += gv;
                }
            });
        }
        Op::SumAll(a) => acc(grads, a, |d| add_into_all(d, g[0])),
        Op::MeanAll(a) => {
            let k = a.len() as f64;
            acc(grads, a, |d| add_into_all(d, g[0] / k));
        }
        Op::SumAxis(a, axis) | Op::MeanAxis(a, axis) => {
            let axis_len = a.shape()[*axis];
            let outer: usize = a.shape()[..*axis].iter().product();
            let inner: usize = a.shape()[*axis + 1..].iter().product();
            let scale = if matches!(op, Op::MeanAxis(..)) {
                1.0 / axis_len as f64
            } else {
                1.0
            };
            acc(grads, a, |d| {
                for o in 0..outer {
                    for ax in 0..axis_len {
                        let base = (o * axis_len + ax) * inner;
                        for i in 0..inner {
                            d[base + i] += g[o * inner + i] * scale;
                        }
                    }
                }
            });
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s * scale;
    }
}

fn add_into_all(dst: &mut [f64], v: f64) {
    for d in dst.iter_mut() {
        *d += v;
    }
}
