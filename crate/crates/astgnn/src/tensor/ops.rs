//! Forward implementations of the fixed op set.
//!
//! Every op: validate shapes, compute, report cost, reject non-finite output.

use super::{check_finite, count, numel, strides, Tensor};
use crate::error::{Error, Result};

#[derive(Clone)]
pub(crate) enum Op {
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Neg(Tensor),
    Abs(Tensor),
    Relu(Tensor),
    Sigmoid(Tensor),
    Tanh(Tensor),
    Scale(Tensor, f64),
    Shift(Tensor),
    Clamp(Tensor, f64, f64),
    Matmul(Tensor, Tensor),
    Bmm(Tensor, Tensor),
    MaskedMatmul(Tensor, Tensor, Tensor),
    Transpose(Tensor, usize, usize),
    Reshape(Tensor),
    Concat(Vec<Tensor>, usize),
    Slice(Tensor, usize, usize, usize),
    Gather(Tensor, usize, Vec<usize>),
    SoftmaxLast(Tensor),
    LayerNorm(Tensor, Tensor, Tensor, f64),
    AddBias(Tensor, Tensor),
    SumAll(Tensor),
    MeanAll(Tensor),
    SumAxis(Tensor, usize),
    MeanAxis(Tensor, usize),
}

impl Op {
    pub(crate) fn inputs(&self) -> Vec<&Tensor> {
        match self {
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Matmul(a, b) | Op::Bmm(a, b) => {
                vec![a, b]
            }
            Op::MaskedMatmul(a, m, b) => vec![a, m, b],
            Op::Neg(a)
            | Op::Abs(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Scale(a, _)
            | Op::Shift(a)
            | Op::Clamp(a, _, _)
            | Op::Transpose(a, _, _)
            | Op::Reshape(a)
            | Op::Slice(a, _, _, _)
            | Op::Gather(a, _, _)
            | Op::SoftmaxLast(a)
            | Op::SumAll(a)
            | Op::MeanAll(a)
            | Op::SumAxis(a, _)
            | Op::MeanAxis(a, _) => vec![a],
            Op::LayerNorm(x, g, b, _) => vec![x, g, b],
            Op::AddBias(x, b) => vec![x, b],
            Op::Concat(xs, _) => xs.iter().collect(),
        }
    }

}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("operand shapes {:?} and {:?} differ", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn ew(
    op_name: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
    make: impl Fn(Tensor, Tensor) -> Op,
) -> Result<Tensor> {
    same_shape(op_name, a, b)?;
    let data: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    count::add(data.len() as u64);
    check_finite(op_name, &data)?;
    Ok(Tensor::result(a.shape().to_vec(), data, make(a.clone(), b.clone())))
}

fn unary(
    op_name: &'static str,
    a: &Tensor,
    cost_per_elem: u64,
    f: impl Fn(f64) -> f64,
    make: impl Fn(Tensor) -> Op,
) -> Result<Tensor> {
    let data: Vec<f64> = a.data().iter().map(|x| f(*x)).collect();
    count::add(cost_per_elem * data.len() as u64);
    check_finite(op_name, &data)?;
    Ok(Tensor::result(a.shape().to_vec(), data, make(a.clone())))
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        ew("add", self, other, |x, y| x + y, Op::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        ew("sub", self, other, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        ew("mul", self, other, |x, y| x * y, Op::Mul)
    }

    pub fn neg(&self) -> Result<Tensor> {
        unary("neg", self, 1, |x| -x, Op::Neg)
    }

    pub fn abs(&self) -> Result<Tensor> {
        unary("abs", self, 1, f64::abs, Op::Abs)
    }

    pub fn relu(&self) -> Result<Tensor> {
        unary("relu", self, 1, |x| x.max(0.0), Op::Relu)
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        unary("sigmoid", self, count::SIGMOID_FLOPS, sigmoid_scalar, Op::Sigmoid)
    }

    pub fn tanh(&self) -> Result<Tensor> {
        unary("tanh", self, count::ACTIVATION_TANH_FLOPS, f64::tanh, Op::Tanh)
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        unary("scale", self, 1, |x| c * x, |t| Op::Scale(t, c))
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor> {
        unary("shift", self, 1, |x| x + c, Op::Shift)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor> {
        if !(lo <= hi) {
            return Err(Error::shape("clamp", format!("empty interval [{lo}, {hi}]")));
        }
        unary("clamp", self, 2, |x| x.clamp(lo, hi), |t| Op::Clamp(t, lo, hi))
    }

    /// 2-D matrix product `(m,k) x (k,n) -> (m,n)`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.shape()[1] != other.shape()[0] {
            return Err(Error::shape(
                "matmul",
                format!("cannot multiply {:?} by {:?}", self.shape(), other.shape()),
            ));
        }
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let n = other.shape()[1];
        let data = matmul_raw(self.data(), other.data(), m, k, n);
        count::add(2 * (m * k * n) as u64);
        check_finite("matmul", &data)?;
        Ok(Tensor::result(vec![m, n], data, Op::Matmul(self.clone(), other.clone())))
    }

    /// Batched matrix product `(b,m,k) x (b,k,n) -> (b,m,n)`.
    pub fn bmm(&self, other: &Tensor) -> Result<Tensor> {
        let ok = self.rank() == 3
            && other.rank() == 3
            && self.shape()[0] == other.shape()[0]
            && self.shape()[2] == other.shape()[1];
        if !ok {
            return Err(Error::shape(
                "bmm",
                format!("cannot batch-multiply {:?} by {:?}", self.shape(), other.shape()),
            ));
        }
        let (b, m, k) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let n = other.shape()[2];
        let mut data = Vec::with_capacity(b * m * n);
        for i in 0..b {
            let lhs = &self.data()[i * m * k..(i + 1) * m * k];
            let rhs = &other.data()[i * k * n..(i + 1) * k * n];
            data.extend_from_slice(&matmul_raw(lhs, rhs, m, k, n));
        }
        count::add(2 * (b * m * k * n) as u64);
        check_finite("bmm", &data)?;
        Ok(Tensor::result(vec![b, m, n], data, Op::Bmm(self.clone(), other.clone())))
    }

    /// Masked aggregation `(a ⊙ mask) x b` that skips mask entries equal to
    /// exactly zero, so pruned edges cost nothing and contribute nothing.
    /// `a` and `mask` are `(m,k)`, `b` is `(k,f)`.
    pub fn masked_matmul(a: &Tensor, mask: &Tensor, b: &Tensor) -> Result<Tensor> {
        same_shape("masked_matmul", a, mask)?;
        let ok = a.rank() == 2 && b.rank() == 2 && a.shape()[1] == b.shape()[0];
        if !ok {
            return Err(Error::shape(
                "masked_matmul",
                format!("cannot aggregate {:?} masked by {:?} over {:?}", a.shape(), mask.shape(), b.shape()),
            ));
        }
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let f = b.shape()[1];
        let mut data = vec![0.0; m * f];
        let mut kept = 0u64;
        for i in 0..m {
            for j in 0..k {
                let mv = mask.data()[i * k + j];
                if mv == 0.0 {
                    continue;
                }
                kept += 1;
                let w = a.data()[i * k + j] * mv;
                let row = &b.data()[j * f..(j + 1) * f];
                let out = &mut data[i * f..(i + 1) * f];
                for (o, bv) in out.iter_mut().zip(row) {
                    *o += w * bv;
                }
            }
        }
        count::add(kept * (1 + 2 * f as u64));
        check_finite("masked_matmul", &data)?;
        Ok(Tensor::result(
            vec![m, f],
            data,
            Op::MaskedMatmul(a.clone(), mask.clone(), b.clone()),
        ))
    }

    /// Swap two axes.
    pub fn transpose(&self, ax0: usize, ax1: usize) -> Result<Tensor> {
        if ax0 >= self.rank() || ax1 >= self.rank() {
            return Err(Error::shape(
                "transpose",
                format!("axes ({ax0}, {ax1}) out of range for shape {:?}", self.shape()),
            ));
        }
        let mut out_shape = self.shape().to_vec();
        out_shape.swap(ax0, ax1);
        let data = transpose_raw(self.data(), self.shape(), ax0, ax1);
        Ok(Tensor::result(out_shape, data, Op::Transpose(self.clone(), ax0, ax1)))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.len() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {:?}", self.shape(), shape),
            ));
        }
        Ok(Tensor::result(shape.to_vec(), self.to_vec(), Op::Reshape(self.clone())))
    }

    /// Concatenate tensors along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no tensors given".to_string()))?;
        if axis >= first.rank() {
            return Err(Error::shape(
                "concat",
                format!("axis {axis} out of range for shape {:?}", first.shape()),
            ));
        }
        let mut axis_total = 0;
        for p in parts {
            let compatible = p.rank() == first.rank()
                && p.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape(
                    "concat",
                    format!("shape {:?} incompatible with {:?} on axis {axis}", p.shape(), first.shape()),
                ));
            }
            axis_total += p.shape()[axis];
        }
        let mut out_shape = first.shape().to_vec();
        out_shape[axis] = axis_total;
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for p in parts {
                let span = p.shape()[axis] * inner;
                data.extend_from_slice(&p.data()[o * span..(o + 1) * span]);
            }
        }
        Ok(Tensor::result(out_shape, data, Op::Concat(parts.to_vec(), axis)))
    }

    /// Contiguous range `[start, start+len)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() || start + len > self.shape()[axis] {
            return Err(Error::shape(
                "slice",
                format!("range {start}..{} invalid on axis {axis} of {:?}", start + len, self.shape()),
            ));
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let axis_len = self.shape()[axis];
        let mut out_shape = self.shape().to_vec();
        out_shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * axis_len + start) * inner;
            data.extend_from_slice(&self.data()[base..base + len * inner]);
        }
        Ok(Tensor::result(out_shape, data, Op::Slice(self.clone(), axis, start, len)))
    }

    /// Select positions along `axis` in the given order (repeats allowed).
    pub fn gather(&self, axis: usize, indices: &[usize]) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::shape(
                "gather",
                format!("axis {axis} out of range for shape {:?}", self.shape()),
            ));
        }
        let axis_len = self.shape()[axis];
        if let Some(bad) = indices.iter().find(|i| **i >= axis_len) {
            return Err(Error::shape(
                "gather",
                format!("index {bad} out of range for axis {axis} of {:?}", self.shape()),
            ));
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let mut out_shape = self.shape().to_vec();
        out_shape[axis] = indices.len();
        let mut data = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                let base = (o * axis_len + i) * inner;
                data.extend_from_slice(&self.data()[base..base + inner]);
            }
        }
        Ok(Tensor::result(
            out_shape,
            data,
            Op::Gather(self.clone(), axis, indices.to_vec()),
        ))
    }

    /// Numerically stable softmax over the last axis.
    pub fn softmax_last(&self) -> Result<Tensor> {
        if self.rank() == 0 {
            return Err(Error::shape("softmax", "rank-0 tensor has no axis".to_string()));
        }
        let w = self.shape()[self.rank() - 1];
        if w == 0 {
            return Err(Error::shape("softmax", "empty last axis".to_string()));
        }
        let mut data = self.to_vec();
        for row in data.chunks_mut(w) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        count::add((5 * w as u64 - 2) * (self.len() / w) as u64);
        check_finite("softmax", &data)?;
        Ok(Tensor::result(self.shape().to_vec(), data, Op::SoftmaxLast(self.clone())))
    }

    /// Layer normalisation over the last axis with learnable gain and shift.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        let w = *self.shape().last().unwrap_or(&0);
        let ok = w > 0 && gamma.shape() == [w] && beta.shape() == [w] && eps > 0.0;
        if !ok {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "x {:?} with gain {:?}, shift {:?}, eps {eps}",
                    self.shape(),
                    gamma.shape(),
                    beta.shape()
                ),
            ));
        }
        let mut data = self.to_vec();
        for row in data.chunks_mut(w) {
            let mean = row.iter().sum::<f64>() / w as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
            let denom = (var + eps).sqrt();
            for (v, (g, b)) in row.iter_mut().zip(gamma.data().iter().zip(beta.data())) {
                *v = (*v - mean) / denom * g + b;
            }
        }
        count::add((7 * w as u64 + 2) * (self.len() / w) as u64);
        check_finite("layer_norm", &data)?;
        Ok(Tensor::result(
            self.shape().to_vec(),
            data,
            Op::LayerNorm(self.clone(), gamma.clone(), beta.clone(), eps),
        ))
    }

    /// Add a 1-D bias over the last axis.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let w = *self.shape().last().unwrap_or(&0);
        if w == 0 || bias.shape() != [w] {
            return Err(Error::shape(
                "add_bias",
                format!("bias {:?} does not broadcast over {:?}", bias.shape(), self.shape()),
            ));
        }
        let mut data = self.to_vec();
        for row in data.chunks_mut(w) {
            for (v, b) in row.iter_mut().zip(bias.data()) {
                *v += b;
            }
        }
        count::add(data.len() as u64);
        check_finite("add_bias", &data)?;
        Ok(Tensor::result(
            self.shape().to_vec(),
            data,
            Op::AddBias(self.clone(), bias.clone()),
        ))
    }

    /// Sum of all elements (rank-0 result).
    pub fn sum_all(&self) -> Result<Tensor> {
        let s: f64 = self.data().iter().sum();
        count::add(self.len().saturating_sub(1) as u64);
        check_finite("sum", &[s])?;
        Ok(Tensor::result(vec![], vec![s], Op::SumAll(self.clone())))
    }

    /// Mean of all elements (rank-0 result).
    pub fn mean_all(&self) -> Result<Tensor> {
        if self.is_empty() {
            return Err(Error::shape("mean", "empty tensor".to_string()));
        }
        let s: f64 = self.data().iter().sum::<f64>() / self.len() as f64;
        count::add(self.len() as u64);
        check_finite("mean", &[s])?;
        Ok(Tensor::result(vec![], vec![s], Op::MeanAll(self.clone())))
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce_axis(axis, false)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce_axis(axis, true)
    }

    fn reduce_axis(&self, axis: usize, mean: bool) -> Result<Tensor> {
        let name: &'static str = if mean { "mean_axis" } else { "sum_axis" };
        if axis >= self.rank() {
            return Err(Error::shape(
                name,
                format!("axis {axis} out of range for shape {:?}", self.shape()),
            ));
        }
        let axis_len = self.shape()[axis];
        if axis_len == 0 {
            return Err(Error::shape(name, "empty reduction axis".to_string()));
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let mut out_shape = self.shape().to_vec();
        out_shape.remove(axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..axis_len {
                let base = (o * axis_len + a) * inner;
                for i in 0..inner {
                    data[o * inner + i] += self.data()[base + i];
                }
            }
        }
        if mean {
            for v in data.iter_mut() {
                *v /= axis_len as f64;
            }
            count::add(self.len() as u64);
        } else {
            count::add((self.len() - outer * inner) as u64);
        }
        check_finite(name, &data)?;
        let op = if mean {
            Op::MeanAxis(self.clone(), axis)
        } else {
            Op::SumAxis(self.clone(), axis)
        };
        Ok(Tensor::result(out_shape, data, op))
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose_raw(data: &[f64], shape: &[usize], ax0: usize, ax1: usize) -> Vec<f64> {
    if ax0 == ax1 {
        return data.to_vec();
    }
    let in_strides = strides(shape);
    let mut out_shape = shape.to_vec();
    out_shape.swap(ax0, ax1);
    let out_strides = strides(&out_shape);
    let mut out = vec![0.0; data.len()];
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    for (flat, v) in data.iter().enumerate() {
        let mut rem = flat;
        for (i, s) in in_strides.iter().enumerate() {
            idx[i] = rem / s;
            rem %= s;
        }
        idx.swap(ax0, ax1);
        let out_flat: usize = idx.iter().zip(&out_strides).map(|(i, s)| i * s).sum();
        out[out_flat] = *v;
    }
    out
}
