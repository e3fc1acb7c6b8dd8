//! Dense fp64 tensors with reverse-mode gradients.
//!
//! The op set is fixed to what the forecasting architectures need: matmul,
//! batched matmul, a mask-aware aggregation product, elementwise arithmetic,
//! the usual activations, row softmax, clamp, concat/slice/gather, layer norm
//! and reductions. Every op validates operand shapes, checks its output for
//! NaN/Inf, and reports its scalar cost to the active FLOP counter (if any).
//!
//! Evaluation is eager. Each tensor remembers the op that produced it, so
//! calling [`Tensor::backward`] on a scalar walks the recorded graph in
//! reverse and accumulates gradients for every tensor created with
//! [`Tensor::var`]. Gradients are plain buffers, not tensors; there is no
//! higher-order differentiation.

mod backward;
mod count;
mod gradcheck;
mod ops;
mod params;
#[cfg(test)]
mod tests;

pub use backward::Gradients;
pub use count::{measure_flops, ACTIVATION_TANH_FLOPS, SIGMOID_FLOPS};
pub use gradcheck::{finite_diff_gradient, max_rel_err};
pub use params::ParamSet;

use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use ops::Op;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Immutable fp64 tensor. Cloning is cheap (reference counted).
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    op: Option<Op>,
    variable: bool,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for `shape`.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

impl Tensor {
    fn from_parts(shape: Vec<usize>, data: Vec<f64>, op: Option<Op>, variable: bool) -> Tensor {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor {
            inner: Rc::new(Inner {
                id: fresh_id(),
                shape,
                data,
                op,
                variable,
            }),
        }
    }

    pub(crate) fn result(shape: Vec<usize>, data: Vec<f64>, op: Op) -> Tensor {
        let tracked = op.inputs().iter().any(|t| t.tracked());
        Tensor::from_parts(shape, data, tracked.then_some(op), false)
    }

    /// Constant tensor from raw row-major data.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        if numel(shape) != data.len() {
            return Err(Error::shape(
                "from_vec",
                format!("shape {:?} wants {} values, got {}", shape, numel(shape), data.len()),
            ));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("from_vec (input value {v})"),
            });
        }
        Ok(Tensor::from_parts(shape.to_vec(), data, None, false))
    }

    /// Trainable tensor: [`Tensor::backward`] will produce a gradient for it.
    pub fn var(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::from_vec(shape, data)?;
        Ok(Tensor::from_parts(t.inner.shape.clone(), t.inner.data.clone(), None, true))
    }

    /// Trainable copy of an existing tensor's values.
    pub fn to_var(&self) -> Tensor {
        Tensor::from_parts(self.shape().to_vec(), self.data().to_vec(), None, true)
    }

    /// Constant (untracked) copy of this tensor's values.
    pub fn detach(&self) -> Tensor {
        Tensor::from_parts(self.shape().to_vec(), self.data().to_vec(), None, false)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::from_parts(shape.to_vec(), vec![0.0; numel(shape)], None, false)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        Tensor::from_parts(shape.to_vec(), vec![value; numel(shape)], None, false)
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::from_parts(vec![], vec![value], None, false)
    }

    /// Uniform draws in `[lo, hi)`, one rng call per element in row-major order.
    pub fn rand_uniform<R: rand::Rng>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Tensor {
        let data = (0..numel(shape)).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect();
        Tensor::from_parts(shape.to_vec(), data, None, false)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn len(&self) -> usize {
        self.inner.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.clone()
    }

    pub fn is_variable(&self) -> bool {
        self.inner.variable
    }

    /// Whether gradients flow through this tensor.
    pub fn tracked(&self) -> bool {
        self.inner.variable || self.inner.op.is_some()
    }

    pub(crate) fn op(&self) -> Option<&Op> {
        self.inner.op.as_ref()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.len() != 1 {
            return Err(Error::shape(
                "item",
                format!("expected a single element, shape is {:?}", self.shape()),
            ));
        }
        Ok(self.inner.data[0])
    }

    /// Element at a full multi-index.
    pub fn at(&self, idx: &[usize]) -> f64 {
        let st = strides(self.shape());
        debug_assert_eq!(idx.len(), st.len());
        let flat: usize = idx.iter().zip(&st).map(|(i, s)| i * s).sum();
        self.inner.data[flat]
    }

    /// Bitwise equality of shape and data.
    pub fn bits_eq(&self, other: &Tensor) -> bool {
        self.shape() == other.shape()
            && self
                .data()
                .iter()
                .zip(other.data())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: Vec<f64> = self.data().iter().copied().take(8).collect();
        let ellipsis = if self.len() > 8 { ", ..." } else { "" };
        write!(f, "Tensor{:?} {:?}{}", self.shape(), head, ellipsis)
    }
}

pub(crate) fn check_finite(context: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
        })
    }
}
