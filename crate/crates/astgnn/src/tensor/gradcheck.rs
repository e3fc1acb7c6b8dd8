//! Central finite-difference gradient oracle.
//!
//! Deliberately independent of the reverse-mode path: it only re-evaluates
//! the loss closure at perturbed parameter values, so it can referee the
//! analytic gradients.

use indexmap::IndexMap;

use super::{ParamSet, Tensor};
use crate::error::Result;

/// Central-difference gradient of `f` with respect to every parameter entry:
/// `(f(x + eps) - f(x - eps)) / (2 eps)` per scalar.
pub fn finite_diff_gradient<F>(
    f: F,
    params: &ParamSet,
    eps: f64,
) -> Result<IndexMap<String, Vec<f64>>>
where
    F: Fn(&ParamSet) -> Result<f64>,
{
    let mut out = IndexMap::new();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let base = params.get(&name)?.clone();
        let mut grad = vec![0.0; base.len()];
        for i in 0..base.len() {
            let eval = |delta: f64| -> Result<f64> {
                let mut data = base.to_vec();
                data[i] += delta;
                let mut probe = params.snapshot();
                probe.replace(&name, Tensor::var(base.shape(), data)?)?;
                f(&probe)
            };
            grad[i] = (eval(eps)? - eval(-eps)?) / (2.0 * eps);
        }
        out.insert(name, grad);
    }
    Ok(out)
}

/// Largest relative disagreement between two gradient buffers, with an
/// absolute floor so near-zero entries compare absolutely.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let denom = x.abs().max(y.abs()).max(1.0);
            (x - y).abs() / denom
        })
        .fold(0.0, f64::max)
}
