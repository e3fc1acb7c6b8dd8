//! Scalar-operation counter for inference cost accounting.
//!
//! Counting is scoped: [`measure_flops`] zeroes a thread-local accumulator,
//! runs the closure, and returns whatever the ops inside reported. Scopes
//! nest additively (an outer scope also sees the inner scope's total).
//! Backward passes never report costs; only forward ops do.
//!
//! Cost convention, per element unless stated:
//! add/sub/mul/neg/abs/relu/scale/shift 1; clamp 2; sigmoid 4
//! (exp + add + div + negation); tanh 1 (single intrinsic); softmax row of
//! width w: 5w-2 (max scan, shift, exp, sum, div); layer norm row of width
//! w: 7w+2; matmul (m,k)x(k,n): 2mkn (MAC = 2); masked aggregation with
//! `kept` surviving edges and f output columns: kept*(1+2f); reductions:
//! adds plus one div for means; pure data movement (reshape, transpose,
//! concat, slice, gather) is free.

use std::cell::Cell;

thread_local! {
    static FLOPS: Cell<Option<u64>> = const { Cell::new(None) };
}

/// Documented per-element cost of the sigmoid kernel.
pub const SIGMOID_FLOPS: u64 = 4;
/// Documented per-element cost of the tanh kernel.
pub const ACTIVATION_TANH_FLOPS: u64 = 1;

/// Record `n` scalar operations if a measurement scope is active.
pub(crate) fn add(n: u64) {
    FLOPS.with(|c| {
        if let Some(cur) = c.get() {
            c.set(Some(cur + n));
        }
    });
}

/// Run `f` while counting scalar operations; returns `(f(), flops)`.
pub fn measure_flops<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let prev = FLOPS.with(|c| c.replace(Some(0)));
    let out = f();
    let counted = FLOPS.with(|c| c.replace(prev)).unwrap_or(0);
    if prev.is_some() {
        add(counted);
    }
    (out, counted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inactive_scope_counts_nothing() {
        add(10);
        let ((), n) = measure_flops(|| add(7));
        assert_eq!(n, 7);
    }

    #[test]
    fn scopes_nest_additively() {
        let ((), outer) = measure_flops(|| {
            add(5);
            let ((), inner) = measure_flops(|| add(3));
            assert_eq!(inner, 3);
        });
        assert_eq!(outer, 8);
    }
}
