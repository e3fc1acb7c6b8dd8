//! Forecast accuracy metrics.
//!
//! All metrics are meant to be computed on denormalised (raw-unit) values;
//! the data module's [`NormStats::denormalize`](crate::data::NormStats)
//! is the inverse transform callers should apply first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Targets smaller than this (in absolute raw units) are excluded from MAPE.
pub const DEFAULT_MAPE_EPSILON: f64 = 1e-3;

/// Accuracy summary for one set of forecasts.
///
/// `mape` is a percentage and is `None` when every target was excluded by the
/// epsilon threshold, which makes the metric undefined rather than zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub rmse: f64,
    pub mape: Option<f64>,
}

/// Compute MAE, RMSE and MAPE over paired predictions and targets.
///
/// MAPE averages `|pred - target| / |target|` over the entries whose target
/// magnitude is at least `mape_epsilon`, then scales to percent.
pub fn compute_metrics(pred: &[f64], target: &[f64], mape_epsilon: f64) -> Result<MetricReport> {
    if pred.len() != target.len() {
        return Err(Error::shape(
            "compute_metrics",
            format!("{} predictions vs {} targets", pred.len(), target.len()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::shape("compute_metrics", "empty input".to_string()));
    }

    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut ape_sum = 0.0;
    let mut ape_count = 0usize;
    for (p, y) in pred.iter().zip(target) {
        let d = p - y;
        abs_sum += d.abs();
        sq_sum += d * d;
        if y.abs() >= mape_epsilon {
            ape_sum += d.abs() / y.abs();
            ape_count += 1;
        }
    }
    let n = pred.len() as f64;
    let mape = (ape_count > 0).then(|| ape_sum / ape_count as f64 * 100.0);
    Ok(MetricReport {
        mae: abs_sum / n,
        rmse: (sq_sum / n).sqrt(),
        mape,
    })
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn perfect_forecast_scores_zero() {
        let y = vec![1.0, -2.0, 3.5];
        let r = compute_metrics(&y, &y, DEFAULT_MAPE_EPSILON).unwrap();
        assert_eq!(r.mae, 0.0);
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.mape, Some(0.0));
    }

    #[test]
    fn hand_worked_two_point_example() {
        let r = compute_metrics(&[2.0, 4.0], &[1.0, 2.0], DEFAULT_MAPE_EPSILON).unwrap();
        assert!((r.mae - 1.5).abs() < 1e-15);
        assert!((r.rmse - 2.5f64.sqrt()).abs() < 1e-15);
        // APEs are |2-1|/1 and |4-2|/2, both exactly one
        assert!((r.mape.unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn single_pair_hand_value() {
        let r = compute_metrics(&[11.0], &[10.0], DEFAULT_MAPE_EPSILON).unwrap();
        assert!((r.mae - 1.0).abs() < 1e-15);
        assert!((r.rmse - 1.0).abs() < 1e-15);
        assert!((r.mape.unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn near_zero_targets_are_excluded_from_mape() {
        let r = compute_metrics(&[1.0, 5.0], &[0.0, 4.0], 1e-3).unwrap();
        // only the second pair participates: |5-4|/4
        assert!((r.mape.unwrap() - 25.0).abs() < 1e-12);

        let r = compute_metrics(&[1.0, 2.0], &[0.0, 0.0005], 1e-3).unwrap();
        assert_eq!(r.mape, None, "all targets excluded leaves mape undefined");
        assert!(r.mae > 0.0, "mae and rmse are unaffected by the epsilon rule");
    }

    #[test]
    fn shape_and_emptiness_are_rejected() {
        assert!(compute_metrics(&[1.0], &[1.0, 2.0], 1e-3).is_err());
        assert!(compute_metrics(&[], &[], 1e-3).is_err());
    }

    #[test]
    fn mae_never_exceeds_rmse() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let n = rng.gen_range(1..40);
            let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let target: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let r = compute_metrics(&pred, &target, 1e-3).unwrap();
            assert!(r.mae <= r.rmse + 1e-12, "mae {} rmse {}", r.mae, r.rmse);
        }
    }

    #[test]
    fn report_roundtrips_through_json() {
        let r = MetricReport { mae: 1.25, rmse: 2.5, mape: None };
        let s = serde_json::to_string(&r).unwrap();
        let back: MetricReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
