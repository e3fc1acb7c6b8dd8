//! Least-squares reference predictors for synthetic data.
//!
//! These fit one linear model per node on lagged observations — optionally
//! augmented with the lagged mean of the node's latent in-neighbours — and
//! serve as an independent yardstick for how much cross-node information a
//! dataset carries. They share nothing with the neural stack.

use crate::error::{Error, Result};

use super::SpatioTemporalSeries;

/// Solve `a x = b` by Gaussian elimination with partial pivoting. `a` is
/// consumed row-major, dimension `n x n`.
fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|x, y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
            .unwrap();
        if a[pivot * n + col].abs() < 1e-300 {
            return Err(Error::config("singular system in least-squares fit".to_string()));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut v = b[row];
        for k in row + 1..n {
            v -= a[row * n + k] * x[k];
        }
        x[row] = v / a[row * n + row];
    }
    Ok(x)
}

/// Per-node linear one-step-ahead predictor on `lags` own lags, plus the
/// same lags of the in-neighbour mean when `neighbour_aware` is set.
#[derive(Debug, Clone)]
pub struct LaggedFit {
    pub lags: usize,
    pub neighbour_aware: bool,
    /// One coefficient vector per node: intercept, own lags, neighbour lags.
    pub coeffs: Vec<Vec<f64>>,
}

fn neighbour_mean(series: &SpatioTemporalSeries, neighbours: &[usize], t: usize) -> f64 {
    if neighbours.is_empty() {
        return 0.0;
    }
    neighbours.iter().map(|j| series.at(t, *j, 0)).sum::<f64>() / neighbours.len() as f64
}

fn features(
    series: &SpatioTemporalSeries,
    neighbours: &[Vec<usize>],
    node: usize,
    t: usize,
    lags: usize,
    neighbour_aware: bool,
) -> Vec<f64> {
    let mut f = Vec::with_capacity(1 + lags * if neighbour_aware { 2 } else { 1 });
    f.push(1.0);
    for k in 1..=lags {
        f.push(series.at(t - k, node, 0));
    }
    if neighbour_aware {
        for k in 1..=lags {
            f.push(neighbour_mean(series, &neighbours[node], t - k));
        }
    }
    f
}

/// Fit by ridge-regularised normal equations on every admissible time step
/// of `train`. Requires a single-channel series.
pub fn fit(
    train: &SpatioTemporalSeries,
    neighbours: &[Vec<usize>],
    lags: usize,
    neighbour_aware: bool,
) -> Result<LaggedFit> {
    if train.channels() != 1 {
        return Err(Error::config("oracle predictors expect a single channel".to_string()));
    }
    if lags == 0 || train.t_total() <= lags {
        return Err(Error::config(format!(
            "cannot fit {lags} lags on {} rows",
            train.t_total()
        )));
    }
    let dim = 1 + lags * if neighbour_aware { 2 } else { 1 };
    let ridge = 1e-8;
    let mut coeffs = Vec::with_capacity(train.num_nodes());
    for node in 0..train.num_nodes() {
        let mut xtx = vec![0.0; dim * dim];
        let mut xty = vec![0.0; dim];
        for t in lags..train.t_total() {
            let f = features(train, neighbours, node, t, lags, neighbour_aware);
            let y = train.at(t, node, 0);
            for a in 0..dim {
                xty[a] += f[a] * y;
                for b in 0..dim {
                    xtx[a * dim + b] += f[a] * f[b];
                }
            }
        }
        for a in 0..dim {
            xtx[a * dim + a] += ridge;
        }
        coeffs.push(solve_linear(xtx, xty)?);
    }
    Ok(LaggedFit { lags, neighbour_aware, coeffs })
}

/// Mean absolute error of one-step-ahead predictions over `eval`.
pub fn mae(
    fit: &LaggedFit,
    eval: &SpatioTemporalSeries,
    neighbours: &[Vec<usize>],
) -> Result<f64> {
    if eval.channels() != 1 {
        return Err(Error::config("oracle predictors expect a single channel".to_string()));
    }
    if eval.t_total() <= fit.lags {
        return Err(Error::config("evaluation segment shorter than the lag window".to_string()));
    }
    let mut abs_sum = 0.0;
    let mut count = 0usize;
    for node in 0..eval.num_nodes() {
        for t in fit.lags..eval.t_total() {
            let f = features(eval, neighbours, node, t, fit.lags, fit.neighbour_aware);
            let pred: f64 = f.iter().zip(&fit.coeffs[node]).map(|(a, b)| a * b).sum();
            abs_sum += (pred - eval.at(t, node, 0)).abs();
            count += 1;
        }
    }
    Ok(abs_sum / count as f64)
}

/// Fit both oracles on the first 80% of a series and report their held-out
/// MAEs as `(per_node, neighbour_aware)`.
pub fn mode_separation(
    series: &SpatioTemporalSeries,
    neighbours: &[Vec<usize>],
    lags: usize,
) -> Result<(f64, f64)> {
    let parts = super::split(series, &[0.8, 0.2], &["fit", "eval"])?;
    let per_node = fit(&parts[0], neighbours, lags, false)?;
    let aware = fit(&parts[0], neighbours, lags, true)?;
    Ok((
        mae(&per_node, &parts[1], neighbours)?,
        mae(&aware, &parts[1], neighbours)?,
    ))
}
