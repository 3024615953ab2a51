//! Covariance losses, prediction error and the two statistical tests used to
//! compare the solvers.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::common::Method;
use crate::error::{invalid, Error, Result};
use crate::linalg::Cholesky;

/// Measures collected for one fitted model in one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub method: Method,
    pub seed: u64,
    pub runtime_seconds: f64,
    pub iterations: usize,
    pub entropy_loss: f64,
    pub quadratic_loss: f64,
    pub rmse: f64,
    pub rv_count: usize,
}

/// `W = L⁻¹ Ω̂ L⁻ᵀ` with `Ω = LLᵀ`; `W` is similar to `Ω̂Ω⁻¹` and symmetric.
fn whitened(omega_true: &DMatrix<f64>, omega_hat: &DMatrix<f64>) -> Result<(Cholesky<f64>, DMatrix<f64>)> {
    let v = omega_true.nrows();
    if omega_true.ncols() != v || omega_hat.shape() != (v, v) {
        return invalid("covariance matrices must be square and of equal size");
    }
    let chol = Cholesky::new(omega_true)
        .map_err(|_| Error::InvalidArgument("true covariance is not positive definite".into()))?;
    let left = chol.half_solve(omega_hat);
    let w = chol.half_solve(&left.transpose());
    Ok((chol, (&w + w.transpose()) / 2.0))
}

/// `tr(Ω̂Ω⁻¹) - log|Ω̂Ω⁻¹| - V`
pub fn entropy_loss(omega_true: &DMatrix<f64>, omega_hat: &DMatrix<f64>) -> Result<f64> {
    let (chol, w) = whitened(omega_true, omega_hat)?;
    let hat = Cholesky::new(omega_hat)
        .map_err(|_| Error::InvalidArgument("estimated covariance is not positive definite".into()))?;
    let v = chol.dim() as f64;
    Ok(w.trace() - (hat.log_det() - chol.log_det()) - v)
}

/// `tr((Ω̂Ω⁻¹ - I)²)`
pub fn quadratic_loss(omega_true: &DMatrix<f64>, omega_hat: &DMatrix<f64>) -> Result<f64> {
    let (_, mut w) = whitened(omega_true, omega_hat)?;
    for i in 0..w.nrows() {
        w[(i, i)] -= 1.0;
    }
    Ok(w.norm_squared())
}

/// Root-mean-square error over all entries.
pub fn rmse(true_values: &DMatrix<f64>, predicted: &DMatrix<f64>) -> Result<f64> {
    if true_values.shape() != predicted.shape() {
        return invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            true_values.shape(),
            predicted.shape()
        ));
    }
    if true_values.is_empty() {
        return invalid("rmse of an empty matrix");
    }
    Ok(((true_values - predicted).norm_squared() / true_values.len() as f64).sqrt())
}

/// Jarque-Bera statistic `n/6 (S² + (K-3)²/4)` from population moments.
pub fn jarque_bera(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 4 {
        return invalid("jarque-bera needs at least four samples");
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if !(m2 > 0.0) {
        return invalid("jarque-bera of a zero-variance sample");
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    Ok(nf / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0))
}

/// Midranks (1-based) of the pooled sample and the tie correction term `Σ(t³ - t)`.
fn midranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        let t = (end - start) as f64;
        ties += t * t * t - t;
        start = end;
    }
    (ranks, ties)
}

/// Two-sided Wilcoxon rank-sum p-value from the normal approximation with
/// midranks, tie correction and continuity correction.
pub fn rank_sum_pvalue(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return invalid("rank-sum test needs two nonempty samples");
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return invalid("rank-sum test got NaN");
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r1: f64 = ranks[..a.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    let n = n1 + n2;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if !(var > 0.0) {
        return Ok(1.0);
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    Ok((2.0 * normal.sf(z)).min(1.0))
}
