//! Small dense linear-algebra helpers shared by the estimation and prediction code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{OpdError, Result};

/// Doublings of the diagonal jitter tried before giving up.
const MAX_JITTER_DOUBLINGS: usize = 8;

/// Cholesky factor of a symmetric positive definite matrix.
///
/// If the plain factorisation fails, `1e-10·trace/n` is added to the diagonal
/// and doubled up to eight times.
pub fn spd_cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(OpdError::Numerical(format!(
            "covariance matrix must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol);
    }
    let mut jitter = 1e-10 * m.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
    for _ in 0..=MAX_JITTER_DOUBLINGS {
        let mut jittered = m.clone();
        for i in 0..n {
            jittered[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(chol);
        }
        jitter *= 2.0;
    }
    Err(OpdError::Numerical(format!(
        "covariance matrix of size {n} is not positive definite even with jitter {:.3e}",
        jitter / 2.0
    )))
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Least-squares solution of `X b = y` by QR, rejecting numerically rank
/// deficient designs.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if n < p {
        return Err(OpdError::Rank(format!("{n} observations for {p} covariates")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    if let Some(k) = (0..p).find(|&k| r[(k, k)].abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE)) {
        return Err(OpdError::Rank(format!("design column {k} is linearly dependent on the others")));
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| OpdError::Rank("triangular solve failed".into()))
}
