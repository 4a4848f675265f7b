use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SmisError};

fn moments(rows: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = rows.len();
    if n < 2 {
        return Err(SmisError::data("features", format!("{n} samples; need at least 2")));
    }
    let d = rows[0].len();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(SmisError::data("features", "non-finite covariance"));
    }
    Ok((mean, cov))
}

/// Symmetric square root through the eigendecomposition, eigenvalues clamped at 0.
fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussian fits of two feature sets (one row per sample).
pub fn fid(real: &[Vec<f64>], fake: &[Vec<f64>]) -> Result<f64> {
    let (m1, s1) = moments(real)?;
    let (m2, s2) = moments(fake)?;
    if m1.len() != m2.len() {
        return Err(SmisError::invalid(format!("feature dims {} vs {}", m1.len(), m2.len())));
    }
    let r1 = sqrtm_psd(&s1);
    let inner = &r1 * &s2 * &r1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = inner.symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let d2 = (&m1 - &m2).norm_squared() + s1.trace() + s2.trace() - 2.0 * cross;
    Ok(d2.max(0.0))
}
