//! Gaussian (Laplace) approximation of the posterior normalisation constant.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Eigenvalues are floored at this fraction of the largest one when the
/// curvature matrix is not positive definite.
pub const EIGEN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Evidence {
    pub log_evidence: f64,
    pub log_det: f64,
    /// True when eigenvalues had to be floored.
    pub floored: bool,
    /// Inverse of the (possibly floored) curvature matrix.
    pub covariance: DMatrix<f64>,
}

/// `log Z = -S* + (Y/2) log 2pi - (1/2) log det A`.
///
/// Uses a Cholesky factorisation when `A` is positive definite, otherwise an
/// eigen-decomposition with eigenvalues floored at `EIGEN_FLOOR * max`.
pub fn laplace_evidence(best_energy: f64, hessian: &DMatrix<f64>) -> Result<Evidence> {
    let y = hessian.nrows();
    if y != hessian.ncols() {
        return Err(Error::Dimension {
            expected: y,
            found: hessian.ncols(),
        });
    }
    if hessian.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("curvature matrix has non-finite entries".into()));
    }
    let volume = 0.5 * y as f64 * LN_2PI;
    if y == 0 {
        return Ok(Evidence {
            log_evidence: -best_energy,
            log_det: 0.0,
            floored: false,
            covariance: DMatrix::zeros(0, 0),
        });
    }
    let (log_det, covariance, floored) = match hessian.clone().cholesky() {
        Some(chol) => {
            let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            (log_det, chol.inverse(), false)
        }
        None => {
            let eig = SymmetricEigen::new(hessian.clone());
            let top = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(top > 0.0) {
                return Err(Error::Numerical("curvature matrix has no positive eigenvalue".into()));
            }
            let floor = EIGEN_FLOOR * top;
            let vals = eig.eigenvalues.map(|v| v.max(floor));
            let log_det = vals.iter().map(|v| v.ln()).sum::<f64>();
            let inv = DMatrix::from_diagonal(&vals.map(|v| 1.0 / v));
            let cov = &eig.eigenvectors * inv * eig.eigenvectors.transpose();
            (log_det, cov, true)
        }
    };
    let log_evidence = -best_energy + volume - 0.5 * log_det;
    if !log_evidence.is_finite() {
        return Err(Error::Numerical("log evidence is not finite".into()));
    }
    Ok(Evidence {
        log_evidence,
        log_det,
        floored,
        covariance,
    })
}
