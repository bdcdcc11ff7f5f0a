//! Fréchet distance between two Gaussians fitted to activation vectors.

use himol_model::ActivationStats;
use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Eigenvalues below this are treated as numerical failure rather than
/// rounding noise.
pub const NEGATIVE_EIGEN_TOLERANCE: f64 = -1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrechetError {
    #[error("activation widths differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix square root hit eigenvalue {0:e}")]
    NumericalError(f64),
}

fn matrix(stats: &ActivationStats) -> DMatrix<f64> {
    let d = stats.dim();
    DMatrix::from_row_slice(d, d, &stats.cov)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix, failing on any below the tolerance and
/// clamping the rest at zero.
fn checked_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, FrechetError> {
    let mut eig = SymmetricEigen::new(symmetrize(m));
    for v in eig.eigenvalues.iter_mut() {
        if *v < NEGATIVE_EIGEN_TOLERANCE {
            return Err(FrechetError::NumericalError(*v));
        }
        *v = v.max(0.0);
    }
    Ok(eig)
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, FrechetError> {
    let eig = checked_eigen(m)?;
    let root = eig.eigenvalues.map(f64::sqrt);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
}

/// `‖m − m_g‖² + Tr(C + C_g − 2 (C C_g)^{1/2})`. The trace of the cross term
/// is taken as the sum of square roots of the eigenvalues of
/// `C^{1/2} C_g C^{1/2}`, which shares its spectrum with `C C_g`.
pub fn frechet(a: &ActivationStats, b: &ActivationStats) -> Result<f64, FrechetError> {
    if a.dim() != b.dim() {
        return Err(FrechetError::DimensionMismatch(a.dim(), b.dim()));
    }
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y).powi(2)).sum();
    let (ca, cb) = (matrix(a), matrix(b));
    let root_a = psd_sqrt(&ca)?;
    let inner = &root_a * &cb * &root_a;
    let cross: f64 = checked_eigen(&inner)?.eigenvalues.iter().map(|v| v.sqrt()).sum();
    let value = mean_term + ca.trace() + cb.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}
