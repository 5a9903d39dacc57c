//! Fréchet distance between Gaussian fits of two sample sets.

use fad_core::Tensor32;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{EvalError, Result};

/// Ridge added to both covariance diagonals before taking the matrix square
/// root; pure numerical stabilization.
pub const FD_EPSILON: f64 = 1e-6;

/// Gaussian moments of a sample set: mean vector and unbiased covariance.
#[derive(Debug, Clone)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Fits `Moments` to `samples [N, D]` with the unbiased `1/(N-1)` covariance.
pub fn fit_moments(samples: &Tensor32) -> Result<Moments> {
    if samples.rank() != 2 {
        return Err(EvalError::invalid(format!(
            "samples must be [N, D], got {:?}",
            samples.shape()
        )));
    }
    let n = samples.shape()[0];
    let d = samples.shape()[1];
    if n < 2 {
        return Err(EvalError::invalid(format!(
            "degenerate input: need at least 2 samples, got {n}"
        )));
    }
    let data = samples.data();
    let mut mean = DVector::zeros(d);
    for row in 0..n {
        for col in 0..d {
            mean[col] += f64::from(data[row * d + col]);
        }
    }
    mean /= n as f64;

    let mut cov = DMatrix::zeros(d, d);
    for row in 0..n {
        for i in 0..d {
            let di = f64::from(data[row * d + i]) - mean[i];
            for j in i..d {
                let dj = f64::from(data[row * d + j]) - mean[j];
                cov[(i, j)] += di * dj;
            }
        }
    }
    cov /= (n - 1) as f64;
    // Mirror the upper triangle; only it was accumulated.
    for i in 0..d {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    Ok(Moments { mean, cov })
}

/// Symmetric PSD square root via eigendecomposition, clipping negative
/// eigenvalues (rounding artifacts) at zero.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Fréchet distance between two Gaussians:
/// `|mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2})`, with the cross term
/// computed through the symmetric route `sqrt(Sa) Sb sqrt(Sa)`.
pub fn frechet_from_moments(a: &Moments, b: &Moments) -> Result<f64> {
    let d = a.mean.len();
    if b.mean.len() != d || a.cov.nrows() != d || b.cov.nrows() != d {
        return Err(EvalError::invalid(format!(
            "moment dimension mismatch: {d} vs {}",
            b.mean.len()
        )));
    }
    let ridge = DMatrix::identity(d, d) * FD_EPSILON;
    let sa = &a.cov + &ridge;
    let sb = &b.cov + &ridge;

    let root_a = sqrt_psd(&sa);
    let inner = &root_a * &sb * &root_a;
    // Symmetrize before the eigensolve; rounding breaks exact symmetry.
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();

    let mean_term = (&a.mean - &b.mean).norm_squared();
    let fd = mean_term + sa.trace() + sb.trace() - 2.0 * cross;
    Ok(fd.max(0.0))
}

/// Fréchet distance between Gaussian fits of two sample sets `[N, D]` and
/// `[M, D]`.
pub fn frechet_distance(samples_a: &Tensor32, samples_b: &Tensor32) -> Result<f64> {
    let a = fit_moments(samples_a)?;
    let b = fit_moments(samples_b)?;
    frechet_from_moments(&a, &b)
}
