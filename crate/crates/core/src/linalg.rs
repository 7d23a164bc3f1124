//! Small dense linear-algebra helpers for the fixed-size 4x4 / 6x6 matrices
//! used throughout the filter.

use nalgebra::{Cholesky, SMatrix, SVector};

use crate::error::{Error, Result};

/// Smallest admissible eigenvalue before jitter is added.
pub const EIGEN_FLOOR: f64 = 1e-12;
/// Diagonal jitter added when the eigenvalue floor is violated.
pub const JITTER: f64 = 1e-9;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn symmetrize<const D: usize>(m: &SMatrix<f64, D, D>) -> SMatrix<f64, D, D> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<const D: usize>(m: &SMatrix<f64, D, D>) -> f64 {
    // Jacobi sweeps; D is at most 6 here so this is cheap and avoids the
    // trait plumbing nalgebra needs for generic const-sized eigensolvers.
    let mut a = symmetrize(m);
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..D {
            for q in (p + 1)..D {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off < 1e-30 * (1.0 + a.norm_squared()) {
            break;
        }
        for p in 0..D {
            for q in (p + 1)..D {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..D {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..D {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..D).map(|i| a[(i, i)]).fold(f64::INFINITY, f64::min)
}

/// Symmetrize and, if the smallest eigenvalue falls below [`EIGEN_FLOOR`],
/// add [`JITTER`] to the diagonal.
pub fn stabilize<const D: usize>(m: &SMatrix<f64, D, D>) -> SMatrix<f64, D, D> {
    let s = symmetrize(m);
    if min_eigenvalue(&s) < EIGEN_FLOOR {
        s + SMatrix::<f64, D, D>::identity() * JITTER
    } else {
        s
    }
}

/// Inverse of an SPD matrix, retrying once after jitter.
pub fn spd_inverse<const D: usize>(m: &SMatrix<f64, D, D>) -> Result<SMatrix<f64, D, D>> {
    let s = symmetrize(m);
    if let Some(ch) = Cholesky::new(s) {
        return Ok(symmetrize(&ch.inverse()));
    }
    let jittered = s + SMatrix::<f64, D, D>::identity() * JITTER;
    Cholesky::new(jittered)
        .map(|ch| symmetrize(&ch.inverse()))
        .ok_or_else(|| Error::Numeric(format!("matrix is not positive definite: {s}")))
}

/// `ln det` of an SPD matrix.
pub fn spd_log_det<const D: usize>(m: &SMatrix<f64, D, D>) -> Result<f64> {
    let ch = Cholesky::new(symmetrize(m))
        .ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))?;
    let l = ch.l();
    Ok(2.0 * (0..D).map(|i| l[(i, i)].ln()).sum::<f64>())
}

pub fn is_spd<const D: usize>(m: &SMatrix<f64, D, D>) -> bool {
    m.iter().all(|v| v.is_finite()) && Cholesky::new(symmetrize(m)).is_some()
}

/// Log-density of a `D`-variate Gaussian given the residual, the precision
/// matrix and `ln det` of the covariance.
pub fn gaussian_log_density<const D: usize>(
    residual: &SVector<f64, D>,
    precision: &SMatrix<f64, D, D>,
    log_det_cov: f64,
) -> f64 {
    let maha = (residual.transpose() * precision * residual)[(0, 0)];
    -0.5 * (D as f64 * LN_2PI + log_det_cov + maha)
}

/// `ln sum exp(x)` over finite-or-negative-infinite inputs.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.into_iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
