//! Small numeric helpers shared by the scoring, clustering and resegmentation
//! code. Scalar math goes through `libm` so the crate stays `no_std`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ln(xs.iter().map(|&x| exp(x - m)).sum::<f64>())
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues ascending and
/// eigenvectors as the matching columns.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("symmetric matrix"));
    }
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0).ok_or(Error::Eigen)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        // fix the sign so results do not depend on solver internals
        if let Some(pivot) = col.iter().copied().find(|x| x.abs() > 1e-12) {
            if pivot < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

/// Sample mean and population covariance (divisor n) of row vectors.
pub fn mean_cov(rows: &[&[f64]]) -> (DVector<f64>, DMatrix<f64>) {
    let d = rows.first().map_or(0, |r| r.len());
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(d);
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r.iter()) {
            *m += x;
        }
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        let c = DVector::from_iterator(d, r.iter().zip(mean.iter()).map(|(x, m)| x - m));
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= n;
    (mean, cov)
}

/// Symmetric matrix rebuilt from an eigen-decomposition with each eigenvalue
/// mapped through `f`.
pub fn spectral_map(values: &[f64], vectors: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|&v| f(v))));
    let out = vectors * d * vectors.transpose();
    (&out + out.transpose()) * 0.5
}

/// Log-determinant and inverse of a symmetric positive-definite matrix.
pub fn spd_logdet_inverse(m: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    let chol = m.clone().cholesky().ok_or_else(|| {
        Error::DegenerateCovariance("matrix is not positive definite".into())
    })?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|&x| ln(x)).sum::<f64>();
    let inv = chol.inverse();
    Ok((logdet, (&inv + inv.transpose()) * 0.5))
}
