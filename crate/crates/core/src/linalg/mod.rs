//! Dense symmetric linear algebra.

mod dense;
mod eigen;

use alloc::format;
use alloc::vec::Vec;

pub use dense::{cholesky, inverse_sym, pinv_sym, solve, spd_inv_sqrt, Lu};
pub use eigen::{
    canonical_order, eig_sym, eig_sym_above, eig_sym_select, eig_sym_top, eigvals_sym,
    weighted_outer_sum, EigenSystem,
};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, SymmetricMatrix};

/// Best rank-`k` approximation `Q_K Λ_K Q_Kᵀ`, keeping the `k` eigenvalues of
/// largest magnitude.
pub fn rank_k_approx(m: &SymmetricMatrix, k: usize) -> Result<SymmetricMatrix> {
    Ok(rank_k_parts(m, k)?.0)
}

/// Like [`rank_k_approx`], also returning the retained eigenpairs.
pub fn rank_k_parts(m: &SymmetricMatrix, k: usize) -> Result<(SymmetricMatrix, EigenSystem)> {
    let p = m.dim();
    if k == 0 || k > p {
        return Err(Error::Argument(format!("rank must lie in [1, {p}], got {k}")));
    }
    if k == p {
        m.ensure_finite()?;
        return Ok((m.clone(), eig_sym(m)?));
    }
    let es = eig_sym_top(m, k)?;
    Ok((es.reconstruct(), es))
}

/// Singular value thresholding of a symmetric matrix: every eigenvalue is
/// shrunk toward zero by `tau` in magnitude, keeping its sign.
pub fn svt(m: &SymmetricMatrix, tau: f64) -> Result<SymmetricMatrix> {
    Ok(svt_parts(m, tau)?.0)
}

/// [`svt`] plus the number of surviving singular values.
pub fn svt_parts(m: &SymmetricMatrix, tau: f64) -> Result<(SymmetricMatrix, usize)> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::Argument(format!("threshold must be a nonnegative number, got {tau}")));
    }
    m.ensure_finite()?;
    if tau == 0.0 {
        let rank = eigvals_sym(m)?.iter().filter(|v| **v != 0.0).count();
        return Ok((m.clone(), rank));
    }
    let es = eig_sym_above(m, tau)?;
    let shrunk: Vec<f64> =
        es.values.iter().map(|&v| if v > 0.0 { v - tau } else { v + tau }).collect();
    Ok((weighted_outer_sum(m.dim(), &shrunk, &es.vectors), es.len()))
}

pub fn frob_norm(m: &Matrix) -> f64 {
    m.frob_norm()
}

/// Largest absolute eigenvalue.
pub fn spectral_norm(m: &SymmetricMatrix) -> Result<f64> {
    Ok(eigvals_sym(m)?.first().map_or(0.0, |v| v.abs()))
}

/// Number of eigenvalues with `|λ| > rel · |λ_1|`.
pub fn numerical_rank(values: &[f64], rel: f64) -> usize {
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return 0;
    }
    values.iter().filter(|v| v.abs() > rel * top).count()
}
