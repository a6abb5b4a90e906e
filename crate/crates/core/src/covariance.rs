//! Covariance and precision estimation.

use alloc::format;
use alloc::vec::Vec;

use crate::decompose::{loadings, one_step, Decomposition, SolverConfig};
use crate::error::{Error, Result, Warning};
use crate::linalg::{inverse_sym, rank_k_parts, spd_inv_sqrt, spectral_norm, weighted_outer_sum, EigenSystem, eig_sym};
use crate::math::sqrt;
use crate::matrix::{Matrix, SymmetricMatrix};

/// `(1/n) Σ (X_i − X̄)(X_i − X̄)ᵀ` for the rows `X_i` of `x`.
pub fn sample_cov(x: &Matrix) -> Result<SymmetricMatrix> {
    let (n, p) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::Argument(format!("sample covariance needs at least 2 rows, got {n}")));
    }
    if p == 0 {
        return Err(Error::Input("data matrix has no columns".into()));
    }
    x.ensure_finite()?;
    let mut mean = alloc::vec![0.0; p];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = Matrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]);
    Ok(centered.gram_cols().scaled(1.0 / n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovMethod {
    Ddpca,
    Poet,
    Sample,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate {
    pub sigma: SymmetricMatrix,
    pub method: CovMethod,
    pub decomposition: Option<Decomposition>,
    pub threshold_used: Option<f64>,
    /// Top eigenpairs forming the low-rank part, when there is one.
    pub factors: Option<EigenSystem>,
    /// Estimated residual covariance (`Â` or `T_a(Â_*)`).
    pub residual: Option<SymmetricMatrix>,
    pub warnings: Vec<Warning>,
}

impl CovEstimate {
    pub fn sample(s: SymmetricMatrix) -> Self {
        CovEstimate {
            sigma: s,
            method: CovMethod::Sample,
            decomposition: None,
            threshold_used: None,
            factors: None,
            residual: None,
            warnings: Vec::new(),
        }
    }

    pub fn diagonal(s: &SymmetricMatrix) -> Self {
        let d = SymmetricMatrix::from_diag(&s.diag());
        CovEstimate {
            sigma: d.clone(),
            method: CovMethod::Diagonal,
            decomposition: None,
            threshold_used: None,
            factors: None,
            residual: Some(d),
            warnings: Vec::new(),
        }
    }
}

/// `Σ̂ = L̂ + Â` from one-step DD-PCA of the sample covariance.
pub fn estimate_ddpca(x: &Matrix, k: usize, config: &SolverConfig) -> Result<CovEstimate> {
    ddpca_from_cov(&sample_cov(x)?, k, config)
}

pub fn ddpca_from_cov(s: &SymmetricMatrix, k: usize, config: &SolverConfig) -> Result<CovEstimate> {
    let cfg = SolverConfig { rank: Some(k), ..config.clone() };
    let d = one_step(s, &cfg)?;
    Ok(CovEstimate {
        sigma: d.sum(),
        method: CovMethod::Ddpca,
        factors: Some(d.factors.clone()),
        residual: Some(d.a.clone()),
        warnings: d.warnings.clone(),
        decomposition: Some(d),
        threshold_used: None,
    })
}

/// POET with hard thresholding of the residual correlations at `a`.
pub fn estimate_poet(x: &Matrix, k: usize, a: f64) -> Result<CovEstimate> {
    poet_from_cov(&sample_cov(x)?, k, a)
}

/// `L̂_* + D^{1/2} H_a(D^{-1/2} Â_* D^{-1/2}) D^{1/2}`; an off-diagonal entry
/// survives when its residual correlation exceeds `a` in magnitude.
pub fn poet_from_cov(s: &SymmetricMatrix, k: usize, a: f64) -> Result<CovEstimate> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::Argument(format!("threshold must lie in [0, 1], got {a}")));
    }
    let p = s.dim();
    if k >= p {
        return Err(Error::Argument(format!("rank must lie in [1, {}], got {k}", p - 1)));
    }
    let (l, es) = rank_k_parts(s, k)?;
    let resid = s.sub(&l);
    let d = resid.diag();
    let thresholded = SymmetricMatrix::from_upper(p, |i, j| {
        let v = resid[(i, j)];
        if i == j || a == 0.0 {
            return v;
        }
        let scale = d[i] * d[j];
        if scale > 0.0 && v.abs() > a * sqrt(scale) {
            v
        } else {
            0.0
        }
    });
    Ok(CovEstimate {
        sigma: l.add(&thresholded),
        method: CovMethod::Poet,
        decomposition: None,
        threshold_used: Some(a),
        factors: Some(es),
        residual: Some(thresholded),
        warnings: Vec::new(),
    })
}

/// `(A + BBᵀ)⁻¹` through the SVD of `A^{-1/2}B`:
///
/// ```text
/// A⁻¹ − A^{-1/2} (Σ_k σ_k²/(1 + σ_k²) η_k η_kᵀ) A^{-1/2}
/// ```
pub fn factor_precision(a: &SymmetricMatrix, b: &Matrix) -> Result<SymmetricMatrix> {
    let p = a.dim();
    if b.rows() != p {
        return Err(Error::Dimension {
            expected: format!("{p} rows of loadings"),
            found: format!("{}", b.rows()),
        });
    }
    let (inv_sqrt, inv) = spd_inv_sqrt(a)?;
    let k = b.cols();
    if k == 0 {
        return Ok(inv);
    }
    let m = inv_sqrt.matmul(b);
    let mtm = m.gram_cols();
    let es = eig_sym(&mtm)?;
    let top = es.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut weights = Vec::with_capacity(k);
    let mut vectors = Matrix::zeros(k, p);
    for (r, &s2) in es.values.iter().enumerate() {
        if s2 <= 1e-14 * top || s2 <= 0.0 {
            continue;
        }
        // A^{-1/2} η = A^{-1/2} M v / σ
        let mv = m.mul_vec(es.vector(r));
        let w = inv_sqrt.mul_vec(&mv);
        let scale = 1.0 / sqrt(s2);
        for (dst, x) in vectors.row_mut(weights.len()).iter_mut().zip(&w) {
            *dst = x * scale;
        }
        weights.push(-s2 / (1.0 + s2));
    }
    let used = weights.len();
    let vectors = Matrix::from_fn(used, p, |i, j| vectors[(i, j)]);
    Ok(inv.add(&weighted_outer_sum(p, &weights, &vectors)))
}

/// `Σ̂⁻¹`, through [`factor_precision`] when the estimate carries a low-rank
/// part and a residual, by dense inversion otherwise.
pub fn precision_from_estimate(est: &CovEstimate) -> Result<(SymmetricMatrix, Vec<Warning>)> {
    let mut warnings = Vec::new();
    match (&est.factors, &est.residual) {
        (Some(f), Some(r)) if est.method != CovMethod::Diagonal => {
            let (b, clipped) = loadings(f);
            if clipped > 0 {
                log::warn!("{clipped} negative low-rank eigenvalues clipped to zero");
                warnings.push(Warning::NegativeFactorClipped { count: clipped });
            }
            Ok((factor_precision(r, &b)?, warnings))
        }
        _ => Ok((inverse_sym(&est.sigma)?, warnings)),
    }
}

/// Frobenius and spectral errors for `Σ`, `Σ⁻¹`, `A` and `A⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub sigma_frob: f64,
    pub sigma_spec: f64,
    pub precision_frob: f64,
    pub precision_spec: f64,
    pub residual_frob: Option<f64>,
    pub residual_spec: Option<f64>,
    pub residual_inv_frob: Option<f64>,
    pub residual_inv_spec: Option<f64>,
}

pub struct Truth<'a> {
    pub sigma: &'a SymmetricMatrix,
    pub precision: &'a SymmetricMatrix,
    pub a: &'a SymmetricMatrix,
    pub a_inv: &'a SymmetricMatrix,
}

pub fn error_report(est: &CovEstimate, truth: &Truth<'_>) -> Result<ErrorReport> {
    est.sigma.ensure_same_shape(truth.sigma)?;
    let (prec, _) = precision_from_estimate(est)?;
    let ds = est.sigma.sub(truth.sigma);
    let dp = prec.sub(truth.precision);
    let mut report = ErrorReport {
        sigma_frob: ds.frob_norm(),
        sigma_spec: spectral_norm(&ds)?,
        precision_frob: dp.frob_norm(),
        precision_spec: spectral_norm(&dp)?,
        residual_frob: None,
        residual_spec: None,
        residual_inv_frob: None,
        residual_inv_spec: None,
    };
    if let Some(r) = &est.residual {
        let da = r.sub(truth.a);
        report.residual_frob = Some(da.frob_norm());
        report.residual_spec = Some(spectral_norm(&da)?);
        let dai = inverse_sym(r)?.sub(truth.a_inv);
        report.residual_inv_frob = Some(dai.frob_norm());
        report.residual_inv_spec = Some(spectral_norm(&dai)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_row_covariance() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        let s = sample_cov(&x).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        let same = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert_eq!(sample_cov(&same).unwrap(), SymmetricMatrix::zeros(2));
        assert!(sample_cov(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn sherman_morrison_case() {
        let b = Matrix::from_vec(2, 1, alloc::vec![0.6, 0.8]).unwrap();
        let got = factor_precision(&SymmetricMatrix::identity(2), &b).unwrap();
        let want = SymmetricMatrix::from_upper(2, |i, j| {
            let bb = b[(i, 0)] * b[(j, 0)];
            if i == j { 1.0 - 0.5 * bb } else { -0.5 * bb }
        });
        assert!(got.frob_dist(&want) < 1e-14);
        let none = factor_precision(&SymmetricMatrix::from_diag(&[2.0, 4.0]), &Matrix::zeros(2, 0))
            .unwrap();
        assert!(none.frob_dist(&SymmetricMatrix::from_diag(&[0.5, 0.25])) < 1e-15);
    }

    #[test]
    fn poet_threshold_extremes() {
        let s = SymmetricMatrix::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]])
            .unwrap();
        let zero = poet_from_cov(&s, 1, 0.0).unwrap();
        assert!(zero.sigma.frob_dist(&s) < 1e-12);
        let one = poet_from_cov(&s, 1, 1.0).unwrap();
        let r = one.residual.unwrap();
        assert_eq!(r[(0, 1)], 0.0);
        assert_eq!(r[(1, 2)], 0.0);
        assert!(poet_from_cov(&s, 1, 1.5).is_err());
    }
}
