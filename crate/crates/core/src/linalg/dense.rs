//! Small dense solvers: LU with partial pivoting, Cholesky, and
//! eigen-based inverses of symmetric matrices.

use alloc::format;
use alloc::vec::Vec;

use super::eigen::{eig_sym, weighted_outer_sum};
use crate::error::{Error, Result};
use crate::math;
use crate::matrix::{Matrix, SymmetricMatrix};

/// LU factorization `P A = L U` of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(a: &Matrix) -> Result<Lu> {
        a.ensure_square()?;
        a.ensure_finite()?;
        let n = a.rows();
        let scale = a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            for i in k + 1..n {
                if lu[(i, k)].abs() > lu[(piv, k)].abs() {
                    piv = i;
                }
            }
            if !(lu[(piv, k)].abs() > 1e-14 * scale) {
                return Err(Error::Numerical(format!(
                    "matrix is singular to working precision (pivot {k})"
                )));
            }
            if piv != k {
                perm.swap(piv, k);
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(piv, j)];
                    lu[(piv, j)] = t;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        assert_eq!(b.len(), n, "right-hand side length");
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(l, y)| l * y).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, y)| u * y).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }
}

/// Solves `A x = b`.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows() != b.len() {
        return Err(Error::Dimension {
            expected: format!("right-hand side of length {}", a.rows()),
            found: format!("{}", b.len()),
        });
    }
    Ok(Lu::new(a)?.solve(b))
}

/// Lower-triangular Cholesky factor of a positive definite matrix.
pub fn cholesky(a: &SymmetricMatrix) -> Result<Matrix> {
    let n = a.dim();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut s = a[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if !(s > 0.0) {
            return Err(Error::Numerical(format!(
                "matrix is not positive definite (pivot {j} = {s:.3e})"
            )));
        }
        let ljj = math::sqrt(s);
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

fn extreme_abs(values: &[f64]) -> (f64, f64) {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    (min, max)
}

/// Inverse of a symmetric matrix through its eigendecomposition. Fails when
/// `min |λ| <= 1e-12 · max |λ|`.
pub fn inverse_sym(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let es = eig_sym(a)?;
    let (min, max) = extreme_abs(&es.values);
    if !(min > 1e-12 * max) {
        let lambda_min = es.values.iter().copied().fold(f64::INFINITY, |m, v| {
            if v.abs() < m.abs() {
                v
            } else {
                m
            }
        });
        return Err(Error::Singular { lambda_min, lambda_max: es.values[0] });
    }
    let w: Vec<f64> = es.values.iter().map(|v| 1.0 / v).collect();
    Ok(weighted_outer_sum(a.dim(), &w, &es.vectors))
}

/// Moore-Penrose inverse with eigenvalues below `rel · max |λ|` discarded.
pub fn pinv_sym(a: &SymmetricMatrix, rel: f64) -> Result<SymmetricMatrix> {
    let es = eig_sym(a)?;
    let cut = rel * es.values.first().map_or(0.0, |v| v.abs());
    let w: Vec<f64> =
        es.values.iter().map(|&v| if v.abs() > cut { 1.0 / v } else { 0.0 }).collect();
    Ok(weighted_outer_sum(a.dim(), &w, &es.vectors))
}

/// `(A^{-1/2}, A^{-1})` for a symmetric positive definite `A`. Fails when
/// `λ_min <= 1e-12 · λ_max`.
pub fn spd_inv_sqrt(a: &SymmetricMatrix) -> Result<(SymmetricMatrix, SymmetricMatrix)> {
    let es = eig_sym(a)?;
    let lambda_max = es.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lambda_min = es.values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lambda_min > 1e-12 * lambda_max) {
        return Err(Error::Singular { lambda_min, lambda_max });
    }
    let half: Vec<f64> = es.values.iter().map(|v| 1.0 / math::sqrt(*v)).collect();
    let full: Vec<f64> = es.values.iter().map(|v| 1.0 / v).collect();
    Ok((
        weighted_outer_sum(a.dim(), &half, &es.vectors),
        weighted_outer_sum(a.dim(), &full, &es.vectors),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_permuted_system() {
        let a = Matrix::from_rows(&[[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]]).unwrap();
        let x = solve(&a, &[5.0, 3.0, 6.0]).unwrap();
        let back = a.mul_vec(&x);
        for (b, e) in back.iter().zip([5.0, 3.0, 6.0]) {
            assert!((b - e).abs() < 1e-12);
        }
        let singular = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        assert!(Lu::new(&singular).is_err());
    }

    #[test]
    fn inverse_of_diagonal() {
        let inv = inverse_sym(&SymmetricMatrix::from_diag(&[1.0, 4.0])).unwrap();
        assert!((inv[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((inv[(1, 1)] - 0.25).abs() < 1e-15);
        assert_eq!(inv[(0, 1)], 0.0);
        let err = inverse_sym(&SymmetricMatrix::from_diag(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = SymmetricMatrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        let back = l.matmul(&l.transpose());
        assert!(back.frob_dist(&a) < 1e-14);
    }
}
