//! Least absolute deviation regression by a bounded-variable simplex on the
//! dual linear program
//!
//! ```text
//! max xᵀu  subject to  Hᵀu = 0,  −1 ≤ u ≤ 1
//! ```
//!
//! whose equality multipliers are the regression weights. With `K` covariates
//! the basis is `K × K`, so each pivot costs `O(pK + K³)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::matrix::{dot, Matrix};

const MAX_PIVOTS_PER_ROW: usize = 50;

/// Weights `w` minimizing `‖x − H w‖₁` for a `p × K` covariate matrix `H`.
pub fn l1_regress(x: &[f64], h: &Matrix) -> Result<Vec<f64>> {
    let (p, k) = (h.rows(), h.cols());
    if x.len() != p {
        return Err(Error::Dimension { expected: format!("{p} responses"), found: format!("{}", x.len()) });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("response contains non-finite values".into()));
    }
    h.ensure_finite()?;
    if k == 0 {
        return Ok(Vec::new());
    }
    if k > p {
        return Err(Error::Argument(format!("{k} covariates but only {p} observations")));
    }
    let scale_x = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = 1e-11 * scale_x;

    let mut basis = initial_basis(h)?;
    let mut u = vec![0.0; p];
    let mut is_basic = vec![false; p];
    for &b in &basis {
        is_basic[b] = true;
    }
    let cap = MAX_PIVOTS_PER_ROW * (p + k);
    let mut degenerate_run = 0usize;
    for _ in 0..cap {
        let bmat = Matrix::from_fn(k, k, |r, c| h[(basis[c], r)]);
        let lu = Lu::new(&bmat)?;
        let bt = bmat.transpose();
        let w = Lu::new(&bt)?.solve(&basis.iter().map(|&b| x[b]).collect::<Vec<_>>());

        // Reduced costs are the regression residuals x_j − h_jᵀw.
        let bland = degenerate_run > 2 * k + 10;
        let mut entering: Option<(usize, f64, f64)> = None;
        for j in 0..p {
            if is_basic[j] {
                continue;
            }
            let d = x[j] - dot(h.row(j), &w);
            let dir = if d > tol && u[j] < 1.0 {
                1.0
            } else if d < -tol && u[j] > -1.0 {
                -1.0
            } else {
                continue;
            };
            match entering {
                None => entering = Some((j, dir, d.abs())),
                Some((_, _, best)) if !bland && d.abs() > best => entering = Some((j, dir, d.abs())),
                _ => {}
            }
            if bland {
                break;
            }
        }
        let Some((j, dir, _)) = entering else {
            return Ok(w);
        };

        // Moving u_j by θ·dir changes the basic block by −θ·dir·B⁻¹h_j.
        let alpha = lu.solve(h.row(j));
        let mut theta = if dir > 0.0 { 1.0 - u[j] } else { u[j] + 1.0 };
        let mut leave: Option<usize> = None;
        for (r, &a) in alpha.iter().enumerate() {
            let delta = -dir * a;
            if delta.abs() <= 1e-12 {
                continue;
            }
            let ub = u[basis[r]];
            let room = if delta > 0.0 { (1.0 - ub) / delta } else { (ub + 1.0) / -delta };
            let room = room.max(0.0);
            if room < theta - 1e-15 || (leave.is_some() && room <= theta && basis[r] < basis[leave.unwrap()]) {
                theta = room;
                leave = Some(r);
            }
        }
        for (r, &a) in alpha.iter().enumerate() {
            u[basis[r]] -= theta * dir * a;
        }
        u[j] += theta * dir;
        degenerate_run = if theta <= 1e-14 { degenerate_run + 1 } else { 0 };
        if let Some(r) = leave {
            let out = basis[r];
            u[out] = if u[out] > 0.0 { 1.0 } else { -1.0 };
            is_basic[out] = false;
            is_basic[j] = true;
            basis[r] = j;
        } else {
            u[j] = if dir > 0.0 { 1.0 } else { -1.0 };
        }
    }
    Err(Error::NoConvergence { iterations: cap })
}

/// `K` observation indices whose covariate rows are linearly independent,
/// chosen by Gaussian elimination with complete pivoting on `H`.
fn initial_basis(h: &Matrix) -> Result<Vec<usize>> {
    let (p, k) = (h.rows(), h.cols());
    let mut work = h.clone();
    let scale = h.max_abs().max(f64::MIN_POSITIVE);
    let mut used_rows = vec![false; p];
    let mut used_cols = vec![false; k];
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = (0usize, 0usize, 0.0f64);
        for i in (0..p).filter(|&i| !used_rows[i]) {
            for c in (0..k).filter(|&c| !used_cols[c]) {
                if work[(i, c)].abs() > best.2 {
                    best = (i, c, work[(i, c)].abs());
                }
            }
        }
        let (pi, pc, mag) = best;
        if mag <= 1e-10 * scale {
            return Err(Error::Argument("covariate matrix is rank deficient".into()));
        }
        used_rows[pi] = true;
        used_cols[pc] = true;
        chosen.push(pi);
        let pivot_row: Vec<f64> = work.row(pi).to_vec();
        for i in (0..p).filter(|&i| !used_rows[i]) {
            let f = work[(i, pc)] / pivot_row[pc];
            if f != 0.0 {
                for (dst, src) in work.row_mut(i).iter_mut().zip(&pivot_row) {
                    *dst -= f * src;
                }
            }
        }
    }
    Ok(chosen)
}

/// `‖x − H w‖₁`.
pub fn l1_objective(x: &[f64], h: &Matrix, w: &[f64]) -> f64 {
    (0..h.rows()).map(|i| (x[i] - dot(h.row(i), w)).abs()).sum()
}
