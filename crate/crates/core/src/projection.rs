//! Euclidean projections onto the diagonally dominant cones
//!
//! ```text
//! DD_c⁺  = { X : x_jj ≥ c Σ_{i≠j} |x_ji| for every row j }
//! SDD_c⁺ = DD_c⁺ ∩ { X = Xᵀ }
//! ```
//!
//! `DD_c⁺` is a product of per-row cones, so its projection is computed row
//! by row. For `c = 1` each row uses the sort-based closed form; other values
//! of `c` go through an exact active-set solve of the row problem. The
//! symmetric cone is reached either with Dykstra's alternating scheme or by
//! projected Newton on the `p`-dimensional dual.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, SymmetricMatrix};

/// Dominance constant `c > 0` of the cone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeSpec {
    c: f64,
}

impl ConeSpec {
    pub fn new(c: f64) -> Result<Self> {
        if c > 0.0 && c.is_finite() {
            Ok(ConeSpec { c })
        } else {
            Err(Error::Argument(format!("dominance constant must be positive, got {c}")))
        }
    }

    #[inline]
    pub fn c(&self) -> f64 {
        self.c
    }
}

impl Default for ConeSpec {
    fn default() -> Self {
        ConeSpec { c: 1.0 }
    }
}

/// `ζ(B) = min_j { b_jj − Σ_{i≠j} |b_ji| }`, computed over rows.
pub fn dd_margin(b: &Matrix) -> f64 {
    dd_margin_c(b, 1.0)
}

/// `min_j { b_jj − c Σ_{i≠j} |b_ji| }`.
pub fn dd_margin_c(b: &Matrix, c: f64) -> f64 {
    assert!(b.is_square(), "dd_margin needs a square matrix");
    let mut worst = f64::INFINITY;
    for j in 0..b.rows() {
        let row = b.row(j);
        let off: f64 = row.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, v)| v.abs()).sum();
        worst = worst.min(row[j] - c * off);
    }
    worst
}

/// Projection onto `DD⁺` (`c = 1`).
pub fn project_dd(a: &Matrix) -> Result<Matrix> {
    Ok(project_rows(a, 1.0)?.0)
}

/// Projection onto `DD_c⁺`.
pub fn project_dd_c(a: &Matrix, c: f64) -> Result<Matrix> {
    let cone = ConeSpec::new(c)?;
    Ok(project_rows(a, cone.c)?.0)
}

/// Row-wise projection; also reports rows where the closed form found no
/// breakpoint and the active-set solve was used instead.
pub fn project_rows(a: &Matrix, c: f64) -> Result<(Matrix, Vec<usize>)> {
    a.ensure_square()?;
    a.ensure_finite()?;
    let p = a.rows();
    let mut out = a.clone();
    let mut fallbacks = Vec::new();
    let mut work = RowWork::new(p);
    for j in 0..p {
        let row = out.row_mut(j);
        if c != 1.0 {
            active_set_row(row, j, c, &mut work);
        } else if !mrt_row(row, j, &mut work) {
            log::warn!("row {j}: no admissible breakpoint in closed-form projection; solving row QP");
            fallbacks.push(j);
            row.copy_from_slice(a.row(j));
            active_set_row(row, j, 1.0, &mut work);
        }
    }
    Ok((out, fallbacks))
}

struct RowWork {
    mags: Vec<f64>,
    order: Vec<usize>,
}

impl RowWork {
    fn new(p: usize) -> Self {
        RowWork { mags: Vec::with_capacity(p), order: Vec::with_capacity(p) }
    }
}

/// Closed-form projection of one row onto `{x : x_jj ≥ Σ_{i≠j} |x_ji|}`.
/// Returns `false` when no breakpoint qualifies; the row is then untouched.
fn mrt_row(row: &mut [f64], j: usize, work: &mut RowWork) -> bool {
    let a0 = row[j];
    let mut total = 0.0;
    let mut largest = 0.0f64;
    for (i, &v) in row.iter().enumerate() {
        if i != j {
            total += v.abs();
            largest = largest.max(v.abs());
        }
    }
    if a0 >= total {
        return true;
    }
    if a0 <= -largest {
        row.iter_mut().for_each(|x| *x = 0.0);
        return true;
    }

    // Ascending magnitudes; tie order does not affect the shift.
    let sorted = &mut work.mags;
    sorted.clear();
    sorted.extend(row.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, v)| v.abs()));
    sorted.sort_unstable_by(f64::total_cmp);

    // d̄_m = (Σ_{k ≥ m} e_k − a_jj) / (#{k ≥ m} + 1); take the first m with
    // e_m > 0 and e_m ≥ d̄_m.
    let m = sorted.len();
    let mut suffix = total;
    let mut shift = None;
    for (k, &e) in sorted.iter().enumerate() {
        if e > 0.0 {
            let dbar = (suffix - a0) / ((m - k) as f64 + 1.0);
            if e >= dbar {
                shift = Some(dbar);
                break;
            }
        }
        suffix -= e;
    }
    let Some(dbar) = shift else {
        return false;
    };
    for (i, x) in row.iter_mut().enumerate() {
        if i == j {
            *x = a0 + dbar;
        } else {
            let shrunk = (x.abs() - dbar).max(0.0);
            *x = if *x < 0.0 { -shrunk } else { shrunk };
        }
    }
    true
}

/// Exact projection of one row onto `{x : x_jj ≥ c Σ_{i≠j} |x_ji|}`.
///
/// After flipping signs the row problem is
/// `min ½(x₀−a₀)² + ½Σ(y_i−b_i)²` over `y ≥ 0`, `x₀ ≥ cΣy_i`, whose solution is
/// `x₀ = a₀ + μ`, `y_i = (b_i − cμ)⁺`. The multiplier is found by shrinking the
/// active set until it is self-consistent; `μ` only grows along the way, so
/// dropped entries never return.
fn active_set_row(row: &mut [f64], j: usize, c: f64, work: &mut RowWork) {
    let a0 = row[j];
    let total: f64 = row.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, v)| v.abs()).sum();
    if a0 >= c * total {
        return;
    }
    work.order.clear();
    work.order.extend((0..row.len()).filter(|&i| i != j && row[i] != 0.0));
    let mut mu;
    loop {
        let sum: f64 = work.order.iter().map(|&i| row[i].abs()).sum();
        mu = (c * sum - a0) / (1.0 + c * c * work.order.len() as f64);
        let before = work.order.len();
        work.order.retain(|&i| row[i].abs() > c * mu);
        if work.order.len() == before {
            break;
        }
    }
    let mu = mu.max(0.0);
    for (i, x) in row.iter_mut().enumerate() {
        if i == j {
            *x = a0 + mu;
        } else {
            let shrunk = (x.abs() - c * mu).max(0.0);
            *x = if *x < 0.0 { -shrunk } else { shrunk };
        }
    }
}

/// Outcome of the Dykstra projection onto `SDD_c⁺`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub matrix: SymmetricMatrix,
    pub iterations: usize,
    /// `‖I^(t) − I^(t−1)‖_F` at the last iteration.
    pub residual: f64,
    pub converged: bool,
    /// Rows that needed the row-QP fallback at any iteration.
    pub fallback_rows: Vec<usize>,
}

/// Projection onto `SDD_c⁺` by Dykstra's algorithm:
///
/// ```text
/// G^t = P_DD(sym(G^{t−1}) − I^{t−1}),   I^t = G^t − (sym(G^{t−1}) − I^{t−1})
/// ```
///
/// Stops once `‖I^t − I^{t−1}‖_F ≤ tol·‖A‖_F` and the margin of `sym(G^t)` is at
/// least `−tol·‖A‖_F`; hitting `max_iter` clears `converged`.
pub fn project_sdd(
    a: &Matrix,
    cone: ConeSpec,
    tol: f64,
    max_iter: usize,
) -> Result<ProjectionResult> {
    a.ensure_square()?;
    a.ensure_finite()?;
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Argument("max_iter must be at least 1".into()));
    }
    let p = a.rows();
    let c = cone.c();
    let scale = tol * a.frob_norm();
    let mut x = a.sym_part();
    let mut inc = Matrix::zeros(p, p);
    let mut fallback_rows: Vec<usize> = Vec::new();
    let mut residual = f64::INFINITY;
    for t in 1..=max_iter {
        // z = sym(G^{t−1}) − I^{t−1}
        let z = x.as_matrix().sub(&inc);
        let (g, rows) = project_rows(&z, c)?;
        for r in rows {
            if !fallback_rows.contains(&r) {
                fallback_rows.push(r);
            }
        }
        let new_inc = g.sub(&z);
        residual = new_inc.frob_dist(&inc);
        inc = new_inc;
        x = g.sym_part();
        if residual <= scale && dd_margin_c(&x, c) >= -scale {
            return Ok(ProjectionResult {
                matrix: x,
                iterations: t,
                residual,
                converged: true,
                fallback_rows,
            });
        }
    }
    log::warn!("Dykstra projection stopped at the iteration cap ({max_iter}), residual {residual:.3e}");
    Ok(ProjectionResult { matrix: x, iterations: max_iter, residual, converged: false, fallback_rows })
}

/// Projection onto `SDD_c⁺` through its dual. For multipliers `μ ≥ 0` on the
/// row constraints the Lagrangian minimizer is
///
/// ```text
/// x_ii = a_ii + μ_i,   x_ij = soft(a_ij, c(μ_i + μ_j)/2)
/// ```
///
/// and the dual gradient is the vector of row margins. The dual is solved by
/// projected Newton with conjugate-gradient steps and an Armijo search; the
/// iteration stops once `‖min(μ, h(μ))‖₂ ≤ tol·‖A‖_F`.
pub fn project_sdd_dual(
    a: &Matrix,
    cone: ConeSpec,
    tol: f64,
    max_iter: usize,
) -> Result<ProjectionResult> {
    a.ensure_square()?;
    a.ensure_finite()?;
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Argument("max_iter must be at least 1".into()));
    }
    let p = a.rows();
    let c = cone.c();
    let sym = a.sym_part();
    let dual = Dual { a: &sym, c, p };
    let scale = tol * a.frob_norm();
    let mut mu = vec![0.0; p];
    let mut h = dual.margins(&mu);
    let mut f = dual.objective(&mu);
    let mut residual = f64::INFINITY;
    let mut free = vec![false; p];
    let mut d = vec![0.0; p];
    let mut trial = vec![0.0; p];
    for t in 1..=max_iter {
        residual = crate::math::sqrt(mu.iter().zip(&h).map(|(m, g)| { let v = m.min(*g); v * v }).sum());
        if residual <= scale {
            let x = dual.primal(&mu);
            if dd_margin_c(&x, c) >= -scale {
                return Ok(ProjectionResult {
                    matrix: x,
                    iterations: t - 1,
                    residual,
                    converged: true,
                    fallback_rows: Vec::new(),
                });
            }
        }
        let eps = residual.min(1e-3 * (1.0 + a.max_abs()));
        for i in 0..p {
            free[i] = !(mu[i] <= eps && h[i] > 0.0);
        }
        let diag = dual.hessian_diag(&mu);
        dual.newton_direction(&mu, &h, &free, &diag, &mut d);
        for i in (0..p).filter(|&i| !free[i]) {
            d[i] = -h[i] / diag[i];
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..p {
                trial[i] = (mu[i] + step * d[i]).max(0.0);
            }
            let ft = dual.objective(&trial);
            let mut decrease = 0.0;
            for i in 0..p {
                decrease += if free[i] { -step * h[i] * d[i] } else { h[i] * (mu[i] - trial[i]) };
            }
            if f - ft >= 1e-4 * decrease || f - ft >= 0.0 && decrease <= f64::EPSILON * f.abs() {
                accepted = true;
                f = ft;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        core::mem::swap(&mut mu, &mut trial);
        h = dual.margins(&mu);
    }
    let x = dual.primal(&mu);
    let converged = residual <= scale && dd_margin_c(&x, c) >= -scale;
    if !converged {
        log::debug!("dual SDD projection stopped early, residual {residual:.3e}");
    }
    Ok(ProjectionResult { matrix: x, iterations: max_iter, residual, converged, fallback_rows: Vec::new() })
}

struct Dual<'a> {
    a: &'a SymmetricMatrix,
    c: f64,
    p: usize,
}

impl Dual<'_> {
    #[inline]
    fn shrink(&self, mu: &[f64], i: usize, j: usize) -> f64 {
        0.5 * self.c * (mu[i] + mu[j])
    }

    fn primal(&self, mu: &[f64]) -> SymmetricMatrix {
        SymmetricMatrix::from_upper(self.p, |i, j| {
            let v = self.a[(i, j)];
            if i == j {
                v + mu[i]
            } else {
                let m = (v.abs() - self.shrink(mu, i, j)).max(0.0);
                if v < 0.0 { -m } else { m }
            }
        })
    }

    /// Row margins `x_ii − c Σ_j |x_ij|` of the primal point.
    fn margins(&self, mu: &[f64]) -> Vec<f64> {
        (0..self.p)
            .map(|i| {
                let row = self.a.row(i);
                let mut s = 0.0;
                for (j, v) in row.iter().enumerate() {
                    if j != i {
                        s += (v.abs() - self.shrink(mu, i, j)).max(0.0);
                    }
                }
                row[i] + mu[i] - self.c * s
            })
            .collect()
    }

    /// Negated dual function.
    fn objective(&self, mu: &[f64]) -> f64 {
        let mut g = 0.0;
        for i in 0..self.p {
            let row = self.a.row(i);
            g -= 0.5 * mu[i] * mu[i] + mu[i] * row[i];
            for (j, v) in row.iter().enumerate().skip(i + 1) {
                let (alpha, t) = (v.abs(), self.shrink(mu, i, j));
                g += if t < alpha { 2.0 * t * alpha - t * t } else { alpha * alpha };
            }
        }
        -g
    }

    fn hessian_diag(&self, mu: &[f64]) -> Vec<f64> {
        let half = 0.5 * self.c * self.c;
        (0..self.p)
            .map(|i| {
                let row = self.a.row(i);
                let active = (0..self.p).filter(|&j| j != i && row[j].abs() > self.shrink(mu, i, j)).count();
                1.0 + half * active as f64
            })
            .collect()
    }

    /// `y_F = H_FF v_F` with `H = I + (c²/2)(D + W)` over the active pairs.
    fn hessian_mul(&self, mu: &[f64], free: &[bool], v: &[f64], y: &mut [f64]) {
        let half = 0.5 * self.c * self.c;
        for i in 0..self.p {
            if !free[i] {
                y[i] = 0.0;
                continue;
            }
            let row = self.a.row(i);
            let mut acc = v[i];
            for j in 0..self.p {
                if j != i && row[j].abs() > self.shrink(mu, i, j) {
                    acc += half * (v[i] + if free[j] { v[j] } else { 0.0 });
                }
            }
            y[i] = acc;
        }
    }

    /// Jacobi-preconditioned conjugate gradients for `H_FF d_F = −h_F`.
    fn newton_direction(&self, mu: &[f64], h: &[f64], free: &[bool], diag: &[f64], d: &mut [f64]) {
        let p = self.p;
        d.iter_mut().for_each(|x| *x = 0.0);
        let mut r: Vec<f64> = (0..p).map(|i| if free[i] { -h[i] } else { 0.0 }).collect();
        let mut z: Vec<f64> = (0..p).map(|i| r[i] / diag[i]).collect();
        let mut q = z.clone();
        let mut hq = vec![0.0; p];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let target = 1e-24 * rz.max(f64::MIN_POSITIVE);
        for _ in 0..(2 * p).max(50) {
            if rz <= target {
                break;
            }
            self.hessian_mul(mu, free, &q, &mut hq);
            let qhq: f64 = q.iter().zip(&hq).map(|(a, b)| a * b).sum();
            if !(qhq > 0.0) {
                break;
            }
            let alpha = rz / qhq;
            for i in 0..p {
                d[i] += alpha * q[i];
                r[i] -= alpha * hq[i];
                z[i] = r[i] / diag[i];
            }
            let next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = next / rz;
            rz = next;
            for i in 0..p {
                q[i] = z[i] + beta * q[i];
            }
        }
    }
}
