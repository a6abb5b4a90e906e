//! Symmetric eigensolver: Householder tridiagonalization followed by implicit
//! QL with Wilkinson-style shifts.
//!
//! Two entry points share the reduction. The full solver accumulates the
//! orthogonal transform and rotates it into eigenvectors. The selective
//! solver computes all eigenvalues from the tridiagonal form, then recovers
//! only the requested eigenvectors by inverse iteration and maps them back
//! through the stored reflectors. It checks its own residuals and falls back
//! to the full solver whenever they are not convincing.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::{axpy, dot, Matrix, SymmetricMatrix};

const EPS: f64 = f64::EPSILON;
const MAX_QL_SWEEPS: usize = 60;

/// Eigenpairs of a symmetric matrix ordered by descending `|λ|`.
///
/// `vectors.row(k)` is the unit eigenvector belonging to `values[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        self.vectors.row(k)
    }

    /// Eigenvectors as the columns of a `p × m` matrix.
    pub fn columns(&self) -> Matrix {
        self.vectors.transpose()
    }

    /// `Σ_k values[k] v_k v_kᵀ`.
    pub fn reconstruct(&self) -> SymmetricMatrix {
        weighted_outer_sum(self.dim(), &self.values, &self.vectors)
    }

    /// Keeps the first `k` pairs.
    pub fn truncated(mut self, k: usize) -> EigenSystem {
        let k = k.min(self.len());
        let p = self.dim();
        self.values.truncate(k);
        let mut data = self.vectors.into_vec();
        data.truncate(k * p);
        self.vectors = Matrix::from_vec(k, p, data).expect("consistent shape");
        self
    }
}

/// `Σ_k w[k] v_k v_kᵀ` for the rows `v_k` of `vectors`; only the upper
/// triangle is accumulated and then mirrored.
pub fn weighted_outer_sum(p: usize, weights: &[f64], vectors: &Matrix) -> SymmetricMatrix {
    let mut out = Matrix::zeros(p, p);
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let v = vectors.row(k);
        for i in 0..p {
            let a = w * v[i];
            if a == 0.0 {
                continue;
            }
            let row = &mut out.row_mut(i)[i..];
            for (o, &vj) in row.iter_mut().zip(&v[i..]) {
                *o += a * vj;
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            out[(i, j)] = out[(j, i)];
        }
    }
    SymmetricMatrix::from_matrix(out, 0.0).expect("mirrored upper triangle is symmetric")
}

/// Positions of `values` in canonical order: descending `|λ|`, then
/// descending signed value, then ascending original index.
pub fn canonical_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| compare_eigenvalues(values[a], values[b]).then(a.cmp(&b)));
    idx
}

fn compare_eigenvalues(a: f64, b: f64) -> Ordering {
    b.abs()
        .partial_cmp(&a.abs())
        .unwrap_or(Ordering::Equal)
        .then(b.partial_cmp(&a).unwrap_or(Ordering::Equal))
}

struct Reflector {
    start: usize,
    beta: f64,
    v: Vec<f64>,
}

impl Reflector {
    /// `x ← (I − β v vᵀ) x` on the trailing block.
    fn apply(&self, x: &mut [f64]) {
        if self.beta == 0.0 {
            return;
        }
        let tail = &mut x[self.start..];
        let s = self.beta * dot(&self.v, tail);
        for (t, &vi) in tail.iter_mut().zip(&self.v) {
            *t -= s * vi;
        }
    }
}

struct Tridiagonal {
    d: Vec<f64>,
    /// `e[i]` couples rows `i` and `i + 1`; the last entry is zero.
    e: Vec<f64>,
    reflectors: Vec<Reflector>,
}

impl Tridiagonal {
    fn norm_bound(&self) -> f64 {
        let n = self.d.len();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.e[i - 1].abs() } else { 0.0 };
                self.d[i].abs() + self.e[i].abs() + left
            })
            .fold(0.0, f64::max)
    }
}

/// Householder reduction working on the lower triangle only.
fn tridiagonalize(a: &Matrix) -> Tridiagonal {
    let n = a.rows();
    let mut w = a.as_slice().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut reflectors = Vec::with_capacity(n.saturating_sub(1));
    let mut p = vec![0.0; n];

    for k in 0..n.saturating_sub(1) {
        let base = k + 1;
        let m = n - base;
        d[k] = w[k * n + k];
        let x: Vec<f64> = (base..n).map(|i| w[i * n + k]).collect();
        let tail_sq: f64 = x[1..].iter().map(|v| v * v).sum();
        if tail_sq == 0.0 {
            e[k] = x[0];
            reflectors.push(Reflector { start: base, beta: 0.0, v: Vec::new() });
            continue;
        }
        let sigma = math::sqrt(x[0] * x[0] + tail_sq);
        let alpha = if x[0] > 0.0 { -sigma } else { sigma };
        let mut v = x;
        v[0] -= alpha;
        let vtv = v[0] * v[0] + tail_sq;
        let beta = 2.0 / vtv;
        e[k] = alpha;

        // p = β B v, q = p − (β/2)(vᵀp) v, B ← B − v qᵀ − q vᵀ.
        let p = &mut p[..m];
        p.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..m {
            let start = (base + i) * n + base;
            let row = &w[start..start + i + 1];
            let vi = v[i];
            let acc = row[i] * vi + dot(&row[..i], &v[..i]);
            axpy(vi, &row[..i], &mut p[..i]);
            p[i] += acc;
        }
        for x in p.iter_mut() {
            *x *= beta;
        }
        let kappa = 0.5 * beta * dot(&v, p);
        for i in 0..m {
            p[i] -= kappa * v[i];
        }
        for i in 0..m {
            let (vi, qi) = (v[i], p[i]);
            let start = (base + i) * n + base;
            let row = &mut w[start..start + i + 1];
            for (j, r) in row.iter_mut().enumerate() {
                *r -= vi * p[j] + qi * v[j];
            }
        }
        reflectors.push(Reflector { start: base, beta, v });
    }
    if n > 0 {
        d[n - 1] = w[n * n - 1];
    }
    Tridiagonal { d, e, reflectors }
}

/// Rows of `Qᵀ` where `A = Q T Qᵀ`.
fn accumulate_transform(t: &Tridiagonal, n: usize) -> Vec<f64> {
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    let mut r = vec![0.0; n];
    for refl in t.reflectors.iter().rev() {
        if refl.beta == 0.0 {
            continue;
        }
        let base = refl.start;
        let m = n - base;
        let r = &mut r[..m];
        r.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..m {
            let vi = refl.v[i];
            let row = &q[(base + i) * n + base..(base + i) * n + n];
            for (acc, &x) in r.iter_mut().zip(row) {
                *acc += vi * x;
            }
        }
        for i in 0..m {
            let s = refl.beta * refl.v[i];
            let row = &mut q[(base + i) * n + base..(base + i) * n + n];
            for (x, &rj) in row.iter_mut().zip(r.iter()) {
                *x -= s * rj;
            }
        }
    }
    // transpose in place
    for i in 0..n {
        for j in i + 1..n {
            q.swap(i * n + j, j * n + i);
        }
    }
    q
}

/// Implicit QL on `(d, e)`. When `rows` is given, every rotation is also
/// applied to pairs of its rows (each of length `n`).
fn tql2(d: &mut [f64], e: &mut [f64], mut rows: Option<&mut [f64]>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= EPS * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_QL_SWEEPS {
                    return Err(Error::NoConvergence { iterations: sweeps - 1 });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = math::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = math::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(rows) = rows.as_deref_mut() {
                        let (lo, hi) = rows.split_at_mut((i + 1) * n);
                        let ri = &mut lo[i * n..];
                        let ri1 = &mut hi[..n];
                        for (a, b) in ri.iter_mut().zip(ri1.iter_mut()) {
                            let h = *b;
                            *b = s * *a + c * h;
                            *a = c * *a - s * h;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= EPS * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn check_input(m: &SymmetricMatrix) -> Result<()> {
    m.ensure_finite()?;
    if m.dim() == 0 {
        return Err(Error::Input("empty matrix".into()));
    }
    Ok(())
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Full eigendecomposition.
pub fn eig_sym(m: &SymmetricMatrix) -> Result<EigenSystem> {
    check_input(m)?;
    let n = m.dim();
    let mut t = tridiagonalize(m);
    let mut rows = accumulate_transform(&t, n);
    tql2(&mut t.d, &mut t.e, Some(&mut rows))?;
    let order = canonical_order(&t.d);
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * n);
    for &k in &order {
        values.push(t.d[k]);
        let start = vectors.len();
        vectors.extend_from_slice(&rows[k * n..(k + 1) * n]);
        normalize_sign(&mut vectors[start..]);
    }
    Ok(EigenSystem { values, vectors: Matrix::from_vec(n, n, vectors)? })
}

/// All eigenvalues in canonical order.
pub fn eigvals_sym(m: &SymmetricMatrix) -> Result<Vec<f64>> {
    check_input(m)?;
    let mut t = tridiagonalize(m);
    tql2(&mut t.d, &mut t.e, None)?;
    let order = canonical_order(&t.d);
    Ok(order.into_iter().map(|k| t.d[k]).collect())
}

/// The leading `k` eigenpairs in canonical order.
pub fn eig_sym_top(m: &SymmetricMatrix, k: usize) -> Result<EigenSystem> {
    eig_sym_select(m, |sorted| k.min(sorted.len()))
}

/// All eigenpairs with `|λ| > tau`, in canonical order.
pub fn eig_sym_above(m: &SymmetricMatrix, tau: f64) -> Result<EigenSystem> {
    eig_sym_select(m, |sorted| sorted.iter().take_while(|v| v.abs() > tau).count())
}

/// Eigenpairs for a prefix of the canonical order; `count` receives all
/// eigenvalues in that order and returns how many pairs to keep.
pub fn eig_sym_select(
    m: &SymmetricMatrix,
    count: impl FnOnce(&[f64]) -> usize,
) -> Result<EigenSystem> {
    check_input(m)?;
    let n = m.dim();
    let t = tridiagonalize(m);
    let blocks = split_blocks(&t.d, &t.e);
    let mut all = Vec::with_capacity(n);
    let mut owner = Vec::with_capacity(n);
    for (b, &(lo, hi)) in blocks.iter().enumerate() {
        let mut d = t.d[lo..hi].to_vec();
        let mut e = t.e[lo..hi].to_vec();
        e[hi - lo - 1] = 0.0;
        tql2(&mut d, &mut e, None)?;
        all.extend_from_slice(&d);
        owner.extend(core::iter::repeat(b).take(hi - lo));
    }
    let order = canonical_order(&all);
    let sorted: Vec<f64> = order.iter().map(|&k| all[k]).collect();
    let want = count(&sorted).min(n);
    if want == 0 {
        return Ok(EigenSystem { values: Vec::new(), vectors: Matrix::zeros(0, n) });
    }
    if 3 * want > n {
        return Ok(eig_sym(m)?.truncated(want));
    }
    let values = sorted[..want].to_vec();
    let targets: Vec<(f64, (usize, usize))> =
        order[..want].iter().map(|&k| (all[k], blocks[owner[k]])).collect();
    match inverse_iteration(&t, &targets) {
        Some(z) => {
            let mut vectors = Matrix::zeros(want, n);
            for (k, zk) in z.iter().enumerate() {
                let u = vectors.row_mut(k);
                u.copy_from_slice(zk);
                for refl in t.reflectors.iter().rev() {
                    refl.apply(u);
                }
                normalize_sign(u);
            }
            if residuals_ok(m, &values, &vectors) {
                return Ok(EigenSystem { values, vectors });
            }
            log::debug!("selective eigensolver failed verification; using full solver");
            Ok(eig_sym(m)?.truncated(want))
        }
        None => Ok(eig_sym(m)?.truncated(want)),
    }
}

/// Unreduced diagonal blocks `[lo, hi)` of the tridiagonal matrix.
fn split_blocks(d: &[f64], e: &[f64]) -> Vec<(usize, usize)> {
    let n = d.len();
    let mut blocks = Vec::new();
    let mut lo = 0;
    for i in 0..n {
        let last = i + 1 == n;
        if last || e[i].abs() <= EPS * (d[i].abs() + d[i + 1].abs()) {
            blocks.push((lo, i + 1));
            lo = i + 1;
        }
    }
    blocks
}

fn residuals_ok(m: &SymmetricMatrix, values: &[f64], vectors: &Matrix) -> bool {
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(m.max_abs());
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    for (k, &lambda) in values.iter().enumerate() {
        let u = vectors.row(k);
        let au = m.mul_vec(u);
        let res: f64 = au.iter().zip(u).map(|(a, x)| (a - lambda * x) * (a - lambda * x)).sum();
        if !(math::sqrt(res) <= tol) {
            return false;
        }
    }
    true
}

/// Tridiagonal LU with partial pivoting, LAPACK `gttrf` layout.
struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn new(diag: &[f64], off: &[f64], shift: f64, tiny: f64) -> Self {
        let n = diag.len();
        let mut d: Vec<f64> = diag.iter().map(|x| x - shift).collect();
        let mut dl = off[..n - 1].to_vec();
        let mut du = off[..n - 1].to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                } else {
                    dl[i] = 0.0;
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        for x in d.iter_mut() {
            if x.abs() < tiny {
                *x = if *x < 0.0 { -tiny } else { tiny };
            }
        }
        TridiagLu { dl, d, du, du2, swapped }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n >= 2 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = math::sqrt(dot(v, v));
    if !(norm > 0.0) || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Deterministic, index-dependent start vector.
fn start_vector(n: usize, index: usize) -> Vec<f64> {
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ (index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(1_442_695_040_888_963_407);
            ((state >> 11) as f64) * (1.0 / (1u64 << 53) as f64) - 0.5
        })
        .collect()
}

/// Eigenvectors of the tridiagonal matrix for the given eigenvalues, each
/// computed on the unreduced block it belongs to. `None` if inverse iteration
/// did not produce an orthonormal set.
fn inverse_iteration(t: &Tridiagonal, targets: &[(f64, (usize, usize))]) -> Option<Vec<Vec<f64>>> {
    let n = t.d.len();
    let tnorm = t.norm_bound().max(f64::MIN_POSITIVE);
    let tiny = EPS * tnorm;
    let cluster_gap = 1e-3 * tnorm;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(targets.len());
    for (k, &(lambda, (lo, hi))) in targets.iter().enumerate() {
        let mut full = vec![0.0; n];
        if hi - lo == 1 {
            full[lo] = 1.0;
            out.push(full);
            continue;
        }
        let lu = TridiagLu::new(&t.d[lo..hi], &t.e[lo..hi], lambda, tiny);
        let mut x = start_vector(hi - lo, k);
        let cluster: Vec<usize> = (0..k)
            .filter(|&j| targets[j].1 == (lo, hi) && (targets[j].0 - lambda).abs() < cluster_gap)
            .collect();
        for _ in 0..3 {
            lu.solve(&mut x);
            for &j in &cluster {
                let prev = &out[j][lo..hi];
                let proj = dot(prev, &x);
                for (xi, oi) in x.iter_mut().zip(prev) {
                    *xi -= proj * oi;
                }
            }
            if !normalize(&mut x) {
                return None;
            }
        }
        for &j in &cluster {
            if dot(&out[j][lo..hi], &x).abs() > 1e-10 {
                return None;
            }
        }
        full[lo..hi].copy_from_slice(&x);
        out.push(full);
    }
    Some(out)
}
