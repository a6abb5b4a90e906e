//! Brute-force reference solutions shared by the integration tests.
#![allow(dead_code)]

use ddpca_core::simgen::RngStream;
use ddpca_core::{Matrix, SymmetricMatrix};

/// Half-space `g·x ≥ h`.
pub struct HalfSpace {
    pub g: Vec<f64>,
    pub h: f64,
}

/// Euclidean projection of `a` onto an intersection of half-spaces, found by
/// enumerating every candidate active set and keeping the closest feasible
/// point.
pub fn polyhedron_projection(a: &[f64], cons: &[HalfSpace]) -> Vec<f64> {
    let n = a.len();
    let feasible = |x: &[f64]| cons.iter().all(|c| dotv(&c.g, x) >= c.h - 1e-10);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let m = cons.len();
    let mut consider = |x: Vec<f64>| {
        if feasible(&x) {
            let d = dist2(&x, a);
            if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                best = Some((d, x));
            }
        }
    };
    consider(a.to_vec());
    let mut subset = Vec::new();
    for mask in 1u32..(1u32 << m) {
        if mask.count_ones() as usize > n {
            continue;
        }
        subset.clear();
        subset.extend((0..m).filter(|&i| mask & (1 << i) != 0));
        if let Some(x) = affine_projection(a, cons, &subset) {
            consider(x);
        }
    }
    best.expect("the origin-containing cone is never empty").1
}

/// Projection onto `{x : g_i·x = h_i, i ∈ active}`; `None` for dependent rows.
fn affine_projection(a: &[f64], cons: &[HalfSpace], active: &[usize]) -> Option<Vec<f64>> {
    let k = active.len();
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            gram[r * k + c] = dotv(&cons[i].g, &cons[j].g);
        }
        rhs[r] = dotv(&cons[i].g, a) - cons[i].h;
    }
    let lam = gauss_solve(gram, rhs, k)?;
    let mut x = a.to_vec();
    for (r, &i) in active.iter().enumerate() {
        for (xv, gv) in x.iter_mut().zip(&cons[i].g) {
            *xv -= lam[r] * gv;
        }
    }
    Some(x)
}

/// Gaussian elimination with partial pivoting on a dense `k × k` system.
pub fn gauss_solve(mut m: Vec<f64>, mut b: Vec<f64>, k: usize) -> Option<Vec<f64>> {
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    for col in 0..k {
        let piv = (col..k).max_by(|&x, &y| m[x * k + col].abs().total_cmp(&m[y * k + col].abs()))?;
        if m[piv * k + col].abs() <= 1e-12 * scale {
            return None;
        }
        if piv != col {
            for c in 0..k {
                m.swap(piv * k + c, col * k + c);
            }
            b.swap(piv, col);
        }
        for r in col + 1..k {
            let f = m[r * k + col] / m[col * k + col];
            for c in col..k {
                m[r * k + c] -= f * m[col * k + c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| m[r * k + c] * x[c]).sum();
        x[r] = (b[r] - s) / m[r * k + r];
    }
    Some(x)
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sign_vectors(m: usize) -> Vec<Vec<f64>> {
    (0..1usize << m)
        .map(|mask| (0..m).map(|i| if mask & (1 << i) != 0 { -1.0 } else { 1.0 }).collect())
        .collect()
}

/// Projection of row `j` of a square matrix onto `{x : x_j ≥ c Σ_{i≠j} |x_i|}`.
pub fn dd_row_oracle(row: &[f64], j: usize, c: f64) -> Vec<f64> {
    let p = row.len();
    let cons: Vec<HalfSpace> = sign_vectors(p - 1)
        .into_iter()
        .map(|s| {
            let mut g = vec![0.0; p];
            g[j] = 1.0;
            let mut k = 0;
            for (i, gi) in g.iter_mut().enumerate() {
                if i != j {
                    *gi = -c * s[k];
                    k += 1;
                }
            }
            HalfSpace { g, h: 0.0 }
        })
        .collect();
    polyhedron_projection(row, &cons)
}

/// Row-by-row oracle projection onto `DD_c⁺`.
pub fn dd_oracle(a: &Matrix, c: f64) -> Matrix {
    let p = a.rows();
    let mut out = Matrix::zeros(p, p);
    for j in 0..p {
        out.row_mut(j).copy_from_slice(&dd_row_oracle(a.row(j), j, c));
    }
    out
}

/// Oracle projection onto `SDD_c⁺` for `p ≤ 3`. Off-diagonal pairs are
/// scaled by `√2` so the Frobenius metric becomes Euclidean.
pub fn sdd_oracle(a: &Matrix, c: f64) -> SymmetricMatrix {
    let p = a.rows();
    assert!(p <= 3);
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
    let n = p + pairs.len();
    let r2 = std::f64::consts::SQRT_2;
    let mut target = vec![0.0; n];
    for i in 0..p {
        target[i] = a[(i, i)];
    }
    for (q, &(i, j)) in pairs.iter().enumerate() {
        target[p + q] = r2 * 0.5 * (a[(i, j)] + a[(j, i)]);
    }
    let mut cons = Vec::new();
    for row in 0..p {
        let mine: Vec<usize> =
            (0..pairs.len()).filter(|&q| pairs[q].0 == row || pairs[q].1 == row).collect();
        for s in sign_vectors(mine.len()) {
            let mut g = vec![0.0; n];
            g[row] = 1.0;
            for (k, &q) in mine.iter().enumerate() {
                g[p + q] = -c * s[k] / r2;
            }
            cons.push(HalfSpace { g, h: 0.0 });
        }
    }
    let x = polyhedron_projection(&target, &cons);
    SymmetricMatrix::from_upper(p, |i, j| {
        if i == j {
            x[i]
        } else {
            let q = pairs.iter().position(|&pr| pr == (i, j)).unwrap();
            x[p + q] / r2
        }
    })
}

/// Smallest `‖M − Q C Qᵀ‖_F` over `starts` random orthonormal `p × k` frames
/// `Q`, each with its optimal core `C = QᵀMQ`.
pub fn rank_k_sampling_oracle(m: &SymmetricMatrix, k: usize, starts: usize, rng: &mut RngStream) -> f64 {
    let p = m.dim();
    let total = m.frob_norm().powi(2);
    let mut best = f64::INFINITY;
    for _ in 0..starts {
        let q = random_frame(p, k, rng);
        let mut captured = 0.0;
        for a in 0..k {
            for b in 0..k {
                let mut v = 0.0;
                for i in 0..p {
                    for j in 0..p {
                        v += q[a][i] * m[(i, j)] * q[b][j];
                    }
                }
                captured += v * v;
            }
        }
        best = best.min((total - captured).max(0.0).sqrt());
    }
    best
}

fn random_frame(p: usize, k: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v = vec![0.0; p];
        rng.fill_normal(&mut v, 1.0);
        for c in &cols {
            let d = dotv(c, &v);
            for (x, y) in v.iter_mut().zip(c) {
                *x -= d * y;
            }
        }
        let n = dotv(&v, &v).sqrt();
        if n > 1e-8 {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    cols
}

/// Dense inverse by Gauss-Jordan elimination.
pub fn dense_inverse(a: &Matrix) -> Matrix {
    let p = a.rows();
    let mut out = Matrix::zeros(p, p);
    for col in 0..p {
        let mut e = vec![0.0; p];
        e[col] = 1.0;
        let x = gauss_solve(a.as_slice().to_vec(), e, p).expect("nonsingular");
        for (i, v) in x.into_iter().enumerate() {
            out[(i, col)] = v;
        }
    }
    out
}

pub fn random_matrix(p: usize, q: usize, sd: f64, rng: &mut RngStream) -> Matrix {
    let mut v = vec![0.0; p * q];
    rng.fill_normal(&mut v, sd);
    Matrix::from_vec(p, q, v).unwrap()
}

pub fn random_symmetric(p: usize, sd: f64, rng: &mut RngStream) -> SymmetricMatrix {
    random_matrix(p, p, sd, rng).sym_part()
}
