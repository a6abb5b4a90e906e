//! Seeded generators for the simulation studies and Monte Carlo aggregation.
//!
//! Randomness comes from a ChaCha8 stream keyed by a 64-bit master seed and
//! selected by a 64-bit stream index. Uniforms use the top 53 bits of each
//! output word, `u = (k + ½)·2⁻⁵³`, and normals are produced by inverting the
//! normal CDF, so every draw is a fixed function of `(seed, index, position)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::covariance::sample_cov;
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::math::{normal_quantile, powi, sqrt};
use crate::matrix::{Matrix, SymmetricMatrix};

pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&master_seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream_index);
        RngStream { master_seed, stream_index, rng }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        let k = self.next_u64() >> 11;
        (k as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    pub fn normal(&mut self) -> f64 {
        normal_quantile(self.uniform())
    }

    pub fn fill_normal(&mut self, out: &mut [f64], sd: f64) {
        for x in out {
            *x = sd * self.normal();
        }
    }

    /// Uniform integer in `0..n` by rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let k = self.next_u64();
            if k < zone {
                return k % n;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorSpec {
    ExactDecomp { p: usize, k: usize },
    NoisyDecomp { p: usize, k: usize, sigma: f64 },
    FactorCov { p: usize, n: usize, k: usize },
    TestingModel { p: usize, n: usize, s: usize, tau: f64 },
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Argument(msg));
        match *self {
            GeneratorSpec::ExactDecomp { p, k } | GeneratorSpec::NoisyDecomp { p, k, .. } => {
                if p == 0 || k == 0 || k > p {
                    return bad(format!("need 1 <= K <= p, got p = {p}, K = {k}"));
                }
            }
            GeneratorSpec::FactorCov { p, n, k } => {
                if p == 0 || k == 0 || k > p || n < 2 {
                    return bad(format!("need 1 <= K <= p and n >= 2, got p = {p}, n = {n}, K = {k}"));
                }
            }
            GeneratorSpec::TestingModel { p, n, s, tau } => {
                if p < 2 || n < 2 || s > p || !tau.is_finite() {
                    return bad(format!("need p >= 2, n >= 2, s <= p, got p = {p}, n = {n}, s = {s}"));
                }
            }
        }
        if let GeneratorSpec::NoisyDecomp { sigma, .. } = *self {
            if !(sigma >= 0.0) || !sigma.is_finite() {
                return bad(format!("sigma must be nonnegative, got {sigma}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompSample {
    pub l: SymmetricMatrix,
    pub a: SymmetricMatrix,
    /// Zero for the exact generator.
    pub e: SymmetricMatrix,
    pub s: SymmetricMatrix,
}

fn decomp_parts(p: usize, k: usize, stream: &mut RngStream) -> (SymmetricMatrix, SymmetricMatrix) {
    let mut x = Matrix::zeros(p, k);
    stream.fill_normal(x.as_mut_slice(), 1.0 / sqrt(p as f64));
    let mut a0 = Matrix::zeros(p, p);
    stream.fill_normal(a0.as_mut_slice(), 1.0 / p as f64);
    let l = x.gram_rows();
    let mut a = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if i != j {
                a[(i, j)] = a0[(i, j)] + a0[(j, i)];
            }
        }
    }
    for j in 0..p {
        let off: f64 = (0..p).filter(|&i| i != j).map(|i| a[(j, i)].abs()).sum();
        a[(j, j)] = off;
    }
    (l, SymmetricMatrix::from_matrix(a, 0.0).expect("constructed symmetric"))
}

/// `L = XXᵀ` with `X` of size `p × K`, entries `N(0, 1/p)`;
/// `A = A₀ + A₀ᵀ + D` with `A₀` entries `N(0, 1/p²)` and `D` chosen so each
/// diagonal entry of `A` equals its off-diagonal absolute row sum.
pub fn gen_exact_decomp(p: usize, k: usize, stream: &mut RngStream) -> Result<DecompSample> {
    GeneratorSpec::ExactDecomp { p, k }.validate()?;
    let (l, a) = decomp_parts(p, k, stream);
    let s = l.add(&a);
    Ok(DecompSample { l, a, e: SymmetricMatrix::zeros(p), s })
}

/// [`gen_exact_decomp`] plus a symmetric `E` whose upper triangle, diagonal
/// included, has entries `N(0, σ²/p)`.
pub fn gen_noisy_decomp(
    p: usize,
    k: usize,
    sigma: f64,
    stream: &mut RngStream,
) -> Result<DecompSample> {
    GeneratorSpec::NoisyDecomp { p, k, sigma }.validate()?;
    let (l, a) = decomp_parts(p, k, stream);
    let sd = sigma / sqrt(p as f64);
    let e = SymmetricMatrix::from_upper(p, |_, _| sd * stream.normal());
    let s = l.add(&a).add(&e);
    Ok(DecompSample { l, a, e, s })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorSample {
    pub sigma: SymmetricMatrix,
    pub a: SymmetricMatrix,
    /// Loadings, `p × K`.
    pub b: Matrix,
    /// Observations, `n × p`.
    pub x: Matrix,
}

/// Residual covariance with unit diagonal and `0.5^{|i−j|+1}` off the diagonal.
pub fn factor_residual_cov(p: usize) -> SymmetricMatrix {
    SymmetricMatrix::from_upper(p, |i, j| if i == j { 1.0 } else { powi(0.5, (j - i + 1) as i32) })
}

/// `X_i = B W_i + Z_i` with `B`, `W_i` standard normal and `Z_i ~ N_p(0, A)`.
///
/// Draw order: `B` row-major, then per observation `W_i` followed by the `p`
/// normals that `A`'s Cholesky factor maps to `Z_i`.
pub fn gen_factor_cov(p: usize, n: usize, k: usize, stream: &mut RngStream) -> Result<FactorSample> {
    GeneratorSpec::FactorCov { p, n, k }.validate()?;
    let a = factor_residual_cov(p);
    let chol = cholesky(&a)?;
    let mut b = Matrix::zeros(p, k);
    stream.fill_normal(b.as_mut_slice(), 1.0);
    let mut x = Matrix::zeros(n, p);
    let mut w = alloc::vec![0.0; k];
    let mut z = alloc::vec![0.0; p];
    for i in 0..n {
        stream.fill_normal(&mut w, 1.0);
        stream.fill_normal(&mut z, 1.0);
        let noise = chol.mul_vec(&z);
        let factor = b.mul_vec(&w);
        for (j, out) in x.row_mut(i).iter_mut().enumerate() {
            *out = factor[j] + noise[j];
        }
    }
    let sigma = b.gram_rows().add(&a);
    Ok(FactorSample { sigma, a, b, x })
}

/// Covariance `Σ = FFᵀ + A` of the testing study, `F` of size `p × 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestingModel {
    pub p: usize,
    pub n: usize,
    pub s: usize,
    pub tau: f64,
    pub f: Matrix,
    pub a: SymmetricMatrix,
    pub sigma: SymmetricMatrix,
    chol_a: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestingDraw {
    /// `X = n^{-1/2} Σ X_i`.
    pub z: Vec<f64>,
    /// Sample covariance of the `X_i`.
    pub sigma_hat: SymmetricMatrix,
}

/// Draws `F` (entries `N(0, ½)`) once; [`TestingModel::draw`] then resamples
/// data. `A_{ij} = 0.5^{|i−j|}` and the mean is `τ` on the first `s`
/// coordinates under the alternative.
pub fn gen_testing_model(
    p: usize,
    n: usize,
    s: usize,
    tau: f64,
    stream: &mut RngStream,
) -> Result<TestingModel> {
    GeneratorSpec::TestingModel { p, n, s, tau }.validate()?;
    let mut f = Matrix::zeros(p, 2);
    stream.fill_normal(f.as_mut_slice(), sqrt(0.5));
    let a = SymmetricMatrix::from_upper(p, |i, j| powi(0.5, (j - i) as i32));
    let chol_a = cholesky(&a)?;
    let sigma = f.gram_rows().add(&a);
    Ok(TestingModel { p, n, s, tau, f, a, sigma, chol_a })
}

impl TestingModel {
    /// Same `Σ`, different signal.
    pub fn with_signal(&self, s: usize, tau: f64) -> Result<TestingModel> {
        GeneratorSpec::TestingModel { p: self.p, n: self.n, s, tau }.validate()?;
        Ok(TestingModel { s, tau, ..self.clone() })
    }

    /// One data set of `n` observations. Per observation the two factor
    /// scores are drawn first, then `p` normals for the residual.
    pub fn draw(&self, alternative: bool, stream: &mut RngStream) -> Result<TestingDraw> {
        let (p, n) = (self.p, self.n);
        let mut x = Matrix::zeros(n, p);
        let mut w = [0.0; 2];
        let mut e = alloc::vec![0.0; p];
        for i in 0..n {
            stream.fill_normal(&mut w, 1.0);
            stream.fill_normal(&mut e, 1.0);
            let noise = self.chol_a.mul_vec(&e);
            let factor = self.f.mul_vec(&w);
            for (j, out) in x.row_mut(i).iter_mut().enumerate() {
                let mu = if alternative && j < self.s { self.tau } else { 0.0 };
                *out = mu + factor[j] + noise[j];
            }
        }
        let scale = 1.0 / sqrt(n as f64);
        let mut z = alloc::vec![0.0; p];
        for i in 0..n {
            for (zj, xj) in z.iter_mut().zip(x.row(i)) {
                *zj += xj;
            }
        }
        for zj in &mut z {
            *zj *= scale;
        }
        Ok(TestingDraw { z, sigma_hat: sample_cov(&x)? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub metric_names: Vec<String>,
    /// One row per repetition; `None` when the pipeline failed.
    pub rows: Vec<Option<Vec<f64>>>,
    pub failures: Vec<(usize, String)>,
    pub summaries: Vec<MetricSummary>,
}

/// Runs `pipeline` on streams `(master_seed, 0..reps)` and aggregates each
/// metric over the successful repetitions in repetition order.
pub fn run_monte_carlo<F>(
    master_seed: u64,
    reps: usize,
    metric_names: &[&str],
    mut pipeline: F,
) -> Result<ExperimentReport>
where
    F: FnMut(usize, &mut RngStream) -> Result<Vec<f64>>,
{
    if reps == 0 {
        return Err(Error::Argument("reps must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(reps);
    let mut failures = Vec::new();
    for rep in 0..reps {
        let mut stream = RngStream::new(master_seed, rep as u64);
        match pipeline(rep, &mut stream) {
            Ok(v) if v.len() == metric_names.len() => rows.push(Some(v)),
            Ok(v) => {
                failures.push((rep, format!("expected {} metrics, got {}", metric_names.len(), v.len())));
                rows.push(None);
            }
            Err(e) => {
                log::warn!("repetition {rep} failed: {e}");
                failures.push((rep, format!("{e}")));
                rows.push(None);
            }
        }
    }
    let summaries = summarize(metric_names, &rows);
    Ok(ExperimentReport {
        metric_names: metric_names.iter().map(|s| String::from(*s)).collect(),
        rows,
        failures,
        summaries,
    })
}

/// Mean and standard error per column over the `Some` rows.
pub fn summarize(metric_names: &[&str], rows: &[Option<Vec<f64>>]) -> Vec<MetricSummary> {
    metric_names
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let vals: Vec<f64> = rows.iter().flatten().map(|r| r[m]).collect();
            let count = vals.len();
            let mean = if count > 0 { vals.iter().sum::<f64>() / count as f64 } else { f64::NAN };
            let std_err = if count > 1 {
                let ss: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum();
                sqrt(ss / (count - 1) as f64) / sqrt(count as f64)
            } else {
                0.0
            };
            MetricSummary { name: String::from(*name), mean, std_err, count }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::dd_margin;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngStream::new(7, 0);
        let mut b = RngStream::new(7, 0);
        let mut c = RngStream::new(7, 1);
        let xa: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..4).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn exact_decomp_is_dominant_and_rank_k() {
        let mut st = RngStream::new(1, 0);
        let d = gen_exact_decomp(30, 3, &mut st).unwrap();
        assert!(dd_margin(&d.a).abs() < 1e-12);
        let ev = crate::linalg::eigvals_sym(&d.l).unwrap();
        assert_eq!(crate::linalg::numerical_rank(&ev, 1e-10), 3);
        assert_eq!(d.s, d.l.add(&d.a));
    }

    #[test]
    fn zero_noise_matches_exact_generator() {
        let d0 = gen_exact_decomp(12, 2, &mut RngStream::new(3, 5)).unwrap();
        let d1 = gen_noisy_decomp(12, 2, 0.0, &mut RngStream::new(3, 5)).unwrap();
        assert_eq!(d0.s, d1.s);
    }

    #[test]
    fn factor_residual_entries() {
        let a = factor_residual_cov(4);
        assert_eq!(a[(0, 0)], 1.0);
        assert_eq!(a[(0, 1)], 0.25);
        assert_eq!(a[(0, 2)], 0.125);
    }

    #[test]
    fn monte_carlo_prefix_is_stable() {
        let run = |reps| {
            run_monte_carlo(9, reps, &["u"], |_, st| Ok(alloc::vec![st.uniform()])).unwrap()
        };
        let short = run(3);
        let long = run(6);
        assert_eq!(short.rows[..], long.rows[..3]);
        assert_eq!(short.summaries[0].count, 3);
    }
}
