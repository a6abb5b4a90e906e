//! Global tests of `H₀: μ = 0` from a z-score vector `X ~ N_p(μ, Σ)`.

use alloc::format;
use alloc::vec::Vec;

use crate::covariance::{ddpca_from_cov, precision_from_estimate};
use crate::decompose::{iterative_projection, SolverConfig};
use crate::error::{Error, Result, Warning};
use crate::linalg::pinv_sym;
use crate::lp::l1_regress;
use crate::math::{sqrt, two_sided_pvalue};
use crate::matrix::SymmetricMatrix;

/// Iterations of the alternating projection used by [`dd_hc_test`].
pub const DD_HC_ITERATIONS: usize = 20;

/// Relative eigenvalue cutoff of the generalized inverse used by IHC.
pub const PINV_TOL: f64 = 1e-10;

const P_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMethod {
    Ohc,
    Ihc,
    IhcDd,
    DdHc,
    Chi2,
    Max,
}

impl TestMethod {
    pub const ALL: [TestMethod; 6] =
        [TestMethod::Chi2, TestMethod::Max, TestMethod::Ohc, TestMethod::Ihc, TestMethod::IhcDd, TestMethod::DdHc];

    pub fn name(self) -> &'static str {
        match self {
            TestMethod::Ohc => "ohc",
            TestMethod::Ihc => "ihc",
            TestMethod::IhcDd => "ihc-dd",
            TestMethod::DdHc => "dd-hc",
            TestMethod::Chi2 => "chi2",
            TestMethod::Max => "max",
        }
    }

    pub fn parse(s: &str) -> Option<TestMethod> {
        TestMethod::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn needs_rank(self) -> bool {
        matches!(self, TestMethod::IhcDd | TestMethod::DdHc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    /// Marginal p-values behind the statistic, clipped to `[1e-12, 1 − 1e-12]`.
    pub adjusted_pvalues: Vec<f64>,
    pub method: TestMethod,
    pub warnings: Vec<Warning>,
}

fn clip(p: f64) -> f64 {
    p.clamp(P_CLIP, 1.0 - P_CLIP)
}

/// `max_{1 ≤ j ≤ p/2} √p (j/p − π_(j)) / √(π_(j)(1 − π_(j)))` over the
/// ascending order statistics.
pub fn hc_statistic(pvalues: &[f64]) -> Result<f64> {
    let p = pvalues.len();
    if p < 2 {
        return Err(Error::Argument(format!("need at least 2 p-values, got {p}")));
    }
    if pvalues.iter().any(|v| v.is_nan()) {
        return Err(Error::Input("p-values contain NaN".into()));
    }
    let mut sorted: Vec<f64> = pvalues.iter().map(|&v| clip(v)).collect();
    sorted.sort_by(f64::total_cmp);
    let pf = p as f64;
    let root = sqrt(pf);
    let mut best = f64::NEG_INFINITY;
    for (idx, &pi) in sorted.iter().take(p / 2).enumerate() {
        let j = (idx + 1) as f64;
        let hc = root * (j / pf - pi) / sqrt(pi * (1.0 - pi));
        best = best.max(hc);
    }
    Ok(best)
}

/// Two-sided `2(1 − Φ(|X_j|/√v_j))`.
pub fn marginal_pvalues(x: &[f64], variances: &[f64]) -> Result<Vec<f64>> {
    if x.len() != variances.len() {
        return Err(Error::Dimension {
            expected: format!("{} variances", x.len()),
            found: format!("{}", variances.len()),
        });
    }
    x.iter()
        .zip(variances)
        .enumerate()
        .map(|(j, (&xj, &v))| {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Argument(format!("variance {j} is not positive: {v}")));
            }
            if !xj.is_finite() {
                return Err(Error::Input(format!("z-score {j} is not finite")));
            }
            Ok(two_sided_pvalue(xj / sqrt(v)))
        })
        .collect()
}

fn hc_result(x: &[f64], variances: &[f64], method: TestMethod, warnings: Vec<Warning>) -> Result<TestResult> {
    let pv = marginal_pvalues(x, variances)?;
    let statistic = hc_statistic(&pv)?;
    Ok(TestResult { statistic, adjusted_pvalues: pv.into_iter().map(clip).collect(), method, warnings })
}

fn check_dims(x: &[f64], sigma_hat: &SymmetricMatrix) -> Result<()> {
    if x.len() != sigma_hat.dim() {
        return Err(Error::Dimension {
            expected: format!("{} z-scores", sigma_hat.dim()),
            found: format!("{}", x.len()),
        });
    }
    Ok(())
}

/// Plain HC with variances `diag(Σ̂)`.
pub fn ohc_test(x: &[f64], sigma_hat: &SymmetricMatrix) -> Result<TestResult> {
    check_dims(x, sigma_hat)?;
    hc_result(x, &sigma_hat.diag(), TestMethod::Ohc, Vec::new())
}

/// HC on `Ω̂X` with `Ω̂` the generalized inverse of `Σ̂`.
pub fn ihc_test(x: &[f64], sigma_hat: &SymmetricMatrix) -> Result<TestResult> {
    check_dims(x, sigma_hat)?;
    let omega = pinv_sym(sigma_hat, PINV_TOL)?;
    hc_result(&omega.mul_vec(x), &omega.diag(), TestMethod::Ihc, Vec::new())
}

/// HC on `Ω̂X` with `Ω̂` the inverse of the one-step DD-PCA covariance estimate.
pub fn ihc_dd_test(x: &[f64], sigma_hat: &SymmetricMatrix, k: usize, config: &SolverConfig) -> Result<TestResult> {
    check_dims(x, sigma_hat)?;
    let est = ddpca_from_cov(sigma_hat, k, config)?;
    let (omega, mut warnings) = precision_from_estimate(&est)?;
    warnings.extend(est.warnings);
    hc_result(&omega.mul_vec(x), &omega.diag(), TestMethod::IhcDd, warnings)
}

/// Removes the leading factors of `Σ̂` from `X` by least absolute deviations
/// and runs HC on the residual with variances `diag(Σ̂ − L̂)`.
///
/// `k = 0` reduces to [`ohc_test`].
pub fn dd_hc_test(x: &[f64], sigma_hat: &SymmetricMatrix, k: usize, config: &SolverConfig) -> Result<TestResult> {
    check_dims(x, sigma_hat)?;
    if k == 0 {
        let mut r = ohc_test(x, sigma_hat)?;
        r.method = TestMethod::DdHc;
        return Ok(r);
    }
    let cfg = SolverConfig {
        rank: Some(k),
        max_iter: Some(config.max_iter.unwrap_or(DD_HC_ITERATIONS)),
        ..config.clone()
    };
    let d = iterative_projection(sigma_hat, &cfg)?;
    let mut warnings = d.warnings.clone();
    let p = x.len();
    let etas = d.factors.columns();
    let residual = if etas.cols() == 0 {
        x.to_vec()
    } else {
        let w = l1_regress(x, &etas)?;
        let fit = etas.mul_vec(&w);
        x.iter().zip(&fit).map(|(a, b)| a - b).collect()
    };
    let sd = sigma_hat.diag();
    let ld = d.l.diag();
    let mut variances = Vec::with_capacity(p);
    for j in 0..p {
        if ld[j] < 0.0 {
            log::debug!("low-rank part has negative diagonal {:.3e} at {j}", ld[j]);
            warnings.push(Warning::NegativeLowRankDiagonal { index: j, value: ld[j] });
        }
        let r = sd[j] - ld[j];
        if !(r > 0.0) {
            return Err(Error::Numerical(format!("residual variance at index {j} is not positive: {r:.3e}")));
        }
        variances.push(r);
    }
    hc_result(&residual, &variances, TestMethod::DdHc, warnings)
}

/// `‖X‖²`.
pub fn chi2_statistic(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `max_j |X_j|`.
pub fn max_statistic(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Runs `method`; `k` and `config` are used only by the DD-PCA based tests.
pub fn run_test(
    method: TestMethod,
    x: &[f64],
    sigma_hat: &SymmetricMatrix,
    k: usize,
    config: &SolverConfig,
) -> Result<TestResult> {
    check_dims(x, sigma_hat)?;
    let simple = |statistic: f64| -> Result<TestResult> {
        Ok(TestResult {
            statistic,
            adjusted_pvalues: marginal_pvalues(x, &sigma_hat.diag())?.into_iter().map(clip).collect(),
            method,
            warnings: Vec::new(),
        })
    };
    match method {
        TestMethod::Chi2 => simple(chi2_statistic(x)),
        TestMethod::Max => simple(max_statistic(x)),
        TestMethod::Ohc => ohc_test(x, sigma_hat),
        TestMethod::Ihc => ihc_test(x, sigma_hat),
        TestMethod::IhcDd => ihc_dd_test(x, sigma_hat, k, config),
        TestMethod::DdHc => dd_hc_test(x, sigma_hat, k, config),
    }
}

/// χ², max, OHC and IHC statistics, in that order.
pub fn reference_tests(x: &[f64], sigma_hat: &SymmetricMatrix) -> Result<[f64; 4]> {
    check_dims(x, sigma_hat)?;
    Ok([chi2_statistic(x), max_statistic(x), ohc_test(x, sigma_hat)?.statistic, ihc_test(x, sigma_hat)?.statistic])
}

/// `min_t P̂_null(T > t) + P̂_alt(T ≤ t)`, evaluated exactly at every pooled
/// statistic value and at `t = −∞`.
pub fn ideal_testing_error(null: &[f64], alt: &[f64]) -> Result<f64> {
    if null.is_empty() || alt.is_empty() {
        return Err(Error::Argument("both arms need at least one draw".into()));
    }
    if null.iter().chain(alt).any(|v| v.is_nan()) {
        return Err(Error::Input("statistics contain NaN".into()));
    }
    let mut pooled: Vec<(f64, bool)> =
        null.iter().map(|&v| (v, false)).chain(alt.iter().map(|&v| (v, true))).collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (n0, n1) = (null.len() as f64, alt.len() as f64);
    let (mut null_le, mut alt_le) = (0usize, 0usize);
    let mut best = 1.0f64;
    let mut i = 0;
    while i < pooled.len() {
        let t = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == t {
            if pooled[i].1 {
                alt_le += 1;
            } else {
                null_le += 1;
            }
            i += 1;
        }
        let err = (n0 - null_le as f64) / n0 + alt_le as f64 / n1;
        best = best.min(err);
    }
    Ok(best)
}

/// Simulation-calibrated p-value `(1 + #{null ≥ observed}) / (reps + 1)`.
pub fn calibrated_pvalue(observed: f64, null_stats: &[f64]) -> f64 {
    let exceed = null_stats.iter().filter(|&&v| v >= observed).count();
    (1 + exceed) as f64 / (null_stats.len() + 1) as f64
}
