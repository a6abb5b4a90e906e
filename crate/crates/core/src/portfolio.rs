//! Minimum-risk portfolios and a monthly rolling backtest.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::covariance::{ddpca_from_cov, poet_from_cov, sample_cov, CovEstimate};
use crate::decompose::{loadings, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, Lu};
use crate::matrix::{dot, Matrix, SymmetricMatrix};

/// Calendar day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl Date {
    pub fn new(year: i32, month: u8, day: u8) -> Result<Date> {
        if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
            return Err(Error::Input(format!("invalid date {year:04}-{month:02}-{day:02}")));
        }
        Ok(Date { year, month, day })
    }

    fn month_key(self) -> (i32, u8) {
        (self.year, self.month)
    }
}

impl core::fmt::Display for Date {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub dates: Vec<Date>,
    /// `T × p`, one row per day.
    pub returns: Matrix,
}

impl ReturnSeries {
    pub fn new(dates: Vec<Date>, returns: Matrix) -> Result<ReturnSeries> {
        if dates.len() != returns.rows() {
            return Err(Error::Dimension {
                expected: format!("{} dates", returns.rows()),
                found: format!("{}", dates.len()),
            });
        }
        if returns.cols() < 2 {
            return Err(Error::Input("need at least 2 assets".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input("dates must be strictly increasing".into()));
        }
        returns.ensure_finite()?;
        Ok(ReturnSeries { dates, returns })
    }
}

fn normalize(mut w: Vec<f64>) -> Result<Vec<f64>> {
    let total: f64 = w.iter().sum();
    if !total.is_finite() || total.abs() <= 1e-300 {
        return Err(Error::Numerical(format!("weights do not normalize: 1ᵀΣ⁻¹1 = {total:.3e}")));
    }
    for x in &mut w {
        *x /= total;
    }
    Ok(w)
}

/// `(1ᵀΣ̂⁻¹1)⁻¹ Σ̂⁻¹1` by solving `Σ̂w = 1`.
pub fn min_risk_weights(sigma: &SymmetricMatrix) -> Result<Vec<f64>> {
    let ones = alloc::vec![1.0; sigma.dim()];
    let w = Lu::new(sigma)?.solve(&ones);
    normalize(w)
}

/// Solves `(A + BBᵀ) x = r` by the Woodbury identity with a Cholesky factor
/// of `A`.
pub fn solve_factor_system(a: &SymmetricMatrix, b: &Matrix, r: &[f64]) -> Result<Vec<f64>> {
    let c = cholesky(a)?;
    let solve_a = |v: &[f64]| chol_solve(&c, v);
    let ar = solve_a(r);
    let k = b.cols();
    if k == 0 {
        return Ok(ar);
    }
    let ab: Vec<Vec<f64>> = (0..k).map(|j| solve_a(&b.column(j))).collect();
    let cap = Matrix::from_fn(k, k, |i, j| {
        let bi = b.column(i);
        dot(&bi, &ab[j]) + if i == j { 1.0 } else { 0.0 }
    });
    let rhs: Vec<f64> = (0..k).map(|j| dot(&b.column(j), &ar)).collect();
    let y = Lu::new(&cap)?.solve(&rhs);
    let mut x = ar;
    for (j, yj) in y.iter().enumerate() {
        for (xi, v) in x.iter_mut().zip(&ab[j]) {
            *xi -= yj * v;
        }
    }
    Ok(x)
}

fn chol_solve(c: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = b.to_vec();
    for i in 0..n {
        let s = dot(&c.row(i)[..i], &y[..i]);
        y[i] = (y[i] - s) / c[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = 0.0;
        for j in i + 1..n {
            s += c[(j, i)] * y[j];
        }
        y[i] = (y[i] - s) / c[(i, i)];
    }
    y
}

/// Weights from a covariance estimate, using its factor structure when present.
pub fn weights_from_estimate(est: &CovEstimate) -> Result<Vec<f64>> {
    match (&est.factors, &est.residual) {
        (Some(f), Some(a)) => {
            let (b, _) = loadings(f);
            let ones = alloc::vec![1.0; a.dim()];
            match solve_factor_system(a, &b, &ones) {
                Ok(w) => normalize(w),
                Err(_) => min_risk_weights(&est.sigma),
            }
        }
        _ => min_risk_weights(&est.sigma),
    }
}

/// `(1/T) Σ_t (y_tᵀ w)²`.
pub fn realized_risk(returns: &Matrix, w: &[f64]) -> Result<f64> {
    if returns.cols() != w.len() {
        return Err(Error::Dimension {
            expected: format!("{} weights", returns.cols()),
            found: format!("{}", w.len()),
        });
    }
    let t = returns.rows();
    if t == 0 {
        return Err(Error::Argument("no return days".into()));
    }
    let total: f64 = (0..t).map(|i| {
        let r = dot(returns.row(i), w);
        r * r
    }).sum();
    Ok(total / t as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PortfolioEstimator {
    Ddpca,
    Poet { threshold: f64 },
    Sample,
    Diagonal,
}

impl PortfolioEstimator {
    pub fn label(&self) -> String {
        match self {
            PortfolioEstimator::Ddpca => "ddpca".into(),
            PortfolioEstimator::Poet { threshold } => format!("poet({threshold})"),
            PortfolioEstimator::Sample => "sample".into(),
            PortfolioEstimator::Diagonal => "diag".into(),
        }
    }

    pub fn estimate(&self, s: &SymmetricMatrix, k: usize, config: &SolverConfig) -> Result<CovEstimate> {
        match self {
            PortfolioEstimator::Ddpca => ddpca_from_cov(s, k, config),
            PortfolioEstimator::Poet { threshold } => poet_from_cov(s, k, *threshold),
            PortfolioEstimator::Sample => Ok(CovEstimate::sample(s.clone())),
            PortfolioEstimator::Diagonal => Ok(CovEstimate::diagonal(s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestMonth {
    /// First trading day of the month.
    pub start: Date,
    pub days: usize,
    /// One realized risk per estimator.
    pub risks: Vec<f64>,
    /// `(R_other − R_ref)/R_ref` for every estimator after the first.
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub labels: Vec<String>,
    pub months: Vec<BacktestMonth>,
}

/// Index ranges of calendar months, in order.
pub fn month_blocks(dates: &[Date]) -> Vec<(usize, usize)> {
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..=dates.len() {
        if i == dates.len() || dates[i].month_key() != dates[start].month_key() {
            blocks.push((start, i));
            start = i;
        }
    }
    blocks
}

/// On the first trading day of every month with `window` days of history,
/// fits each estimator on the trailing window and scores its weights on the
/// month's returns. The first estimator is the reference for the ratios.
pub fn rolling_backtest(
    series: &ReturnSeries,
    window: usize,
    k: usize,
    estimators: &[PortfolioEstimator],
    config: &SolverConfig,
) -> Result<BacktestReport> {
    if estimators.is_empty() {
        return Err(Error::Argument("no estimators given".into()));
    }
    if window < 2 {
        return Err(Error::Argument(format!("window must be at least 2, got {window}")));
    }
    let p = series.returns.cols();
    let mut months = Vec::new();
    for (start, end) in month_blocks(&series.dates) {
        if start < window {
            continue;
        }
        let past = Matrix::from_fn(window, p, |i, j| series.returns[(start - window + i, j)]);
        let future = Matrix::from_fn(end - start, p, |i, j| series.returns[(start + i, j)]);
        let s = sample_cov(&past)?;
        let mut risks = Vec::with_capacity(estimators.len());
        for est in estimators {
            let w = weights_from_estimate(&est.estimate(&s, k, config)?)?;
            risks.push(realized_risk(&future, &w)?);
        }
        let base = risks[0];
        let ratios = risks[1..].iter().map(|r| if base > 0.0 { (r - base) / base } else { 0.0 }).collect();
        months.push(BacktestMonth { start: series.dates[start], days: end - start, risks, ratios });
    }
    if months.is_empty() {
        return Err(Error::Argument(format!(
            "no month has {window} days of history in a series of {} days",
            series.dates.len()
        )));
    }
    Ok(BacktestReport { labels: estimators.iter().map(|e| e.label()).collect(), months })
}
