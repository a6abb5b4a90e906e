//! Subcommand definitions and their executors.
//!
//! Every argument struct is also serializable: the manifest stores the parsed
//! command verbatim and `replay` deserializes and re-executes it.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddpca_core::covariance::{
    ddpca_from_cov, factor_precision, poet_from_cov, precision_from_estimate, sample_cov, CovEstimate, CovMethod,
};
use ddpca_core::decompose::{loadings, Method};
use ddpca_core::lda::{error_curve, top_features, OmegaMethod, ScoreScale};
use ddpca_core::linalg::{eig_sym, eigvals_sym, inverse_sym};
use ddpca_core::portfolio::{rolling_backtest, PortfolioEstimator};
use ddpca_core::projection::dd_margin;
use ddpca_core::simgen::RngStream;
use ddpca_core::testing::{calibrated_pvalue, run_test, TestMethod};
use ddpca_core::{Decomposition, SolverConfig, SymmetricMatrix, Warning};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::experiments::{run_experiment, ExperimentArgs};
use crate::io::{
    fmt_f64, read_labeled, read_matrix, read_returns, read_symmetric, read_vector, symmetric_table, Artifact, Table,
};

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "DDPCA_SEED";

#[derive(Debug, Parser)]
#[command(name = "ddpca", version, about = "Low-rank plus diagonally-dominant matrix decomposition")]
pub struct Cli {
    /// `key = value` file whose entries act as flags placed before the
    /// command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Split a symmetric matrix into low-rank and diagonally-dominant parts.
    Decompose(DecomposeArgs),
    /// Covariance estimate from a data matrix.
    EstimateCov(EstimateArgs),
    /// Precision estimate from a data matrix.
    Precision(PrecisionArgs),
    /// Global test for a sparse mean.
    TestGlobal(TestArgs),
    /// Monthly rolling minimum-risk backtest.
    Portfolio(PortfolioArgs),
    /// Cross-validated error curve of innovated-screening LDA.
    Lda(LdaArgs),
    /// Reproduce a simulation study.
    Experiment(ExperimentArgs),
    /// Re-run a command from its manifest and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecomposeMethod {
    Onestep,
    Iterproj,
    Admm,
    AdmmExact,
}

impl DecomposeMethod {
    fn solver(self) -> Method {
        match self {
            DecomposeMethod::Onestep => Method::OneStep,
            DecomposeMethod::Iterproj => Method::IterativeProjection,
            DecomposeMethod::Admm => Method::AdmmRelaxed,
            DecomposeMethod::AdmmExact => Method::AdmmExact,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DecomposeMethod::Onestep => "onestep",
            DecomposeMethod::Iterproj => "iterproj",
            DecomposeMethod::Admm => "admm",
            DecomposeMethod::AdmmExact => "admm-exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(args_override_self = true)]
pub struct DecomposeArgs {
    /// Symmetric matrix, CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = DecomposeMethod::Onestep)]
    pub method: DecomposeMethod,
    /// Rank of the low-rank part; required by onestep and iterproj.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Dominance constant.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Nuclear-norm weight (admm).
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Augmented-Lagrangian penalty (admm, admm-exact).
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Prepended to every output file name; may contain directories.
    #[arg(long, default_value = "")]
    pub out_prefix: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovMethodArg {
    Ddpca,
    Poet,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(args_override_self = true)]
pub struct EstimateArgs {
    /// Observations, one row per sample.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = CovMethodArg::Ddpca)]
    pub method: CovMethodArg,
    /// Number of factors; required by ddpca and poet.
    #[arg(long)]
    pub rank: Option<usize>,
    /// POET correlation threshold in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value = "")]
    pub out_prefix: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Factor formula when the estimate has factors, dense otherwise.
    Auto,
    Factor,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(args_override_self = true)]
pub struct PrecisionArgs {
    #[command(flatten)]
    pub estimate: EstimateArgs,
    #[arg(long, value_enum, default_value_t = Route::Auto)]
    pub route: Route,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethodArg {
    Ohc,
    Ihc,
    IhcDd,
    DdHc,
    Chi2,
    Max,
}

impl From<TestMethodArg> for TestMethod {
    fn from(m: TestMethodArg) -> TestMethod {
        match m {
            TestMethodArg::Ohc => TestMethod::Ohc,
            TestMethodArg::Ihc => TestMethod::Ihc,
            TestMethodArg::IhcDd => TestMethod::IhcDd,
            TestMethodArg::DdHc => TestMethod::DdHc,
            TestMethodArg::Chi2 => TestMethod::Chi2,
            TestMethodArg::Max => TestMethod::Max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(args_override_self = true)]
pub struct TestArgs {
    /// z-score vector, one row or one column.
    #[arg(long, conflicts_with = "data")]
    pub zscores: Option<PathBuf>,
    /// Covariance of the z-scores; identity when omitted.
    #[arg(long, requires = "zscores")]
    pub sigma: Option<PathBuf>,
    /// Observations; z-scores are `n^{-1/2} Σ X_i` and the covariance is their
    /// sample covariance.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TestMethodArg::DdHc)]
    pub method: TestMethodArg,
    /// Number of factors; required by ihc-dd and dd-hc.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Null draws used to calibrate the p-value.
    #[arg(long, default_value_t = 200)]
    pub null_reps: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "")]
    pub out_prefix: String,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(args_override_self = true)]
pub struct PortfolioArgs {
    /// Daily returns with a leading date column.
    #[arg(long)]
    pub returns: PathBuf,
    /// Trading days of history per fit.
    #[arg(long, default_value_t = 252)]
    pub window: usize,
    #[arg(long, default_value_t = 3)]
    pub rank: usize,
    /// Comma-separated estimators: ddpca, poet[:threshold], sample, diag. The
    /// first one is the reference for the ratios.
    #[arg(long, value_delimiter = ',', default_value = "ddpca,poet,sample")]
    pub methods: Vec<String>,
    /// Threshold for a bare `poet`.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Histogram bins for the ratio columns.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value = "")]
    pub out_prefix: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaArg {
    Ddpca,
    Poet,
    Diag,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreScaleArg {
    /// `(X̄₁ − X̄₂)/(n s_j)`.
    SampleSize,
    /// `(X̄₁ − X̄₂)/(s_j √(1/n₁ + 1/n₂))`.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(args_override_self = true)]
pub struct LdaArgs {
    /// Samples with a leading class label (1 or 2).
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ddpca,poet,diag")]
    pub omega: Vec<OmegaArg>,
    #[arg(long, default_value_t = 3)]
    pub rank: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// POET threshold.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Keep only this many features, ranked by two-sample score on all data.
    #[arg(long)]
    pub prefilter: Option<usize>,
    #[arg(long, value_enum, default_value_t = ScoreScaleArg::SampleSize)]
    pub score_scale: ScoreScaleArg,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "")]
    pub out_prefix: String,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(args_override_self = true)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write the regenerated files under this prefix; without it the run is
    /// only verified.
    #[arg(long)]
    pub out_prefix: Option<String>,
}

/// Files and console text produced by one command.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub inputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub report: String,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Decompose(_) => "decompose",
            Command::EstimateCov(_) => "estimate-cov",
            Command::Precision(_) => "precision",
            Command::TestGlobal(_) => "test-global",
            Command::Portfolio(_) => "portfolio",
            Command::Lda(_) => "lda",
            Command::Experiment(_) => "experiment",
            Command::Replay(_) => "replay",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::TestGlobal(a) => Some(a.seed),
            Command::Lda(a) => Some(a.seed),
            Command::Experiment(a) => Some(a.seed),
            _ => None,
        }
    }

    pub fn out_prefix(&self) -> &str {
        match self {
            Command::Decompose(a) => &a.out_prefix,
            Command::EstimateCov(a) => &a.out_prefix,
            Command::Precision(a) => &a.estimate.out_prefix,
            Command::TestGlobal(a) => &a.out_prefix,
            Command::Portfolio(a) => &a.out_prefix,
            Command::Lda(a) => &a.out_prefix,
            Command::Experiment(a) => &a.out_prefix,
            Command::Replay(_) => "",
        }
    }

    pub fn set_out_prefix(&mut self, prefix: String) {
        match self {
            Command::Decompose(a) => a.out_prefix = prefix,
            Command::EstimateCov(a) => a.out_prefix = prefix,
            Command::Precision(a) => a.estimate.out_prefix = prefix,
            Command::TestGlobal(a) => a.out_prefix = prefix,
            Command::Portfolio(a) => a.out_prefix = prefix,
            Command::Lda(a) => a.out_prefix = prefix,
            Command::Experiment(a) => a.out_prefix = prefix,
            Command::Replay(_) => {}
        }
    }

    /// Computes every output in memory. Replay is handled by the driver.
    pub fn execute(&self) -> CliResult<RunOutput> {
        match self {
            Command::Decompose(a) => decompose(a),
            Command::EstimateCov(a) => estimate_cov(a),
            Command::Precision(a) => precision(a),
            Command::TestGlobal(a) => test_global(a),
            Command::Portfolio(a) => portfolio(a),
            Command::Lda(a) => lda(a),
            Command::Experiment(a) => run_experiment(a),
            Command::Replay(_) => Err(CliError::usage("replay cannot be nested")),
        }
    }
}

pub fn describe_warning(w: &Warning) -> String {
    match w {
        Warning::NotPositiveSemidefinite { min_eigenvalue } => {
            format!("input is not positive semidefinite (lambda_min = {min_eigenvalue:.3e})")
        }
        Warning::ProjectionNotConverged { iterations, residual } => {
            format!("cone projection stopped after {iterations} iterations (residual {residual:.3e})")
        }
        Warning::RowFallback { row } => format!("row {row} solved by the active-set fallback"),
        Warning::ConeRepair { margin_before } => {
            format!("final dominant part repaired into the cone (margin was {margin_before:.3e})")
        }
        Warning::NegativeFactorClipped { count } => format!("{count} negative factor eigenvalues clipped"),
        Warning::FeatureDropped { index } => format!("feature {index} has zero variance and was dropped"),
        Warning::NegativeLowRankDiagonal { index, value } => {
            format!("low-rank diagonal {index} is negative ({value:.3e})")
        }
    }
}

fn kv_table(pairs: &[(&str, String)]) -> Table {
    let mut t = Table::new(["key", "value"]);
    for (k, v) in pairs {
        t.push(vec![(*k).to_owned(), v.clone()]);
    }
    t
}

fn report_of(t: &Table) -> String {
    t.rows.iter().map(|r| r.join(" = ")).collect::<Vec<_>>().join("\n")
}

fn require_rank(rank: Option<usize>, what: &str) -> CliResult<usize> {
    rank.ok_or_else(|| CliError::usage(format!("--rank is required for {what}")))
}

fn decompose(args: &DecomposeArgs) -> CliResult<RunOutput> {
    let method = args.method.solver();
    let mut cfg = SolverConfig { c: args.c, lambda: args.lambda, rho: args.rho, tol: args.tol, ..Default::default() };
    cfg.max_iter = args.max_iter;
    if method.needs_rank() {
        cfg.rank = Some(require_rank(args.rank, &format!("--method {}", args.method.name()))?);
    } else {
        cfg.rank = args.rank;
    }
    let (s, sym_warning) = read_symmetric(&args.input)?;
    let d = method.run(&s, &cfg)?;
    let mut warnings: Vec<String> = sym_warning.into_iter().collect();
    warnings.extend(d.warnings.iter().map(describe_warning));
    if !d.converged {
        warnings.push(format!("stopped at the iteration cap ({}) before reaching tol", d.iterations));
    }

    let mut diag = Table::new(["iteration", "residual", "zeta"]);
    for (i, (r, z)) in d.residual_history.iter().zip(&d.margin_history).enumerate() {
        diag.push(vec![(i + 1).to_string(), fmt_f64(*r), fmt_f64(*z)]);
    }
    let summary = decomposition_summary(args.method.name(), &s, &d);
    Ok(RunOutput {
        artifacts: vec![
            symmetric_table(&d.l).artifact("L.csv"),
            symmetric_table(&d.a).artifact("A.csv"),
            diag.artifact("diagnostics.csv"),
            summary.artifact("summary.csv"),
        ],
        inputs: vec![args.input.clone()],
        warnings,
        report: report_of(&summary),
    })
}

fn decomposition_summary(method: &str, s: &SymmetricMatrix, d: &Decomposition) -> Table {
    let res = d.sum().frob_dist(s) / s.frob_norm().max(f64::MIN_POSITIVE);
    kv_table(&[
        ("method", method.to_owned()),
        ("p", s.dim().to_string()),
        ("rank", d.rank_l.to_string()),
        ("iterations", d.iterations.to_string()),
        ("converged", d.converged.to_string()),
        ("residual", fmt_f64(res)),
        ("zeta_A", fmt_f64(dd_margin(&d.a))),
        ("zeta_S_minus_L", fmt_f64(dd_margin(&s.sub(&d.l)))),
    ])
}

fn fit_estimate(args: &EstimateArgs) -> CliResult<(CovEstimate, usize, usize)> {
    let x = read_matrix(&args.data)?;
    let (n, p) = (x.rows(), x.cols());
    let s = sample_cov(&x)?;
    let cfg = SolverConfig::default().with_c(args.c);
    let est = match args.method {
        CovMethodArg::Sample => CovEstimate::sample(s),
        CovMethodArg::Ddpca => ddpca_from_cov(&s, require_rank(args.rank, "--method ddpca")?, &cfg)?,
        CovMethodArg::Poet => poet_from_cov(&s, require_rank(args.rank, "--method poet")?, args.threshold)?,
    };
    Ok((est, n, p))
}

fn method_name(m: CovMethodArg) -> &'static str {
    match m {
        CovMethodArg::Ddpca => "ddpca",
        CovMethodArg::Poet => "poet",
        CovMethodArg::Sample => "sample",
    }
}

fn estimate_cov(args: &EstimateArgs) -> CliResult<RunOutput> {
    let (est, n, p) = fit_estimate(args)?;
    let mut artifacts = vec![symmetric_table(&est.sigma).artifact("sigma.csv")];
    let mut pairs = vec![("method", method_name(args.method).to_owned()), ("n", n.to_string()), ("p", p.to_string())];
    if let (Some(r), Some(_)) = (&est.residual, &est.factors) {
        let l = est.sigma.sub(r);
        artifacts.push(symmetric_table(&l).artifact("L.csv"));
        artifacts.push(symmetric_table(r).artifact("A.csv"));
        pairs.push(("zeta_A", fmt_f64(dd_margin(r))));
    }
    let ev = eigvals_sym(&est.sigma)?;
    pairs.push(("lambda_min", fmt_f64(ev.iter().copied().fold(f64::INFINITY, f64::min))));
    pairs.push(("lambda_max", fmt_f64(ev.iter().copied().fold(f64::NEG_INFINITY, f64::max))));
    let summary = kv_table(&pairs);
    artifacts.push(summary.artifact("summary.csv"));
    Ok(RunOutput {
        artifacts,
        inputs: vec![args.data.clone()],
        warnings: est.warnings.iter().map(describe_warning).collect(),
        report: report_of(&summary),
    })
}

/// Smallest eigenvalue below this fraction of the largest counts as singular.
const SINGULAR_RATIO: f64 = 1e-10;

fn precision(args: &PrecisionArgs) -> CliResult<RunOutput> {
    let (est, _, p) = fit_estimate(&args.estimate)?;
    let ev = eigvals_sym(&est.sigma)?;
    let lmin = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let lmax = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lmin > SINGULAR_RATIO * lmax.abs()) {
        return Err(CliError::Numerical(format!(
            "covariance estimate is near-singular: lambda_min = {lmin:.3e}, lambda_max = {lmax:.3e}"
        )));
    }
    let has_factors = est.factors.is_some() && est.residual.is_some() && est.method != CovMethod::Diagonal;
    let mut warnings: Vec<String> = est.warnings.iter().map(describe_warning).collect();
    let (omega, route, check) = match (args.route, has_factors) {
        (Route::Dense, _) | (Route::Auto, false) => (inverse_sym(&est.sigma)?, "dense", None),
        (Route::Factor, false) => {
            return Err(CliError::usage(format!(
                "--route factor needs a factor estimate, not --method {}",
                method_name(args.estimate.method)
            )))
        }
        (_, true) => {
            let (omega, w) = precision_from_estimate(&est)?;
            warnings.extend(w.iter().map(describe_warning));
            let dense = inverse_sym(&est.sigma)?;
            let diff = omega.frob_dist(&dense) / dense.frob_norm();
            if diff > 1e-6 {
                let msg = format!("factor and dense precision differ by {diff:.3e} (relative Frobenius)");
                log::warn!("{msg}");
                warnings.push(msg);
            }
            (omega, "factor", Some(diff))
        }
    };
    let mut pairs = vec![
        ("method", method_name(args.estimate.method).to_owned()),
        ("p", p.to_string()),
        ("route", route.to_owned()),
        ("lambda_min", fmt_f64(lmin)),
        ("lambda_max", fmt_f64(lmax)),
    ];
    if let Some(d) = check {
        pairs.push(("dense_check", fmt_f64(d)));
    }
    let summary = kv_table(&pairs);
    Ok(RunOutput {
        artifacts: vec![symmetric_table(&omega).artifact("precision.csv"), summary.artifact("summary.csv")],
        inputs: vec![args.estimate.data.clone()],
        warnings,
        report: report_of(&summary),
    })
}

/// Symmetric square root with negative eigenvalues clipped to zero.
fn psd_sqrt(m: &SymmetricMatrix) -> CliResult<SymmetricMatrix> {
    let es = eig_sym(m)?;
    let p = m.dim();
    let mut out = SymmetricMatrix::zeros(p);
    for (r, &v) in es.values.iter().enumerate() {
        if v <= 0.0 {
            continue;
        }
        let s = v.sqrt();
        let u = es.vector(r);
        out = out.add(&SymmetricMatrix::from_upper(p, |i, j| s * u[i] * u[j]));
    }
    Ok(out)
}

fn test_global(args: &TestArgs) -> CliResult<RunOutput> {
    let method: TestMethod = args.method.into();
    let k = if method.needs_rank() { require_rank(args.rank, &format!("--method {}", method.name()))? } else { args.rank.unwrap_or(0) };
    if args.null_reps == 0 {
        return Err(CliError::usage("--null-reps must be at least 1"));
    }
    let mut inputs = Vec::new();
    let mut warnings = Vec::new();
    let (z, sigma_hat) = match (&args.zscores, &args.data) {
        (Some(zp), None) => {
            inputs.push(zp.clone());
            let z = read_vector(zp)?;
            let sigma = match &args.sigma {
                Some(sp) => {
                    inputs.push(sp.clone());
                    let (s, w) = read_symmetric(sp)?;
                    warnings.extend(w);
                    s
                }
                None => SymmetricMatrix::identity(z.len()),
            };
            (z, sigma)
        }
        (None, Some(dp)) => {
            inputs.push(dp.clone());
            let x = read_matrix(dp)?;
            let scale = 1.0 / (x.rows() as f64).sqrt();
            let z = (0..x.cols()).map(|j| scale * (0..x.rows()).map(|i| x[(i, j)]).sum::<f64>()).collect();
            (z, sample_cov(&x)?)
        }
        _ => return Err(CliError::usage("give exactly one of --zscores or --data")),
    };
    let cfg = SolverConfig::default();
    let observed = run_test(method, &z, &sigma_hat, k, &cfg)?;
    warnings.extend(observed.warnings.iter().map(describe_warning));

    let root = psd_sqrt(&sigma_hat)?;
    let p = z.len();
    let mut null_stats = Vec::with_capacity(args.null_reps);
    let mut g = vec![0.0; p];
    for rep in 0..args.null_reps {
        RngStream::new(args.seed, rep as u64).fill_normal(&mut g, 1.0);
        null_stats.push(run_test(method, &root.mul_vec(&g), &sigma_hat, k, &cfg)?.statistic);
    }
    let pvalue = calibrated_pvalue(observed.statistic, &null_stats);
    let mut t = Table::new(["method", "statistic", "pvalue", "null_reps", "rank"]);
    t.push(vec![
        method.name().to_owned(),
        fmt_f64(observed.statistic),
        fmt_f64(pvalue),
        args.null_reps.to_string(),
        k.to_string(),
    ]);
    let mut pv = Table::new(["index", "pvalue"]);
    for (j, v) in observed.adjusted_pvalues.iter().enumerate() {
        pv.push(vec![j.to_string(), fmt_f64(*v)]);
    }
    Ok(RunOutput {
        artifacts: vec![t.artifact("result.csv"), pv.artifact("pvalues.csv")],
        inputs,
        warnings,
        report: format!("{}: statistic = {}, p-value = {}", method.name(), fmt_f64(observed.statistic), fmt_f64(pvalue)),
    })
}

fn parse_estimator(token: &str, default_threshold: f64) -> CliResult<PortfolioEstimator> {
    let (name, arg) = match token.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (token, None),
    };
    match (name, arg) {
        ("ddpca", None) => Ok(PortfolioEstimator::Ddpca),
        ("sample", None) => Ok(PortfolioEstimator::Sample),
        ("diag", None) => Ok(PortfolioEstimator::Diagonal),
        ("poet", None) => Ok(PortfolioEstimator::Poet { threshold: default_threshold }),
        ("poet", Some(a)) => a
            .parse()
            .map(|threshold| PortfolioEstimator::Poet { threshold })
            .map_err(|_| CliError::usage(format!("bad POET threshold in '{token}'"))),
        _ => Err(CliError::usage(format!("unknown portfolio method '{token}'"))),
    }
}

/// Equal-width bins over `[min, max]`; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![(lo, hi, values.len())];
    }
    histogram_on(values, lo, hi, bins)
}

/// Equal-width bins over a fixed `[lo, hi]`; values outside are ignored.
pub fn histogram_on(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64, usize)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts.into_iter().enumerate().map(|(b, c)| (lo + b as f64 * width, lo + (b + 1) as f64 * width, c)).collect()
}

fn portfolio(args: &PortfolioArgs) -> CliResult<RunOutput> {
    let estimators = args.methods.iter().map(|m| parse_estimator(m, args.threshold)).collect::<CliResult<Vec<_>>>()?;
    let series = read_returns(&args.returns)?;
    let cfg = SolverConfig::default().with_c(args.c);
    let report = rolling_backtest(&series, args.window, args.rank, &estimators, &cfg)?;
    let mut header = vec!["month".to_owned(), "days".to_owned()];
    header.extend(report.labels.iter().map(|l| format!("risk_{l}")));
    header.extend(report.labels[1..].iter().map(|l| format!("r_{l}")));
    let mut risk = Table { header, rows: Vec::new() };
    for m in &report.months {
        let mut row = vec![m.start.to_string(), m.days.to_string()];
        row.extend(m.risks.iter().map(|&v| fmt_f64(v)));
        row.extend(m.ratios.iter().map(|&v| fmt_f64(v)));
        risk.push(row);
    }
    let mut hist = Table::new(["method", "bin_lo", "bin_hi", "count"]);
    let mut lines = vec![format!("{} months", report.months.len())];
    for (c, label) in report.labels[1..].iter().enumerate() {
        let r: Vec<f64> = report.months.iter().map(|m| m.ratios[c]).collect();
        for (lo, hi, n) in histogram(&r, args.bins) {
            hist.push(vec![label.clone(), fmt_f64(lo), fmt_f64(hi), n.to_string()]);
        }
        let mut sorted = r.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        lines.push(format!(
            "r_{label}: mean {:.4}, median {:.4}",
            mean,
            sorted[sorted.len() / 2]
        ));
    }
    Ok(RunOutput {
        artifacts: vec![risk.artifact("risk.csv"), hist.artifact("ratio_hist.csv")],
        inputs: vec![args.returns.clone()],
        warnings: Vec::new(),
        report: lines.join("\n"),
    })
}

fn lda(args: &LdaArgs) -> CliResult<RunOutput> {
    let mut data = read_labeled(&args.train)?;
    if let Some(p0) = args.prefilter {
        if p0 == 0 || p0 > data.p() {
            return Err(CliError::usage(format!("--prefilter must lie in [1, {}]", data.p())));
        }
        let keep = top_features(&data, p0);
        data = data.select_features(&keep);
    }
    let methods: Vec<OmegaMethod> = args
        .omega
        .iter()
        .map(|o| match o {
            OmegaArg::Ddpca => OmegaMethod::Ddpca,
            OmegaArg::Poet => OmegaMethod::Poet { threshold: args.threshold },
            OmegaArg::Diag => OmegaMethod::Diagonal,
            OmegaArg::Identity => OmegaMethod::Identity,
        })
        .collect();
    let scale = match args.score_scale {
        ScoreScaleArg::SampleSize => ScoreScale::SampleSize,
        ScoreScaleArg::Pooled => ScoreScale::Pooled,
    };
    let cfg = SolverConfig::default().with_c(args.c);
    let mut stream = RngStream::new(args.seed, 0);
    let curve = error_curve(&data, &methods, args.rank, args.folds, scale, &cfg, &mut stream)?;
    let mut header = vec!["k".to_owned()];
    header.extend(curve.labels.iter().map(|l| format!("errors_{l}")));
    let mut t = Table { header, rows: Vec::new() };
    for k in 0..data.p() {
        let mut row = vec![(k + 1).to_string()];
        row.extend(curve.errors.iter().map(|e| e[k].to_string()));
        t.push(row);
    }
    let lines: Vec<String> = curve
        .labels
        .iter()
        .zip(&curve.errors)
        .map(|(l, e)| {
            let (k, best) = e.iter().enumerate().min_by_key(|&(_, v)| *v).expect("p >= 1");
            format!("{l}: fewest errors {best}/{} at k = {}", curve.n, k + 1)
        })
        .collect();
    Ok(RunOutput {
        artifacts: vec![t.artifact("curve.csv")],
        inputs: vec![args.train.clone()],
        warnings: Vec::new(),
        report: lines.join("\n"),
    })
}

/// `(A + BBᵀ)⁻¹` for a factor estimate, used by callers that want the factor
/// route explicitly.
pub fn factor_route(est: &CovEstimate) -> CliResult<SymmetricMatrix> {
    let (f, r) = match (&est.factors, &est.residual) {
        (Some(f), Some(r)) => (f, r),
        _ => return Err(CliError::usage("estimate has no factor structure")),
    };
    let (b, _) = loadings(f);
    Ok(factor_precision(r, &b)?)
}
