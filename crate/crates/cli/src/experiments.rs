//! Simulation studies behind `ddpca experiment`.
//!
//! Each study is a pure function of its arguments: per-point master seeds are
//! derived from `--seed`, repetition `r` of a point uses stream `(seed, r)`,
//! and every output table is built from fixed-order reductions.

use clap::{Args, ValueEnum};
use ddpca_core::covariance::{ddpca_from_cov, error_report, poet_from_cov, sample_cov, CovEstimate, Truth};
use ddpca_core::decompose::{admm_exact, admm_relaxed, iterative_projection};
use ddpca_core::linalg::{eig_sym_top, inverse_sym, numerical_rank, spectral_norm};
use ddpca_core::projection::dd_margin;
use ddpca_core::simgen::{
    gen_exact_decomp, gen_factor_cov, gen_noisy_decomp, gen_testing_model, run_monte_carlo, RngStream,
};
use ddpca_core::testing::{ideal_testing_error, run_test, TestMethod};
use ddpca_core::{Error, Result, SolverConfig, SymmetricMatrix};
use serde::{Deserialize, Serialize};

use crate::commands::{histogram_on, RunOutput, SEED_ENV};
use crate::error::{CliError, CliResult};
use crate::io::{fmt_f64, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    /// Exact decomposition: ADMM table and iterative-projection traces.
    Exp1,
    /// Approximate decomposition: relaxed ADMM table and noise/rank sweeps.
    Exp2,
    /// Residual correlations from DD-PCA versus plain PCA.
    Exp3,
    /// Iterative projection with a misspecified rank.
    Exp4,
    /// Covariance estimation errors over plug-in ranks and POET*.
    Exp5,
    /// Σ, Σ⁻¹, A and A⁻¹ errors of DD-PCA and POET* for k = K..K+5.
    Fig1,
    /// Ideal testing errors of the six global tests.
    Fig5,
}

impl ExperimentName {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentName::Exp1 => "exp1",
            ExperimentName::Exp2 => "exp2",
            ExperimentName::Exp3 => "exp3",
            ExperimentName::Exp4 => "exp4",
            ExperimentName::Exp5 => "exp5",
            ExperimentName::Fig1 => "fig1",
            ExperimentName::Fig5 => "fig5",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Paper,
    Desk,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(args_override_self = true)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub name: ExperimentName,
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    pub scale: Scale,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Repetitions per grid point (per arm for fig5).
    #[arg(long)]
    pub reps: Option<usize>,
    /// Dimensions to run, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<usize>>,
    /// ADMM penalty (exp1, exp2).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Solver iterations of the main study.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, default_value = "")]
    pub out_prefix: String,
}

/// Master seed of grid point `idx`.
pub fn point_seed(seed: u64, idx: u64) -> u64 {
    seed.wrapping_add(idx.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// `K = 0.05 p`, at least 1.
pub fn default_rank(p: usize) -> usize {
    ((p as f64 * 0.05).round() as usize).max(1)
}

fn rel(num: f64, den: f64) -> f64 {
    num / den.max(f64::MIN_POSITIVE)
}

/// Rank, relative residual, relative L error and relative A error.
pub fn decomposition_metrics(
    s: &SymmetricMatrix,
    l: &SymmetricMatrix,
    a: &SymmetricMatrix,
    l_hat: &SymmetricMatrix,
    a_hat: &SymmetricMatrix,
) -> Result<Vec<f64>> {
    let ev = ddpca_core::linalg::eigvals_sym(l_hat)?;
    Ok(vec![
        numerical_rank(&ev, 1e-8) as f64,
        rel(l_hat.add(a_hat).frob_dist(s), s.frob_norm()),
        rel(l_hat.frob_dist(l), l.frob_norm()),
        rel(a_hat.frob_dist(a), a.frob_norm()),
    ])
}

/// One repetition of the exact-decomposition ADMM study.
pub fn exact_admm_rep(p: usize, k: usize, rho: f64, iters: usize, stream: &mut RngStream) -> Result<Vec<f64>> {
    let smp = gen_exact_decomp(p, k, stream)?;
    let d = admm_exact(&smp.s, &SolverConfig::default().with_rho(rho).with_max_iter(iters))?;
    decomposition_metrics(&smp.s, &smp.l, &smp.a, &d.l, &d.a)
}

/// One repetition of the relaxed ADMM study on `S = L + A + E`.
pub fn relaxed_admm_rep(
    p: usize,
    k: usize,
    sigma: f64,
    lambda: f64,
    rho: f64,
    iters: usize,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    let smp = gen_noisy_decomp(p, k, sigma, stream)?;
    let cfg = SolverConfig::default().with_lambda(lambda).with_rho(rho).with_max_iter(iters);
    let d = admm_relaxed(&smp.s, &cfg)?;
    decomposition_metrics(&smp.s, &smp.l, &smp.a, &d.l, &d.a)
}

/// Iterative-projection traces `(ζ(S − L̂), relative residual)` per iteration.
pub fn iterproj_trace(
    p: usize,
    k: usize,
    sigma: f64,
    iters: usize,
    stream: &mut RngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let smp = if sigma == 0.0 { gen_exact_decomp(p, k, stream)? } else { gen_noisy_decomp(p, k, sigma, stream)? };
    let d = iterative_projection(&smp.s, &SolverConfig::default().with_rank(k).with_max_iter(iters))?;
    let norm = smp.s.frob_norm();
    Ok((d.margin_history, d.residual_history.iter().map(|r| rel(*r, norm)).collect()))
}

/// Relative `‖L̂ − L‖` in Frobenius and spectral norm for each plug-in rank.
pub fn rank_sweep_rep(p: usize, k_true: usize, ks: &[usize], iters: usize, stream: &mut RngStream) -> Result<Vec<f64>> {
    let smp = gen_exact_decomp(p, k_true, stream)?;
    let (lf, ls) = (smp.l.frob_norm(), spectral_norm(&smp.l)?);
    let mut out = Vec::with_capacity(2 * ks.len());
    for &k in ks {
        let d = iterative_projection(&smp.s, &SolverConfig::default().with_rank(k).with_max_iter(iters))?;
        let diff = d.l.sub(&smp.l);
        out.push(rel(diff.frob_norm(), lf));
        out.push(rel(spectral_norm(&diff)?, ls));
    }
    Ok(out)
}

/// Column names of [`cov_errors`] blocks.
pub const COV_MEASURES: [&str; 8] = [
    "sigma_frob",
    "sigma_spec",
    "precision_frob",
    "precision_spec",
    "a_frob",
    "a_spec",
    "a_inv_frob",
    "a_inv_spec",
];

/// POET threshold grid `0.05, 0.10, …, 0.50`.
pub fn poet_grid() -> Vec<f64> {
    (1..=10).map(|i| 0.05 * i as f64).collect()
}

fn report_vec(est: &CovEstimate, truth: &Truth<'_>) -> Result<[f64; 8]> {
    let r = error_report(est, truth)?;
    let missing = || Error::Numerical("estimate has no residual part".into());
    Ok([
        r.sigma_frob,
        r.sigma_spec,
        r.precision_frob,
        r.precision_spec,
        r.residual_frob.ok_or_else(missing)?,
        r.residual_spec.ok_or_else(missing)?,
        r.residual_inv_frob.ok_or_else(missing)?,
        r.residual_inv_spec.ok_or_else(missing)?,
    ])
}

/// One draw of the factor-model study. Returns the eight errors of DD-PCA for
/// every `k` in `ks`, then the per-measure minimum over the POET grid for
/// every `k` in `poet_ks`. Grid points whose estimate cannot be inverted are
/// skipped; if none survive the measure is `NaN`.
pub fn cov_errors(
    p: usize,
    n: usize,
    k_true: usize,
    ks: &[usize],
    poet_ks: &[usize],
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    let f = gen_factor_cov(p, n, k_true, stream)?;
    let precision = inverse_sym(&f.sigma)?;
    let a_inv = inverse_sym(&f.a)?;
    let truth = Truth { sigma: &f.sigma, precision: &precision, a: &f.a, a_inv: &a_inv };
    let s = sample_cov(&f.x)?;
    let cfg = SolverConfig::default();
    let mut out = Vec::with_capacity(8 * (ks.len() + poet_ks.len()));
    for &k in ks {
        out.extend(report_vec(&ddpca_from_cov(&s, k, &cfg)?, &truth)?);
    }
    for &k in poet_ks {
        let mut best = [f64::INFINITY; 8];
        for a in poet_grid() {
            match poet_from_cov(&s, k, a).and_then(|e| report_vec(&e, &truth)) {
                Ok(v) => {
                    for (b, x) in best.iter_mut().zip(v) {
                        *b = b.min(x);
                    }
                }
                Err(e) => log::debug!("POET a = {a}: {e}"),
            }
        }
        out.extend(best.map(|v| if v.is_finite() { v } else { f64::NAN }));
    }
    Ok(out)
}

/// Ideal testing errors of all six tests on the grid `ps × ss × taus`.
///
/// Per `p` one covariance is drawn and one set of `reps` null draws is shared
/// by every `(s, τ)`; each `(p, s, τ)` then gets its own `reps` alternative
/// draws. Returns `(p, s, τ, errors in TestMethod::ALL order)`.
#[allow(clippy::type_complexity)]
pub fn testing_grid(
    seed: u64,
    ps: &[usize],
    ss: &[usize],
    taus: &[f64],
    n: usize,
    reps: usize,
    rank: usize,
) -> Result<Vec<(usize, usize, f64, Vec<f64>)>> {
    let cfg = SolverConfig::default();
    let stats = |z: &[f64], sigma_hat: &SymmetricMatrix| -> Result<Vec<f64>> {
        TestMethod::ALL.iter().map(|&m| run_test(m, z, sigma_hat, rank, &cfg).map(|r| r.statistic)).collect()
    };
    let mut rows = Vec::new();
    let mut point = 0u64;
    for (pi, &p) in ps.iter().enumerate() {
        let base = point_seed(seed, 1000 + pi as u64);
        let model = gen_testing_model(p, n, 0, 0.0, &mut RngStream::new(base, u64::MAX))?;
        let mut null: Vec<Vec<f64>> = vec![Vec::with_capacity(reps); TestMethod::ALL.len()];
        for rep in 0..reps {
            let d = model.draw(false, &mut RngStream::new(base, rep as u64))?;
            for (col, v) in null.iter_mut().zip(stats(&d.z, &d.sigma_hat)?) {
                col.push(v);
            }
        }
        for &s in ss {
            for &tau in taus {
                let alt_model = model.with_signal(s, tau)?;
                let alt_seed = point_seed(seed, point);
                point += 1;
                let mut alt: Vec<Vec<f64>> = vec![Vec::with_capacity(reps); TestMethod::ALL.len()];
                for rep in 0..reps {
                    let d = alt_model.draw(true, &mut RngStream::new(alt_seed, rep as u64))?;
                    for (col, v) in alt.iter_mut().zip(stats(&d.z, &d.sigma_hat)?) {
                        col.push(v);
                    }
                }
                let errs = null.iter().zip(&alt).map(|(a, b)| ideal_testing_error(a, b)).collect::<Result<_>>()?;
                log::info!("fig5 p = {p}, s = {s}, tau = {tau} done");
                rows.push((p, s, tau, errs));
            }
        }
    }
    Ok(rows)
}

/// Residual correlations `a_ij / √(a_ii a_jj)`, `i ≠ j`, skipping pairs with
/// a nonpositive diagonal.
pub fn residual_correlations(a: &SymmetricMatrix) -> Vec<f64> {
    let p = a.dim();
    let mut out = Vec::with_capacity(p * p.saturating_sub(1));
    for i in 0..p {
        for j in 0..p {
            let d = a[(i, i)] * a[(j, j)];
            if i != j && d > 0.0 {
                out.push(a[(i, j)] / d.sqrt());
            }
        }
    }
    out
}

struct Plan {
    seed: u64,
    reps: usize,
    ps: Vec<usize>,
    rho: f64,
    iters: usize,
}

fn plan(args: &ExperimentArgs, ps: &[usize], reps: usize, rho: f64, iters: usize) -> CliResult<Plan> {
    let plan = Plan {
        seed: args.seed,
        reps: args.reps.unwrap_or(reps),
        ps: args.p.clone().unwrap_or_else(|| ps.to_vec()),
        rho: args.rho.unwrap_or(rho),
        iters: args.iters.unwrap_or(iters),
    };
    if plan.reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    if plan.ps.is_empty() || plan.ps.iter().any(|&p| p < 2) {
        return Err(CliError::usage("--p needs dimensions of at least 2"));
    }
    if !(plan.rho > 0.0) {
        return Err(CliError::usage("--rho must be positive"));
    }
    if plan.iters == 0 {
        return Err(CliError::usage("--iters must be at least 1"));
    }
    Ok(plan)
}

pub fn run_experiment(args: &ExperimentArgs) -> CliResult<RunOutput> {
    let paper = args.scale == Scale::Paper;
    match args.name {
        ExperimentName::Exp1 => {
            let ps: &[usize] = if paper { &[500, 1000, 2000] } else { &[50, 100] };
            exp1(&plan(args, ps, 20, if paper { 3.0 } else { 1.0 }, 20)?)
        }
        ExperimentName::Exp2 => {
            let ps: &[usize] = if paper { &[500, 1000, 2000] } else { &[50, 100] };
            exp2(&plan(args, ps, 20, 1.0, 50)?, if paper { 20 } else { 5 })
        }
        ExperimentName::Exp3 => exp3(&plan(args, if paper { &[500] } else { &[100] }, 1, 1.0, 20)?),
        ExperimentName::Exp4 => {
            let ps: &[usize] = if paper { &[500, 2000] } else { &[100] };
            exp4(&plan(args, ps, if paper { 20 } else { 10 }, 1.0, 10)?)
        }
        ExperimentName::Exp5 => {
            let ps: &[usize] = if paper { &[100, 300, 500] } else { &[100] };
            exp5(&plan(args, ps, if paper { 100 } else { 50 }, 1.0, 1)?)
        }
        ExperimentName::Fig1 => {
            let ps: &[usize] = if paper { &[2000] } else { &[500] };
            fig1(&plan(args, ps, if paper { 100 } else { 20 }, 1.0, 1)?)
        }
        ExperimentName::Fig5 => fig5(&plan(args, &[100, 200], if paper { 1000 } else { 500 }, 1.0, 1)?),
    }
}

fn mc(seed: u64, reps: usize, names: &[&str], f: impl FnMut(usize, &mut RngStream) -> Result<Vec<f64>>) -> CliResult<(Vec<ddpca_core::simgen::MetricSummary>, Vec<String>)> {
    let report = run_monte_carlo(seed, reps, names, f)?;
    if report.failures.len() == reps {
        return Err(CliError::Numerical(format!("every repetition failed: {}", report.failures[0].1)));
    }
    let warnings = report.failures.iter().map(|(r, e)| format!("repetition {r} failed: {e}")).collect();
    Ok((report.summaries, warnings))
}

fn push_summary(row: &mut Vec<String>, s: &ddpca_core::simgen::MetricSummary) {
    row.push(fmt_f64(s.mean));
    row.push(fmt_f64(s.std_err));
}

const DECOMP_NAMES: [&str; 4] = ["rank", "residual", "err_l", "err_a"];

fn admm_table<F>(plan: &Plan, ks: &dyn Fn(usize) -> usize, mut rep: F) -> CliResult<(Table, Vec<String>, String)>
where
    F: FnMut(usize, usize, &mut RngStream) -> Result<Vec<f64>>,
{
    let mut t = Table::new([
        "p", "K", "reps", "rank_hits", "mean_rank", "residual", "residual_se", "err_l", "err_l_se", "err_a", "err_a_se",
    ]);
    let mut warnings = Vec::new();
    let mut lines = Vec::new();
    for (pi, &p) in plan.ps.iter().enumerate() {
        let k = ks(p);
        let seed = point_seed(plan.seed, pi as u64);
        let report = run_monte_carlo(seed, plan.reps, &DECOMP_NAMES, |_, st| rep(p, k, st))?;
        warnings.extend(report.failures.iter().map(|(r, e)| format!("p = {p}, repetition {r} failed: {e}")));
        let hits = report.rows.iter().flatten().filter(|r| r[0] as usize == k).count();
        let s = &report.summaries;
        let mut row = vec![p.to_string(), k.to_string(), s[0].count.to_string(), hits.to_string(), fmt_f64(s[0].mean)];
        for m in &s[1..] {
            push_summary(&mut row, m);
        }
        lines.push(format!(
            "p = {p}, K = {k}: rank hits {hits}/{}, residual {:.4}, L error {:.4}, A error {:.4}",
            s[0].count, s[1].mean, s[2].mean, s[3].mean
        ));
        t.push(row);
    }
    Ok((t, warnings, lines.join("\n")))
}

fn exp1(plan: &Plan) -> CliResult<RunOutput> {
    let (table, mut warnings, report) =
        admm_table(plan, &default_rank, |p, k, st| exact_admm_rep(p, k, plan.rho, plan.iters, st))?;
    let trace_iters = 20;
    let mut fig2 = Table::new(["p", "K", "iteration", "zeta", "zeta_se", "residual", "residual_se"]);
    for (pi, &p) in plan.ps.iter().enumerate() {
        let k = default_rank(p);
        let names: Vec<String> = (0..trace_iters).flat_map(|i| [format!("z{i}"), format!("r{i}")]).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let seed = point_seed(plan.seed, 100 + pi as u64);
        let (sums, w) = mc(seed, plan.reps, &refs, |_, st| {
            let (z, r) = iterproj_trace(p, k, 0.0, trace_iters, st)?;
            Ok(z.into_iter().zip(r).flat_map(|(a, b)| [a, b]).collect())
        })?;
        warnings.extend(w);
        for i in 0..trace_iters {
            let mut row = vec![p.to_string(), k.to_string(), (i + 1).to_string()];
            push_summary(&mut row, &sums[2 * i]);
            push_summary(&mut row, &sums[2 * i + 1]);
            fig2.push(row);
        }
    }
    Ok(RunOutput {
        artifacts: vec![table.artifact("table1.csv"), fig2.artifact("fig2.csv")],
        inputs: Vec::new(),
        warnings,
        report,
    })
}

fn exp2(plan: &Plan, sweep_reps: usize) -> CliResult<RunOutput> {
    let (table, mut warnings, report) =
        admm_table(plan, &default_rank, |p, k, st| relaxed_admm_rep(p, k, 1.0, 3.0, plan.rho, plan.iters, st))?;
    let sweep_reps = sweep_reps.min(plan.reps);
    let sigmas: Vec<f64> = (1..=10).map(|i| 0.5 * i as f64).collect();
    let ratios: Vec<f64> = (1..=10).map(|i| 0.01 * i as f64).collect();
    let mut by_sigma = Table::new(["p", "K", "sigma", "residual", "residual_se"]);
    let mut by_rank = Table::new(["p", "K", "k_over_p", "residual", "residual_se"]);
    let mut idx = 200u64;
    for &p in &plan.ps {
        for &sigma in &sigmas {
            let k = default_rank(p);
            let (s, w) = mc(point_seed(plan.seed, idx), sweep_reps, &["residual"], |_, st| {
                Ok(vec![*iterproj_trace(p, k, sigma, 20, st)?.1.last().expect("iterations >= 1")])
            })?;
            idx += 1;
            warnings.extend(w);
            let mut row = vec![p.to_string(), k.to_string(), fmt_f64(sigma)];
            push_summary(&mut row, &s[0]);
            by_sigma.push(row);
        }
        for &ratio in &ratios {
            let k = ((p as f64 * ratio).round() as usize).clamp(1, p - 1);
            let (s, w) = mc(point_seed(plan.seed, idx), sweep_reps, &["residual"], |_, st| {
                Ok(vec![*iterproj_trace(p, k, 1.0, 20, st)?.1.last().expect("iterations >= 1")])
            })?;
            idx += 1;
            warnings.extend(w);
            let mut row = vec![p.to_string(), k.to_string(), fmt_f64(ratio)];
            push_summary(&mut row, &s[0]);
            by_rank.push(row);
        }
    }
    Ok(RunOutput {
        artifacts: vec![
            table.artifact("table2.csv"),
            by_sigma.artifact("fig4_sigma.csv"),
            by_rank.artifact("fig4_rank.csv"),
        ],
        inputs: Vec::new(),
        warnings,
        report,
    })
}

fn exp3(plan: &Plan) -> CliResult<RunOutput> {
    let mut hist = Table::new(["p", "method", "bin_lo", "bin_hi", "count"]);
    let mut summary = Table::new(["p", "method", "zeta", "dominant_rows", "max_abs_corr"]);
    let mut lines = Vec::new();
    for (pi, &p) in plan.ps.iter().enumerate() {
        let k = default_rank(p);
        let mut st = RngStream::new(point_seed(plan.seed, pi as u64), 0);
        let smp = gen_exact_decomp(p, k, &mut st)?;
        let dd = iterative_projection(&smp.s, &SolverConfig::default().with_rank(k).with_max_iter(plan.iters))?;
        let top = eig_sym_top(&smp.s, k)?;
        let l_pca = SymmetricMatrix::from_upper(p, |i, j| {
            (0..k).map(|r| top.values[r] * top.vector(r)[i] * top.vector(r)[j]).sum()
        });
        let a_pca = smp.s.sub(&l_pca);
        for (label, a) in [("ddpca", &dd.a), ("pca", &a_pca)] {
            let corr = residual_correlations(a);
            for (lo, hi, c) in histogram_on(&corr, -1.0, 1.0, 40) {
                hist.push(vec![p.to_string(), label.to_owned(), fmt_f64(lo), fmt_f64(hi), c.to_string()]);
            }
            let dominant = (0..p)
                .filter(|&i| a[(i, i)] >= (0..p).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum::<f64>())
                .count();
            let max_corr = corr.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let zeta = dd_margin(a);
            summary.push(vec![p.to_string(), label.to_owned(), fmt_f64(zeta), dominant.to_string(), fmt_f64(max_corr)]);
            lines.push(format!("p = {p}, {label}: zeta {zeta:.3e}, dominant rows {dominant}/{p}"));
        }
    }
    Ok(RunOutput {
        artifacts: vec![hist.artifact("fig7_hist.csv"), summary.artifact("fig7_summary.csv")],
        inputs: Vec::new(),
        warnings: Vec::new(),
        report: lines.join("\n"),
    })
}

fn exp4(plan: &Plan) -> CliResult<RunOutput> {
    let mut t = Table::new(["p", "K", "k", "frob", "frob_se", "spec", "spec_se"]);
    let mut warnings = Vec::new();
    let mut lines = Vec::new();
    for (pi, &p) in plan.ps.iter().enumerate() {
        let k_true = default_rank(p);
        let ks: Vec<usize> = (1..=(2 * k_true).min(p - 1)).collect();
        let names: Vec<String> = ks.iter().flat_map(|k| [format!("f{k}"), format!("s{k}")]).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let (sums, w) =
            mc(point_seed(plan.seed, pi as u64), plan.reps, &refs, |_, st| rank_sweep_rep(p, k_true, &ks, plan.iters, st))?;
        warnings.extend(w);
        for (i, &k) in ks.iter().enumerate() {
            let mut row = vec![p.to_string(), k_true.to_string(), k.to_string()];
            push_summary(&mut row, &sums[2 * i]);
            push_summary(&mut row, &sums[2 * i + 1]);
            t.push(row);
        }
        let curve: Vec<String> = ks.iter().enumerate().map(|(i, k)| format!("{k}:{:.3}", sums[2 * i].mean)).collect();
        lines.push(format!("p = {p}, K = {k_true}: {}", curve.join(" ")));
    }
    Ok(RunOutput { artifacts: vec![t.artifact("fig6.csv")], inputs: Vec::new(), warnings, report: lines.join("\n") })
}

/// Rows of the factor-model tables: `(target, norm, index into COV_MEASURES)`.
const TARGETS: [(&str, &str, usize); 8] = [
    ("sigma_u", "frobenius", 4),
    ("sigma_u", "spectral", 5),
    ("sigma_u_inv", "frobenius", 6),
    ("sigma_u_inv", "spectral", 7),
    ("sigma", "frobenius", 0),
    ("sigma", "spectral", 1),
    ("sigma_inv", "frobenius", 2),
    ("sigma_inv", "spectral", 3),
];

fn cov_names(blocks: usize) -> Vec<String> {
    (0..blocks).flat_map(|b| COV_MEASURES.iter().map(move |m| format!("{b}_{m}"))).collect()
}

fn exp5(plan: &Plan) -> CliResult<RunOutput> {
    let (k_true, n) = (3, 200);
    let ks: Vec<usize> = (1..=6).collect();
    let mut header = vec!["p".to_owned(), "K".to_owned(), "target".to_owned(), "norm".to_owned()];
    header.extend(ks.iter().map(|k| format!("k{k}")));
    header.push("poet_star".to_owned());
    let mut t = Table { header, rows: Vec::new() };
    let mut warnings = Vec::new();
    let mut lines = Vec::new();
    for (pi, &p) in plan.ps.iter().enumerate() {
        if p <= 6 {
            return Err(CliError::usage("exp5 needs p > 6"));
        }
        let names = cov_names(ks.len() + 1);
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let (sums, w) = mc(point_seed(plan.seed, pi as u64), plan.reps, &refs, |_, st| {
            cov_errors(p, n, k_true, &ks, &[k_true], st)
        })?;
        warnings.extend(w);
        for (target, norm, m) in TARGETS {
            let mut row = vec![p.to_string(), k_true.to_string(), target.to_owned(), norm.to_owned()];
            row.extend((0..=ks.len()).map(|b| fmt_f64(sums[8 * b + m].mean)));
            t.push(row);
        }
        let at = |m: usize| sums[8 * (k_true - 1) + m].mean;
        lines.push(format!(
            "p = {p}, k = {k_true}: A frob {:.3}, A spec {:.3}, A^-1 frob {:.3}, A^-1 spec {:.3}",
            at(4),
            at(5),
            at(6),
            at(7)
        ));
    }
    Ok(RunOutput { artifacts: vec![t.artifact("table3.csv")], inputs: Vec::new(), warnings, report: lines.join("\n") })
}

fn fig1(plan: &Plan) -> CliResult<RunOutput> {
    let (k_true, n) = (3, 200);
    let ks: Vec<usize> = (3..=8).collect();
    let mut header = vec!["p".to_owned(), "method".to_owned(), "k".to_owned()];
    for m in COV_MEASURES {
        header.push(m.to_owned());
        header.push(format!("{m}_se"));
    }
    let mut t = Table { header, rows: Vec::new() };
    let mut warnings = Vec::new();
    let mut lines = Vec::new();
    for (pi, &p) in plan.ps.iter().enumerate() {
        if p <= 8 {
            return Err(CliError::usage("fig1 needs p > 8"));
        }
        let names = cov_names(2 * ks.len());
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let (sums, w) =
            mc(point_seed(plan.seed, pi as u64), plan.reps, &refs, |_, st| cov_errors(p, n, k_true, &ks, &ks, st))?;
        warnings.extend(w);
        for (b, (method, k)) in ks.iter().map(|&k| ("ddpca", k)).chain(ks.iter().map(|&k| ("poet_star", k))).enumerate() {
            let mut row = vec![p.to_string(), method.to_owned(), k.to_string()];
            for m in 0..8 {
                push_summary(&mut row, &sums[8 * b + m]);
            }
            t.push(row);
        }
        let dd = sums[3].mean;
        let poet = sums[8 * ks.len() + 3].mean;
        lines.push(format!("p = {p}, k = {k_true}: precision spectral error ddpca {dd:.4}, POET* {poet:.4}"));
    }
    Ok(RunOutput { artifacts: vec![t.artifact("fig1.csv")], inputs: Vec::new(), warnings, report: lines.join("\n") })
}

fn fig5(plan: &Plan) -> CliResult<RunOutput> {
    let rows = testing_grid(plan.seed, &plan.ps, &[5, 10], &[0.3, 0.5], 50, plan.reps, 2)?;
    let mut header = vec!["p".to_owned(), "s".to_owned(), "tau".to_owned()];
    header.extend(TestMethod::ALL.iter().map(|m| m.name().to_owned()));
    let mut t = Table { header, rows: Vec::new() };
    let mut lines = Vec::new();
    for (p, s, tau, errs) in &rows {
        let mut row = vec![p.to_string(), s.to_string(), fmt_f64(*tau)];
        row.extend(errs.iter().map(|&e| fmt_f64(e)));
        t.push(row);
        let best = errs.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| TestMethod::ALL[i].name());
        lines.push(format!("p = {p}, s = {s}, tau = {tau}: lowest {}", best.unwrap_or("-")));
    }
    Ok(RunOutput { artifacts: vec![t.artifact("fig5.csv")], inputs: Vec::new(), warnings: Vec::new(), report: lines.join("\n") })
}
