//! Low-rank plus diagonally-dominant decomposition `S ≈ L + A`.
//!
//! Four solvers are provided:
//!
//! - [`one_step`]: rank-`K` eigen-truncation of `S`, then one projection of
//!   the residual onto `SDD_c⁺`.
//! - [`iterative_projection`]: alternates the two projections until the
//!   iterates settle.
//! - [`admm_relaxed`]: three-block ADMM for
//!   `½‖S − L − A‖²_F + λ‖L‖_*` subject to `A ∈ SDD_c⁺`.
//! - [`admm_exact`]: two-block ADMM for `min ‖L‖_*` subject to `S = L + A`,
//!   `A ∈ SDD⁺`.
//!
//! Every solver returns an exactly symmetric `A`. If the final `A` is outside
//! the cone by more than `tol·‖S‖_F` it is projected back and a
//! [`Warning::ConeRepair`] is attached.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result, Warning};
use crate::linalg::{self, eig_sym, eig_sym_select, numerical_rank, EigenSystem};
use crate::matrix::{Matrix, SymmetricMatrix};
use crate::projection::{dd_margin_c, project_rows, project_sdd, project_sdd_dual, ConeSpec, ProjectionResult};

/// Relative threshold below which an eigenvalue of `L` counts as zero.
pub const RANK_TOL: f64 = 1e-10;

/// How the `A` step of [`iterative_projection`] reaches the cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AStep {
    /// Row-wise projection onto `DD_c⁺` followed by symmetrization.
    #[default]
    DdSymmetrize,
    /// Full Dykstra projection onto `SDD_c⁺`.
    Sdd,
}

/// Algorithm used for projections onto `SDD_c⁺`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Projector {
    /// Projected Newton on the dual, falling back to Dykstra if it stalls.
    #[default]
    Dual,
    Dykstra,
}

/// Newton step cap of the dual projector.
const DUAL_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Target rank `K` for the rank-constrained solvers.
    pub rank: Option<usize>,
    /// Dominance constant.
    pub c: f64,
    /// Nuclear-norm weight of the relaxed problem.
    pub lambda: f64,
    /// Augmented-Lagrangian penalty.
    pub rho: f64,
    /// `None` picks the solver default (500 for ADMM, 100 for iterative
    /// projection).
    pub max_iter: Option<usize>,
    pub tol: f64,
    pub dykstra_tol: f64,
    pub dykstra_max_iter: usize,
    /// Inner Dykstra tolerance of the relaxed ADMM, relative to `‖S‖_F`.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub a_step: AStep,
    pub projector: Projector,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rank: None,
            c: 1.0,
            lambda: 1.0,
            rho: 1.0,
            max_iter: None,
            tol: 1e-7,
            dykstra_tol: 1e-8,
            dykstra_max_iter: 10_000,
            inner_tol: 1e-6,
            inner_max_iter: 2000,
            a_step: AStep::DdSymmetrize,
            projector: Projector::Dual,
        }
    }
}

impl SolverConfig {
    pub fn with_rank(mut self, k: usize) -> Self {
        self.rank = Some(k);
        self
    }

    pub fn with_max_iter(mut self, n: usize) -> Self {
        self.max_iter = Some(n);
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_a_step(mut self, a_step: AStep) -> Self {
        self.a_step = a_step;
        self
    }

    pub fn with_projector(mut self, projector: Projector) -> Self {
        self.projector = projector;
        self
    }

    /// Projection onto `SDD_c⁺` with the configured algorithm.
    pub fn project_sdd(&self, a: &Matrix, tol: f64, max_iter: usize) -> Result<ProjectionResult> {
        let cone = self.cone()?;
        if self.projector == Projector::Dual {
            let r = project_sdd_dual(a, cone, tol, DUAL_MAX_ITER)?;
            if r.converged {
                return Ok(r);
            }
        }
        project_sdd(a, cone, tol, max_iter)
    }

    fn cone(&self) -> Result<ConeSpec> {
        ConeSpec::new(self.c)
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("tol", self.tol),
            ("dykstra_tol", self.dykstra_tol),
            ("inner_tol", self.inner_tol),
            ("rho", self.rho),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Argument(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if self.max_iter == Some(0) || self.dykstra_max_iter == 0 || self.inner_max_iter == 0 {
            return Err(Error::Argument("iteration caps must be at least 1".into()));
        }
        self.cone().map(|_| ())
    }

    fn rank_for(&self, p: usize) -> Result<usize> {
        match self.rank {
            None => Err(Error::Argument("this solver needs a target rank".into())),
            Some(k) if k == 0 || k >= p => {
                Err(Error::Argument(format!("rank must lie in [1, {}], got {k}", p - 1)))
            }
            Some(k) => Ok(k),
        }
    }
}

/// Extra state of the ADMM solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmDiagnostics {
    /// Residual block `E` of the relaxed problem.
    pub e: Option<SymmetricMatrix>,
    /// Final multipliers: `Λ` for the relaxed solver, `(Λ₁, Λ₂)` for the exact one.
    pub multipliers: Vec<Matrix>,
    /// `‖L + A + E − S‖_F` (relaxed) or `‖L + A − S‖_F` (exact) per iteration,
    /// with the `A` iterate before symmetrization.
    pub primal_residuals: Vec<f64>,
    /// `‖A − B‖_F` per iteration (exact solver only).
    pub consensus_residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub l: SymmetricMatrix,
    pub a: SymmetricMatrix,
    /// Eigenvalues of `L` above `RANK_TOL · |λ₁|`.
    pub rank_l: usize,
    /// Nonzero eigenpairs of `L`, in canonical order.
    pub factors: EigenSystem,
    pub iterations: usize,
    /// `‖S − L − A‖_F / ‖S‖_F` per iteration.
    pub residual_history: Vec<f64>,
    /// `ζ(S − L)` per iteration.
    pub margin_history: Vec<f64>,
    pub converged: bool,
    pub warnings: Vec<Warning>,
    pub admm: Option<AdmmDiagnostics>,
}

impl Decomposition {
    /// `L + A`.
    pub fn sum(&self) -> SymmetricMatrix {
        self.l.add(&self.a)
    }
}

fn rel(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

fn check_input(s: &SymmetricMatrix) -> Result<()> {
    s.ensure_finite()?;
    if s.dim() == 0 {
        return Err(Error::Input("empty matrix".into()));
    }
    Ok(())
}

/// Rank-`k` truncation that also reports the smallest eigenvalue seen.
fn truncate(m: &SymmetricMatrix, k: usize) -> Result<(SymmetricMatrix, EigenSystem, f64)> {
    let mut smallest = f64::INFINITY;
    let es = eig_sym_select(m, |sorted| {
        smallest = sorted.iter().copied().fold(f64::INFINITY, f64::min);
        k
    })?;
    Ok((es.reconstruct(), es, smallest))
}

fn psd_warning(s: &SymmetricMatrix, smallest: f64, warnings: &mut Vec<Warning>) {
    if smallest < -1e-8 * s.frob_norm() {
        log::warn!("input has a negative eigenvalue {smallest:.3e}; proceeding without clipping");
        warnings.push(Warning::NotPositiveSemidefinite { min_eigenvalue: smallest });
    }
}

fn nonzero_factors(es: EigenSystem) -> (EigenSystem, usize) {
    let rank = numerical_rank(&es.values, RANK_TOL);
    (es.truncated(rank), rank)
}

/// Pulls `a` back into the cone when its margin is below `−tol·‖S‖_F`.
fn repair_cone(
    a: SymmetricMatrix,
    s_norm: f64,
    config: &SolverConfig,
    warnings: &mut Vec<Warning>,
) -> Result<SymmetricMatrix> {
    let margin = dd_margin_c(&a, config.c);
    if margin >= -config.tol * s_norm {
        return Ok(a);
    }
    log::debug!("final A has dominance margin {margin:.3e}; projecting onto the symmetric cone");
    warnings.push(Warning::ConeRepair { margin_before: margin });
    let r = config.project_sdd(&a, config.dykstra_tol, config.dykstra_max_iter)?;
    collect_projection_warnings(&r, warnings);
    Ok(r.matrix)
}

fn collect_projection_warnings(r: &ProjectionResult, warnings: &mut Vec<Warning>) {
    if !r.converged {
        warnings.push(Warning::ProjectionNotConverged {
            iterations: r.iterations,
            residual: r.residual,
        });
    }
    for &row in &r.fallback_rows {
        if !warnings.contains(&Warning::RowFallback { row }) {
            warnings.push(Warning::RowFallback { row });
        }
    }
}

/// One pass: `L = P_{L_K}(S)`, `A = P_{SDD_c⁺}(S − L)`.
pub fn one_step(s: &SymmetricMatrix, config: &SolverConfig) -> Result<Decomposition> {
    config.validate()?;
    check_input(s)?;
    let k = config.rank_for(s.dim())?;
    let mut warnings = Vec::new();
    let (l, es, smallest) = truncate(s, k)?;
    psd_warning(s, smallest, &mut warnings);
    let resid = s.sub(&l);
    let r = config.project_sdd(&resid, config.dykstra_tol, config.dykstra_max_iter)?;
    collect_projection_warnings(&r, &mut warnings);
    let a = r.matrix;
    let s_norm = s.frob_norm();
    let (factors, rank_l) = nonzero_factors(es);
    Ok(Decomposition {
        residual_history: alloc::vec![rel(resid.frob_dist(&a), s_norm)],
        margin_history: alloc::vec![dd_margin_c(&resid, config.c)],
        l,
        a,
        rank_l,
        factors,
        iterations: 1,
        converged: r.converged,
        warnings,
        admm: None,
    })
}

/// Alternating projections
///
/// ```text
/// L^t = P_{L_K}(S − A^{t−1}),   A^t = sym(P_{DD_c⁺}(S − L^t))
/// ```
///
/// starting from `A⁰ = 0`. With [`AStep::Sdd`] the second step is the full
/// projection onto `SDD_c⁺` instead.
pub fn iterative_projection(s: &SymmetricMatrix, config: &SolverConfig) -> Result<Decomposition> {
    config.validate()?;
    check_input(s)?;
    let p = s.dim();
    let k = config.rank_for(p)?;
    let max_iter = config.max_iter.unwrap_or(100);
    let cone = config.cone()?;
    let s_norm = s.frob_norm();
    let mut warnings = Vec::new();
    let mut l = SymmetricMatrix::zeros(p);
    let mut a = SymmetricMatrix::zeros(p);
    let mut factors = EigenSystem { values: Vec::new(), vectors: Matrix::zeros(0, p) };
    let mut residual_history = Vec::with_capacity(max_iter);
    let mut margin_history = Vec::with_capacity(max_iter);
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=max_iter {
        iterations = t;
        let (l_new, es, smallest) = truncate(&s.sub(&a), k)?;
        if t == 1 {
            psd_warning(s, smallest, &mut warnings);
        }
        let resid = s.sub(&l_new);
        let a_new = match config.a_step {
            AStep::DdSymmetrize => {
                let (g, rows) = project_rows(&resid, cone.c())?;
                for row in rows {
                    if !warnings.contains(&Warning::RowFallback { row }) {
                        warnings.push(Warning::RowFallback { row });
                    }
                }
                g.sym_part()
            }
            AStep::Sdd => {
                let r = config.project_sdd(&resid, config.dykstra_tol, config.dykstra_max_iter)?;
                collect_projection_warnings(&r, &mut warnings);
                r.matrix
            }
        };
        residual_history.push(rel(resid.frob_dist(&a_new), s_norm));
        margin_history.push(dd_margin_c(&resid, cone.c()));
        let change = rel(l_new.frob_dist(&l).max(a_new.frob_dist(&a)), s_norm);
        l = l_new;
        a = a_new;
        factors = es;
        if change < config.tol {
            converged = true;
            break;
        }
    }
    let a = repair_cone(a, s_norm, config, &mut warnings)?;
    let (factors, rank_l) = nonzero_factors(factors);
    Ok(Decomposition {
        l,
        a,
        rank_l,
        factors,
        iterations,
        residual_history,
        margin_history,
        converged,
        warnings,
        admm: None,
    })
}

/// Thresholded eigen-part `Σ sign(λ)(|λ| − τ)⁺ v vᵀ` together with its factors.
fn svt_factors(m: &SymmetricMatrix, tau: f64) -> Result<(SymmetricMatrix, EigenSystem)> {
    let es = linalg::eig_sym_above(m, tau)?;
    let values: Vec<f64> =
        es.values.iter().map(|&v| if v > 0.0 { v - tau } else { v + tau }).collect();
    let shrunk = EigenSystem { values, vectors: es.vectors };
    Ok((shrunk.reconstruct(), shrunk))
}

/// Three-block ADMM for the convex relaxation. `K` is not used; the rank of
/// `L` is driven by `λ`.
pub fn admm_relaxed(s: &SymmetricMatrix, config: &SolverConfig) -> Result<Decomposition> {
    config.validate()?;
    check_input(s)?;
    let p = s.dim();
    let max_iter = config.max_iter.unwrap_or(500);
    let cone = config.cone()?;
    let rho = config.rho;
    let tau = config.lambda / rho;
    let s_norm = s.frob_norm();
    let inner_abs = config.inner_tol * s_norm;
    let mut warnings = Vec::new();

    let mut l = SymmetricMatrix::zeros(p);
    let mut a = SymmetricMatrix::zeros(p);
    let mut e = SymmetricMatrix::zeros(p);
    let mut lam = SymmetricMatrix::zeros(p);
    let mut factors = EigenSystem { values: Vec::new(), vectors: Matrix::zeros(0, p) };
    let mut residual_history = Vec::with_capacity(max_iter);
    let mut margin_history = Vec::with_capacity(max_iter);
    let mut primal = Vec::with_capacity(max_iter);
    let mut converged = false;
    let mut iterations = 0;
    let mut inner_failures = 0usize;

    for t in 1..=max_iter {
        iterations = t;
        // L = D_{λ/ρ}(S − A − E − Λ/ρ)
        let mut target = s.sub(&a).sub(&e);
        target.axpy(-1.0 / rho, &lam);
        let (l_new, es) = svt_factors(&target, tau)?;

        // A = P_SDD(S − L − E − Λ/ρ)
        let mut target = s.sub(&l_new).sub(&e);
        target.axpy(-1.0 / rho, &lam);
        let tol_rel = rel(inner_abs, target.frob_norm()).max(f64::MIN_POSITIVE);
        let r = config.project_sdd(&target, tol_rel, config.inner_max_iter)?;
        if !r.converged {
            inner_failures += 1;
        }
        let a_new = r.matrix;

        // E = ρ/(ρ+1) (S − A − L − Λ/ρ)
        let mut e_new = s.sub(&a_new).sub(&l_new);
        e_new.axpy(-1.0 / rho, &lam);
        let e_new = e_new.scaled(rho / (rho + 1.0));

        // Λ += ρ (A + L + E − S)
        let gap = a_new.add(&l_new).add(&e_new).sub(s);
        lam.axpy(rho, &gap);
        primal.push(gap.frob_norm());

        let resid = s.sub(&l_new);
        residual_history.push(rel(resid.frob_dist(&a_new), s_norm));
        margin_history.push(dd_margin_c(&resid, cone.c()));
        let change = rel(l_new.frob_dist(&l).max(a_new.frob_dist(&a)), s_norm);
        l = l_new;
        a = a_new;
        e = e_new;
        factors = es;
        if t > 1 && change < config.tol {
            converged = true;
            break;
        }
    }
    if inner_failures > 0 {
        log::info!("inner projection hit its cap in {inner_failures} of {iterations} iterations");
        warnings.push(Warning::ProjectionNotConverged {
            iterations: config.inner_max_iter,
            residual: f64::NAN,
        });
    }
    let a = repair_cone(a, s_norm, config, &mut warnings)?;
    let (factors, rank_l) = nonzero_factors(factors);
    Ok(Decomposition {
        l,
        a,
        rank_l,
        factors,
        iterations,
        residual_history,
        margin_history,
        converged,
        warnings,
        admm: Some(AdmmDiagnostics {
            e: Some(e),
            multipliers: alloc::vec![lam.into_matrix()],
            primal_residuals: primal,
            consensus_residuals: Vec::new(),
        }),
    })
}

/// Two-block ADMM for the exact problem, `c = 1` only.
///
/// The `L` step thresholds the symmetric part of `S − A − Λ₁/ρ`, which is the
/// exact minimizer over symmetric `L` (the skew part only adds a constant).
pub fn admm_exact(s: &SymmetricMatrix, config: &SolverConfig) -> Result<Decomposition> {
    config.validate()?;
    check_input(s)?;
    if config.c != 1.0 {
        return Err(Error::Argument(format!(
            "the exact ADMM solver supports only c = 1, got {}",
            config.c
        )));
    }
    let p = s.dim();
    let max_iter = config.max_iter.unwrap_or(500);
    let rho = config.rho;
    let tau = 1.0 / rho;
    let s_norm = s.frob_norm();
    let sm: &Matrix = s;
    let mut warnings = Vec::new();

    let mut l = SymmetricMatrix::zeros(p);
    let mut a = Matrix::zeros(p, p);
    let mut lam1 = Matrix::zeros(p, p);
    let mut lam2 = Matrix::zeros(p, p);
    let mut factors = EigenSystem { values: Vec::new(), vectors: Matrix::zeros(0, p) };
    let mut residual_history = Vec::with_capacity(max_iter);
    let mut margin_history = Vec::with_capacity(max_iter);
    let mut primal = Vec::with_capacity(max_iter);
    let mut consensus = Vec::with_capacity(max_iter);
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=max_iter {
        iterations = t;
        // L = D_{1/ρ}(sym(S − A − Λ₁/ρ))
        let mut target = sm.sub(&a);
        target.axpy(-1.0 / rho, &lam1);
        let (l_new, es) = svt_factors(&target.sym_part(), tau)?;

        // B = sym(A + Λ₂/ρ)
        let mut b = a.clone();
        b.axpy(1.0 / rho, &lam2);
        let b = b.sym_part();

        // A = P_DD(½(S − L + B − Λ₁/ρ − Λ₂/ρ))
        let mut target = sm.sub(&l_new).add(&b);
        target.axpy(-1.0 / rho, &lam1);
        target.axpy(-1.0 / rho, &lam2);
        let (a_new, rows) = project_rows(&target.scaled(0.5), 1.0)?;
        for row in rows {
            if !warnings.contains(&Warning::RowFallback { row }) {
                warnings.push(Warning::RowFallback { row });
            }
        }

        // Λ₁ += ρ(A + L − S), Λ₂ += ρ(A − B)
        let gap1 = a_new.add(&l_new).sub(sm);
        let gap2 = a_new.sub(&b);
        lam1.axpy(rho, &gap1);
        lam2.axpy(rho, &gap2);
        primal.push(gap1.frob_norm());
        consensus.push(gap2.frob_norm());

        let resid = s.sub(&l_new);
        let a_sym = a_new.sym_part();
        residual_history.push(rel(resid.frob_dist(&a_sym), s_norm));
        margin_history.push(dd_margin_c(&resid, 1.0));
        let change = rel(l_new.frob_dist(&l).max(a_new.frob_dist(&a)), s_norm);
        l = l_new;
        a = a_new;
        factors = es;
        if t > 1 && change < config.tol {
            converged = true;
            break;
        }
    }
    let a = repair_cone(a.sym_part(), s_norm, config, &mut warnings)?;
    let (factors, rank_l) = nonzero_factors(factors);
    Ok(Decomposition {
        l,
        a,
        rank_l,
        factors,
        iterations,
        residual_history,
        margin_history,
        converged,
        warnings,
        admm: Some(AdmmDiagnostics {
            e: None,
            multipliers: alloc::vec![lam1, lam2],
            primal_residuals: primal,
            consensus_residuals: consensus,
        }),
    })
}

/// Solver selector used by the command line and the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    OneStep,
    IterativeProjection,
    AdmmRelaxed,
    AdmmExact,
}

impl Method {
    pub fn run(self, s: &SymmetricMatrix, config: &SolverConfig) -> Result<Decomposition> {
        match self {
            Method::OneStep => one_step(s, config),
            Method::IterativeProjection => iterative_projection(s, config),
            Method::AdmmRelaxed => admm_relaxed(s, config),
            Method::AdmmExact => admm_exact(s, config),
        }
    }

    pub fn needs_rank(self) -> bool {
        matches!(self, Method::OneStep | Method::IterativeProjection)
    }
}

/// Eigen-factorization `L = B Bᵀ` with `B = Q_K Λ_K^{1/2}` (columns), clipping
/// negative eigenvalues to zero. Returns `B` as a `p × K` matrix and the number
/// of clipped eigenvalues.
pub fn loadings(factors: &EigenSystem) -> (Matrix, usize) {
    let p = factors.dim();
    let k = factors.len();
    let mut b = Matrix::zeros(p, k);
    let mut clipped = 0;
    for (j, &v) in factors.values.iter().enumerate() {
        if v < 0.0 {
            clipped += 1;
            continue;
        }
        let scale = crate::math::sqrt(v);
        for (i, &x) in factors.vector(j).iter().enumerate() {
            b[(i, j)] = scale * x;
        }
    }
    (b, clipped)
}

/// Full eigen-decomposition helper used by callers that need every pair.
pub fn spectrum(m: &SymmetricMatrix) -> Result<EigenSystem> {
    eig_sym(m)
}
