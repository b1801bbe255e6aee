//! Generalized Gramians: per-mode positive definite matrices satisfying a
//! Lyapunov inequality in every mode and a non-expansion inequality across
//! every reset map.
//!
//! | kind           | Lyapunov residual (must be `< 0`) | jump residual (must be `<= 0`)  |
//! |----------------|-----------------------------------|---------------------------------|
//! | observability  | `AᵀQ + QA + CᵀC`                  | `MᵀQ₊M − Q`                     |
//! | reachability   | `AP + PAᵀ + BBᵀ`                  | `MPMᵀ − P₊`                     |
//! | stability      | `AᵀP + PA`                        | `MᵀP₊M − P`                     |
//!
//! All three share one shape, `ÃᵀX + XÃ + W` and `NᵀX_to N − X_from`, which
//! is what [`LmiSystem`] captures; the checker and the solver only ever see
//! that form.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, definiteness, definiteness_with_slack, inverse, is_hurwitz, lyapunov_solve, sym_eig, symmetrize,
    Definiteness, NONSTRICT_SLACK,
};
use crate::model::{EventId, LinearHybridSystem, ModeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramianKind {
    Observability,
    Reachability,
    Stability,
}

impl fmt::Display for GramianKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GramianKind::Observability => "observability",
            GramianKind::Reachability => "reachability",
            GramianKind::Stability => "stability",
        })
    }
}

impl std::str::FromStr for GramianKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "observability" | "obs" => Ok(GramianKind::Observability),
            "reachability" | "reach" | "controllability" => Ok(GramianKind::Reachability),
            "stability" => Ok(GramianKind::Stability),
            other => Err(Error::Format(format!("unknown Gramian kind `{other}`"))),
        }
    }
}

/// Default strict margin for families that do not carry their own.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GramianFamily {
    pub kind: GramianKind,
    /// One symmetric matrix per mode, indexed by [`ModeId`].
    pub matrices: Vec<DMatrix<f64>>,
    /// Strict margin: Lyapunov residuals must reach `λ_max ≤ −ε` and every
    /// matrix `λ_min ≥ ε`.
    pub epsilon: f64,
}

impl GramianFamily {
    pub fn new(kind: GramianKind, matrices: Vec<DMatrix<f64>>, epsilon: f64) -> Self {
        Self {
            kind,
            matrices: matrices.iter().map(symmetrize).collect(),
            epsilon,
        }
    }

    pub fn get(&self, q: ModeId) -> &DMatrix<f64> {
        &self.matrices[q.0]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct JumpSpec {
    pub source: ModeId,
    pub event: EventId,
    pub target: ModeId,
    pub from: usize,
    pub to: usize,
    pub n: DMatrix<f64>,
}

/// `ÃᵀX + XÃ + W < 0` per mode and `NᵀX_to N − X_from ≤ 0` per transition.
#[derive(Debug, Clone)]
pub(crate) struct LmiSystem {
    pub a: Vec<DMatrix<f64>>,
    pub w: Vec<DMatrix<f64>>,
    pub jumps: Vec<JumpSpec>,
}

impl LmiSystem {
    pub fn new(model: &LinearHybridSystem, kind: GramianKind) -> Self {
        let mut a = Vec::new();
        let mut w = Vec::new();
        for sys in &model.subsystems {
            let n = sys.state_dim();
            match kind {
                GramianKind::Observability => {
                    a.push(sys.a.clone());
                    w.push(sys.c.transpose() * &sys.c);
                }
                GramianKind::Reachability => {
                    a.push(sys.a.transpose());
                    w.push(&sys.b * sys.b.transpose());
                }
                GramianKind::Stability => {
                    a.push(sys.a.clone());
                    w.push(DMatrix::zeros(n, n));
                }
            }
        }
        let jumps = model
            .transitions()
            .map(|r| {
                let (from, to, n) = match kind {
                    GramianKind::Reachability => (r.target.0, r.source.0, r.matrix.transpose()),
                    _ => (r.source.0, r.target.0, r.matrix.clone()),
                };
                JumpSpec {
                    source: r.source,
                    event: r.event,
                    target: r.target,
                    from,
                    to,
                    n,
                }
            })
            .collect();
        Self { a, w, jumps }
    }

    pub fn lyapunov_residual(&self, q: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(self.a[q].transpose() * x + x * &self.a[q] + &self.w[q]))
    }

    pub fn jump_residual(&self, j: &JumpSpec, xs: &[DMatrix<f64>]) -> DMatrix<f64> {
        symmetrize(&(j.n.transpose() * &xs[j.to] * &j.n - &xs[j.from]))
    }
}

#[derive(Debug, Clone)]
pub struct ModeResidual {
    pub mode: ModeId,
    pub residual: DMatrix<f64>,
    pub max_eigenvalue: f64,
    /// Smallest eigenvalue of the Gramian itself.
    pub gramian_min_eigenvalue: f64,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct JumpResidual {
    pub source: ModeId,
    pub event: EventId,
    pub target: ModeId,
    pub residual: DMatrix<f64>,
    pub max_eigenvalue: f64,
    pub ok: bool,
}

/// Every residual of one Gramian family with its verdict.
#[derive(Debug, Clone)]
pub struct LmiResidualReport {
    pub kind: GramianKind,
    pub margin: f64,
    pub slack: f64,
    pub modes: Vec<ModeResidual>,
    pub jumps: Vec<JumpResidual>,
}

impl LmiResidualReport {
    pub fn is_ok(&self) -> bool {
        self.modes.iter().all(|m| m.ok) && self.jumps.iter().all(|j| j.ok)
    }

    pub fn worst_lyapunov(&self) -> f64 {
        self.modes.iter().map(|m| m.max_eigenvalue).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn worst_jump(&self) -> f64 {
        self.jumps.iter().map(|j| j.max_eigenvalue).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_gramian_eigenvalue(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.gramian_min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest amount by which any constraint is violated (≤ 0 when OK).
    pub fn worst_violation(&self) -> f64 {
        let lyap = self.worst_lyapunov() + self.margin;
        let jump = self.worst_jump() - self.slack;
        let pd = self.margin - self.min_gramian_eigenvalue();
        lyap.max(jump).max(pd)
    }

    pub fn render(&self, model: &LinearHybridSystem) -> String {
        let mut s = format!(
            "{} Gramians: {} (margin {:e}, slack {:e})\n",
            self.kind,
            if self.is_ok() { "OK" } else { "FAIL" },
            self.margin,
            self.slack
        );
        for m in &self.modes {
            s += &format!(
                "  mode {:<8} lyapunov λmax = {:>12.6e}  gramian λmin = {:>12.6e}  {}\n",
                model.mode_name(m.mode),
                m.max_eigenvalue,
                m.gramian_min_eigenvalue,
                if m.ok { "ok" } else { "VIOLATED" }
            );
        }
        for j in &self.jumps {
            s += &format!(
                "  jump {}-[{}]->{}  λmax = {:>12.6e}  {}\n",
                model.mode_name(j.source),
                model.event_name(j.event),
                model.mode_name(j.target),
                j.max_eigenvalue,
                if j.ok { "ok" } else { "VIOLATED" }
            );
        }
        s
    }
}

/// Assembles and classifies every residual of `family` on `model`, using the
/// family's own `ε` as strict margin and [`NONSTRICT_SLACK`] for jumps.
pub fn check_gramians(model: &LinearHybridSystem, family: &GramianFamily) -> Result<LmiResidualReport> {
    check_gramians_with(model, family, family.epsilon, NONSTRICT_SLACK)
}

pub fn check_gramians_with(
    model: &LinearHybridSystem,
    family: &GramianFamily,
    margin: f64,
    slack: f64,
) -> Result<LmiResidualReport> {
    if family.matrices.len() != model.num_modes() {
        return Err(Error::DimensionMismatch(format!(
            "family has {} matrices for {} modes",
            family.matrices.len(),
            model.num_modes()
        )));
    }
    for q in model.modes() {
        let n = model.state_dim(q);
        let x = family.get(q);
        if x.nrows() != n || x.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "Gramian for mode {} is {}x{}, expected {n}x{n}",
                model.mode_name(q),
                x.nrows(),
                x.ncols()
            )));
        }
    }
    let sys = LmiSystem::new(model, family.kind);
    Ok(check_system(&sys, &family.matrices, family.kind, margin, slack))
}

fn check_system(
    sys: &LmiSystem,
    xs: &[DMatrix<f64>],
    kind: GramianKind,
    margin: f64,
    slack: f64,
) -> LmiResidualReport {
    let mut modes = Vec::with_capacity(xs.len());
    for (q, x) in xs.iter().enumerate() {
        let residual = sys.lyapunov_residual(q, x);
        let lyap = definiteness(&residual, margin).expect("square residual");
        let pd = definiteness(x, margin).expect("square gramian");
        modes.push(ModeResidual {
            mode: ModeId(q),
            max_eigenvalue: lyap.max_eigenvalue,
            gramian_min_eigenvalue: pd.min_eigenvalue,
            ok: lyap.is_negative_definite() && pd.is_positive_definite(),
            residual,
        });
    }
    let jumps = sys
        .jumps
        .iter()
        .map(|j| {
            let residual = sys.jump_residual(j, xs);
            let d = definiteness_with_slack(&residual, margin, slack).expect("square residual");
            JumpResidual {
                source: j.source,
                event: j.event,
                target: j.target,
                max_eigenvalue: d.max_eigenvalue,
                ok: d.is_negative_semidefinite(),
                residual,
            }
        })
        .collect();
    LmiResidualReport {
        kind,
        margin,
        slack,
        modes,
        jumps,
    }
}

/// Verdicts of two algebraically equivalent forms of one inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurVerdicts {
    pub primal: Definiteness,
    pub dual: Definiteness,
}

impl SchurVerdicts {
    pub fn primal_nsd(&self) -> bool {
        self.primal.is_negative_semidefinite()
    }

    pub fn dual_nsd(&self) -> bool {
        self.dual.is_negative_semidefinite()
    }

    pub fn agree(&self) -> bool {
        self.primal_nsd() == self.dual_nsd()
    }
}

/// `M P_q Mᵀ − P₊ ≤ 0` versus `−P_q⁻¹ + Mᵀ P₊⁻¹ M ≤ 0`.
pub fn schur_jump_equivalence(
    m: &DMatrix<f64>,
    p_source: &DMatrix<f64>,
    p_target: &DMatrix<f64>,
) -> Result<SchurVerdicts> {
    let primal = symmetrize(&(m * p_source * m.transpose() - p_target));
    let dual = symmetrize(&(m.transpose() * inverse(p_target)? * m - inverse(p_source)?));
    Ok(SchurVerdicts {
        primal: definiteness(&primal, 0.0)?,
        dual: definiteness(&dual, 0.0)?,
    })
}

/// For `P, Q < 0`: `[[P, A], [Aᵀ, Q]] ≤ 0` versus `P − A Q⁻¹ Aᵀ ≤ 0`.
pub fn schur_block_equivalence(p: &DMatrix<f64>, a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<SchurVerdicts> {
    let (n, k) = (p.nrows(), q.nrows());
    if a.nrows() != n || a.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "off-diagonal block is {}x{}, expected {n}x{k}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut block = DMatrix::<f64>::zeros(n + k, n + k);
    block.view_mut((0, 0), (n, n)).copy_from(p);
    block.view_mut((0, n), (n, k)).copy_from(a);
    block.view_mut((n, 0), (k, n)).copy_from(&a.transpose());
    block.view_mut((n, n), (k, k)).copy_from(q);
    let schur = p - a * inverse(q)? * a.transpose();
    Ok(SchurVerdicts {
        primal: definiteness(&block, 0.0)?,
        dual: definiteness(&schur, 0.0)?,
    })
}

/// Constructive direction of "stable iff Gramians exist": from a stability
/// certificate `{P_q}` build `Q_q = P_q/μ` and `𝒫_q = P_q⁻¹/μ'`.
///
/// `μ = (1 − shrink)·min_q γ_q/μ_q` where `AᵀP + PA ≤ −γ_q I` and
/// `CᵀC ≤ μ_q I` (resp. `P B Bᵀ P ≤ μ_q I` for the reachability branch). The
/// shrink factor turns the boundary case into a strict inequality.
pub fn gramians_from_stability(
    model: &LinearHybridSystem,
    stability: &GramianFamily,
    shrink: f64,
) -> Result<(GramianFamily, GramianFamily)> {
    if stability.kind != GramianKind::Stability || !check_gramians(model, stability)?.is_ok() {
        return Err(Error::InvalidCertificate("stability"));
    }
    let mut ratios_obs = Vec::new();
    let mut ratios_reach = Vec::new();
    for q in model.modes() {
        let sys = model.subsystem(q);
        let p = stability.get(q);
        let gamma = -sym_eig(&(sys.a.transpose() * p + p * &sys.a))?.max();
        let mu_c = sym_eig(&(sys.c.transpose() * &sys.c))?.max();
        let pb = p * &sys.b;
        let mu_b = sym_eig(&(&pb * pb.transpose()))?.max();
        if mu_c > 0.0 {
            ratios_obs.push(gamma / mu_c);
        }
        if mu_b > 0.0 {
            ratios_reach.push(gamma / mu_b);
        }
    }
    let pick = |r: &[f64]| {
        let m = r.iter().copied().fold(f64::INFINITY, f64::min);
        if m.is_finite() {
            (1.0 - shrink) * m
        } else {
            1.0
        }
    };
    let mu_obs = pick(&ratios_obs);
    let mu_reach = pick(&ratios_reach);

    let obs: Vec<_> = stability.matrices.iter().map(|p| p / mu_obs).collect();
    let reach = stability
        .matrices
        .iter()
        .map(|p| inverse(p).map(|inv| symmetrize(&(inv / mu_reach))))
        .collect::<Result<Vec<_>>>()?;

    Ok((
        certified_family(model, GramianKind::Observability, obs),
        certified_family(model, GramianKind::Reachability, reach),
    ))
}

/// Wraps matrices in a family whose `ε` is half of the margin they actually
/// achieve (Lyapunov residuals and definiteness), so the family certifies
/// itself when the underlying inequalities are strict.
pub fn certified_family(model: &LinearHybridSystem, kind: GramianKind, matrices: Vec<DMatrix<f64>>) -> GramianFamily {
    let sys = LmiSystem::new(model, kind);
    let matrices: Vec<_> = matrices.iter().map(symmetrize).collect();
    let achieved = check_system(&sys, &matrices, kind, 0.0, NONSTRICT_SLACK);
    let margin = (-achieved.worst_lyapunov()).min(achieved.min_gramian_eigenvalue());
    GramianFamily {
        kind,
        matrices,
        epsilon: (0.5 * margin).max(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Corrections overshoot their targets by `overshoot·ε` so that a fixed
    /// constraint lands strictly inside its set.
    pub overshoot: f64,
    /// Iterates growing past this factor of their initial size are reported
    /// as infeasible.
    pub divergence_factor: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            overshoot: 1e-3,
            divergence_factor: 1e8,
        }
    }
}

/// Searches for a Gramian family of the requested kind by alternating
/// corrections on the stacked per-mode variables.
///
/// Start: per-mode Lyapunov solutions of `ÃᵀX + XÃ = −(W + ε'I)` with
/// `ε' = ε(1 + overshoot)`. Each sweep
/// then
/// 1. lifts `X_from` by the positive part of every violated jump residual;
/// 2. for every violated Lyapunov residual `R`, clips its spectrum to
///    `≤ −ε` and pulls the change back through `Δ ↦ ÃᵀΔ + ΔÃ`;
/// 3. clips each `X_q` to `λ_min ≥ ε`.
///
/// Jump residuals are driven to `≤ 0` without slack so that the family
/// stays valid under the congruences applied by balancing. The result is
/// always re-checked; [`Error::Infeasible`] only means that
/// no certificate was found.
pub fn solve_gramians(
    model: &LinearHybridSystem,
    kind: GramianKind,
    epsilon: f64,
    options: &SolveOptions,
) -> Result<GramianFamily> {
    model.ensure_valid()?;
    if !(epsilon > 0.0) {
        return Err(Error::Format(format!("epsilon must be positive, got {epsilon}")));
    }
    let sys = LmiSystem::new(model, kind);
    for q in model.modes() {
        if !is_hurwitz(&model.subsystem(q).a) {
            return Err(Error::Infeasible {
                iterations: 0,
                worst: f64::NAN,
                reason: format!(
                    "A of mode {} is not Hurwitz, so no strict Lyapunov inequality holds",
                    model.mode_name(q)
                ),
            });
        }
    }

    let strict_target = -epsilon * (1.0 + options.overshoot);
    let mut xs = Vec::with_capacity(sys.a.len());
    for (a, w) in sys.a.iter().zip(&sys.w) {
        let n = a.nrows();
        let rhs = -(w + DMatrix::<f64>::identity(n, n) * (epsilon * (1.0 + options.overshoot)));
        xs.push(symmetrize(&lyapunov_solve(a, &rhs)?));
    }
    let initial_scale = xs.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1.0);

    let mut last = check_system(&sys, &xs, kind, epsilon, 0.0);
    for iter in 0..options.max_iters {
        if last.is_ok() {
            return Ok(GramianFamily {
                kind,
                matrices: xs,
                epsilon,
            });
        }

        for j in &sys.jumps {
            let r = sys.jump_residual(j, &xs);
            let eig = sym_eig(&r)?;
            if eig.max() > 0.0 {
                let lift = eig.map(|l| if l > 0.0 { l + options.overshoot * epsilon } else { 0.0 });
                xs[j.from] = symmetrize(&(&xs[j.from] + lift));
            }
        }

        for q in 0..xs.len() {
            let r = sys.lyapunov_residual(q, &xs[q]);
            let eig = sym_eig(&r)?;
            if eig.max() > -epsilon {
                let delta_r = eig.map(|l| l.min(strict_target) - l);
                let delta = lyapunov_solve(&sys.a[q], &delta_r)?;
                xs[q] = symmetrize(&(&xs[q] + delta));
            }
            let eig = sym_eig(&xs[q])?;
            if eig.min() < epsilon {
                xs[q] = eig.map(|l| l.max(epsilon * (1.0 + options.overshoot)));
            }
        }

        if xs.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonConvergent(format!("non-finite iterate after {} sweeps", iter + 1)));
        }
        last = check_system(&sys, &xs, kind, epsilon, 0.0);
        let scale = xs.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if scale > options.divergence_factor * initial_scale {
            return Err(Error::Infeasible {
                iterations: iter + 1,
                worst: last.worst_violation(),
                reason: format!("iterates diverged (norm {scale:.3e})"),
            });
        }
    }
    if last.is_ok() {
        return Ok(GramianFamily {
            kind,
            matrices: xs,
            epsilon,
        });
    }
    Err(Error::Infeasible {
        iterations: options.max_iters,
        worst: last.worst_violation(),
        reason: "iteration limit reached".into(),
    })
}

/// `(x, u) ↦ 2(Ax)ᵀQx + ‖Cx‖²` and `xᵀMᵀQ₊Mx − xᵀQx`: the pointwise forms of
/// the observability inequalities, both `≤ 0` under valid Gramians.
pub fn observability_quadratic_forms(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    m: &DMatrix<f64>,
    q_next: &DMatrix<f64>,
    x: &nalgebra::DVector<f64>,
) -> (f64, f64) {
    let ax = a * x;
    let flow = 2.0 * ax.dot(&(q * x)) + (c * x).norm_squared();
    let mx = m * x;
    let jump = mx.dot(&(q_next * &mx)) - x.dot(&(q * x));
    (flow, jump)
}

/// Reachability counterparts: `2(Ax + Bu)ᵀP⁻¹x − ‖u‖²` and
/// `xᵀMᵀP₊⁻¹Mx − xᵀP⁻¹x`.
pub fn reachability_quadratic_forms(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    p: &DMatrix<f64>,
    m: &DMatrix<f64>,
    p_next: &DMatrix<f64>,
    x: &nalgebra::DVector<f64>,
    u: &nalgebra::DVector<f64>,
) -> Result<(f64, f64)> {
    let p_inv = inverse(p)?;
    let pn_inv = inverse(p_next)?;
    let flow = 2.0 * (a * x + b * u).dot(&(&p_inv * x)) - u.norm_squared();
    let mx = m * x;
    let jump = mx.dot(&(pn_inv * &mx)) - x.dot(&(p_inv * x));
    Ok((flow, jump))
}

/// Verifies positive definiteness of every member by Cholesky.
pub fn all_positive_definite(family: &GramianFamily) -> bool {
    family.matrices.iter().all(|m| cholesky(m).is_ok())
}
