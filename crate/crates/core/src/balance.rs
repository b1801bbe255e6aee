//! Per-mode balancing, truncation and the a-priori error bound.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gramian::{
    check_gramians, check_gramians_with, solve_gramians, GramianFamily, GramianKind,
    LmiResidualReport, SolveOptions,
};
use crate::linalg::{cholesky, inverse, rel_diff, sym_eig, NONSTRICT_SLACK};
use crate::model::{LinearHybridSystem, ModeId, ResetMap, Subsystem};
use crate::simulate::{HybridTrajectory, InputSignal};

/// Ratio below which `σ_min/σ_max` is treated as a rank deficiency.
pub const MIN_SIGMA_RATIO: f64 = 1e-10;
/// Relative tolerance on `SᵀΛS = 𝒬` and `S⁻¹ΛS⁻ᵀ = 𝒫`.
pub const IDENTITY_TOLERANCE: f64 = 1e-7;
/// Relative gap under which neighbouring σ count as repeated.
pub const REPEATED_SIGMA_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ModeTransform {
    pub s: DMatrix<f64>,
    pub s_inv: DMatrix<f64>,
}

/// The system in balanced coordinates, where both Gramians equal
/// `Λ_q = diag(σ_q)`.
#[derive(Debug, Clone)]
pub struct BalancedRealization {
    pub model: LinearHybridSystem,
    pub transforms: Vec<ModeTransform>,
    /// Descending, strictly positive.
    pub sigma: Vec<DVector<f64>>,
    pub observability: LmiResidualReport,
    pub reachability: LmiResidualReport,
    /// Check tolerances for `Λ` as observability and reachability Gramian.
    pub tolerances: [Tolerance; 2],
}

impl BalancedRealization {
    pub fn sigma(&self, q: ModeId) -> &DVector<f64> {
        &self.sigma[q.0]
    }

    pub fn lambda(&self, q: ModeId) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.sigma[q.0])
    }

    /// `{Λ_q}` as a family of the given kind (observability or
    /// reachability), carrying the transported strict margin.
    pub fn lambda_family(&self, kind: GramianKind) -> GramianFamily {
        GramianFamily {
            kind,
            matrices: self.sigma.iter().map(DMatrix::from_diagonal).collect(),
            epsilon: self.tolerance(kind).margin,
        }
    }

    pub fn tolerance(&self, kind: GramianKind) -> Tolerance {
        match kind {
            GramianKind::Reachability => self.tolerances[1],
            _ => self.tolerances[0],
        }
    }
}

/// Balances `model` with the given reachability (`𝒫`) and observability
/// (`𝒬`) Gramians.
///
/// With `𝒫 = UUᵀ` (Cholesky) and `Uᵀ𝒬U = VΛ²Vᵀ`, the transform is
/// `S = Λ^{1/2}VᵀU⁻¹`, `S⁻¹ = UVΛ^{-1/2}`.
pub fn balance(
    model: &LinearHybridSystem,
    reachability: &GramianFamily,
    observability: &GramianFamily,
) -> Result<BalancedRealization> {
    balance_with_factor(model, reachability, observability, cholesky)
}

/// Like [`balance`] with a caller-chosen square factor `U` of `𝒫 = UUᵀ`.
pub fn balance_with_factor(
    model: &LinearHybridSystem,
    reachability: &GramianFamily,
    observability: &GramianFamily,
    factor: impl Fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
) -> Result<BalancedRealization> {
    model.ensure_valid()?;
    if reachability.kind != GramianKind::Reachability || !check_gramians(model, reachability)?.is_ok() {
        return Err(Error::InvalidCertificate("reachability"));
    }
    if observability.kind != GramianKind::Observability || !check_gramians(model, observability)?.is_ok() {
        return Err(Error::InvalidCertificate("observability"));
    }

    let mut transforms = Vec::with_capacity(model.num_modes());
    let mut sigma = Vec::with_capacity(model.num_modes());
    for q in model.modes() {
        let name = model.mode_name(q).to_string();
        let p = reachability.get(q);
        let qm = observability.get(q);
        let u = factor(p)?;
        if rel_diff(&(&u * u.transpose()), p) > IDENTITY_TOLERANCE {
            return Err(Error::BalancingCheckFailed {
                mode: name,
                error: rel_diff(&(&u * u.transpose()), p),
            });
        }
        let eig = sym_eig(&(u.transpose() * qm * &u))?;
        let s_max = eig.max().max(0.0).sqrt();
        let s_min = eig.min().max(0.0).sqrt();
        if !(s_max > 0.0) || s_min < MIN_SIGMA_RATIO * s_max {
            return Err(Error::IllConditionedBalancing {
                mode: name,
                ratio: if s_max > 0.0 { s_min / s_max } else { 0.0 },
            });
        }
        let sig = eig.eigenvalues.map(|l| l.sqrt());
        let root = sig.map(f64::sqrt);
        let v = &eig.eigenvectors;
        let u_inv = inverse(&u)?;
        let s = DMatrix::from_diagonal(&root) * v.transpose() * &u_inv;
        let s_inv = &u * v * DMatrix::from_diagonal(&root.map(|r| 1.0 / r));

        let lam = DMatrix::from_diagonal(&sig);
        let err_q = rel_diff(&(s.transpose() * &lam * &s), qm);
        let err_p = rel_diff(&(&s_inv * &lam * s_inv.transpose()), p);
        if err_q.max(err_p) > IDENTITY_TOLERANCE {
            return Err(Error::BalancingCheckFailed {
                mode: name,
                error: err_q.max(err_p),
            });
        }
        transforms.push(ModeTransform { s, s_inv });
        sigma.push(sig);
    }

    let subsystems = model
        .modes()
        .map(|q| {
            let t = &transforms[q.0];
            let sys = model.subsystem(q);
            Subsystem::new(&t.s * &sys.a * &t.s_inv, &t.s * &sys.b, &sys.c * &t.s_inv)
        })
        .collect();
    let resets = model
        .resets
        .iter()
        .map(|(k, r)| {
            let matrix = &transforms[r.target.0].s * &r.matrix * &transforms[r.source.0].s_inv;
            (*k, ResetMap { matrix, ..r.clone() })
        })
        .collect();
    let x0 = &transforms[model.initial.mode.0].s * &model.initial.x0;
    let balanced_model = model.with_continuous_part(subsystems, resets, x0);

    let tolerances = [
        transported(observability.epsilon, transforms.iter().map(|t| t.s_inv.clone())),
        transported(reachability.epsilon, transforms.iter().map(|t| t.s.transpose())),
    ];
    let lambdas: Vec<_> = sigma.iter().map(DMatrix::from_diagonal).collect();
    let observability = lambda_report(&balanced_model, GramianKind::Observability, &lambdas, tolerances[0])?;
    let reachability = lambda_report(&balanced_model, GramianKind::Reachability, &lambdas, tolerances[1])?;
    if !observability.is_ok() {
        return Err(Error::InvalidCertificate("balanced observability"));
    }
    if !reachability.is_ok() {
        return Err(Error::InvalidCertificate("balanced reachability"));
    }
    Ok(BalancedRealization {
        model: balanced_model,
        transforms,
        sigma,
        observability,
        reachability,
        tolerances,
    })
}

/// Strict margin and jump slack for `Λ` after the congruences
/// `R ↦ TᵀRT` that carry residuals into balanced coordinates
/// (`T = S⁻¹` for observability, `T = Sᵀ` for reachability).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub margin: f64,
    pub slack: f64,
}

fn transported(epsilon: f64, congruences: impl Iterator<Item = DMatrix<f64>>) -> Tolerance {
    let mut lo = f64::INFINITY;
    let mut hi = 1.0f64;
    for t in congruences {
        let sv = t.svd(false, false).singular_values;
        lo = lo.min(sv.min().powi(2));
        hi = hi.max(sv.max().powi(2));
    }
    Tolerance {
        margin: epsilon * lo * (1.0 - 1e-6),
        slack: NONSTRICT_SLACK * hi,
    }
}

fn lambda_report(
    model: &LinearHybridSystem,
    kind: GramianKind,
    lambdas: &[DMatrix<f64>],
    tol: Tolerance,
) -> Result<LmiResidualReport> {
    let family = GramianFamily {
        kind,
        matrices: lambdas.to_vec(),
        epsilon: tol.margin,
    };
    check_gramians_with(model, &family, tol.margin, tol.slack)
}

/// Kept state dimension per mode, `0 < r_q ≤ n_q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionOrders(Vec<usize>);

impl ReductionOrders {
    pub fn new(model: &LinearHybridSystem, orders: Vec<usize>) -> Result<Self> {
        if orders.len() != model.num_modes() {
            return Err(Error::InvalidOrders(format!(
                "{} orders given for {} modes",
                orders.len(),
                model.num_modes()
            )));
        }
        for q in model.modes() {
            let (r, n) = (orders[q.0], model.state_dim(q));
            if r == 0 || r > n {
                return Err(Error::InvalidOrders(format!(
                    "mode {}: order {r} outside 1..={n}",
                    model.mode_name(q)
                )));
            }
        }
        Ok(Self(orders))
    }

    /// No truncation.
    pub fn full(model: &LinearHybridSystem) -> Self {
        Self(model.modes().map(|q| model.state_dim(q)).collect())
    }

    pub fn from_names(model: &LinearHybridSystem, orders: &BTreeMap<String, usize>) -> Result<Self> {
        let mut out = Self::full(model).0;
        for (name, r) in orders {
            out[model.mode_by_name(name)?.0] = *r;
        }
        Self::new(model, out)
    }

    pub fn get(&self, q: ModeId) -> usize {
        self.0[q.0]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Truncated system together with its provenance.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub model: LinearHybridSystem,
    pub orders: ReductionOrders,
    /// Full σ list per mode of the balanced realization.
    pub sigma: Vec<Vec<f64>>,
    pub bound: f64,
    /// Checks of `Λ̂` on the reduced model.
    pub observability: LmiResidualReport,
    pub reachability: LmiResidualReport,
    pub warnings: Vec<String>,
}

impl ReducedModel {
    pub fn kept_sigma(&self, q: ModeId) -> &[f64] {
        &self.sigma[q.0][..self.orders.get(q)]
    }

    pub fn truncated_sigma(&self, q: ModeId) -> &[f64] {
        &self.sigma[q.0][self.orders.get(q)..]
    }

    pub fn lambda_hat(&self, q: ModeId) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(self.kept_sigma(q)))
    }

    pub fn is_verified(&self) -> bool {
        self.observability.is_ok() && self.reachability.is_ok()
    }
}

/// `2·Σ_q Σ_{i>r_q} σ_{q,i}`.
pub fn error_bound(bal: &BalancedRealization, orders: &ReductionOrders) -> f64 {
    2.0 * bal
        .sigma
        .iter()
        .enumerate()
        .map(|(q, s)| s.iter().skip(orders.get(ModeId(q))).sum::<f64>())
        .sum::<f64>()
}

/// Keeps the leading `r_q` balanced states of every mode. Reset maps keep
/// their top-left `r_target × r_source` block; the reduced initial state is
/// zero.
pub fn truncate(bal: &BalancedRealization, orders: &ReductionOrders) -> Result<ReducedModel> {
    let model = &bal.model;
    let orders = ReductionOrders::new(model, orders.as_slice().to_vec())?;
    let mut warnings = Vec::new();
    let subsystems = model
        .modes()
        .map(|q| {
            let (r, sys) = (orders.get(q), model.subsystem(q));
            let sig = bal.sigma(q);
            if r < sig.len() && (sig[r - 1] - sig[r]).abs() <= REPEATED_SIGMA_TOLERANCE * sig[r - 1] {
                warnings.push(format!(
                    "mode {}: σ_{} ≈ σ_{} ({:e}) straddles the truncation boundary",
                    model.mode_name(q),
                    r,
                    r + 1,
                    sig[r]
                ));
            }
            Subsystem::new(
                sys.a.view((0, 0), (r, r)).into_owned(),
                sys.b.rows(0, r).into_owned(),
                sys.c.columns(0, r).into_owned(),
            )
        })
        .collect();
    let resets = model
        .resets
        .iter()
        .map(|(k, m)| {
            let (rt, rs) = (orders.get(m.target), orders.get(m.source));
            let matrix = m.matrix.view((0, 0), (rt, rs)).into_owned();
            (*k, ResetMap { matrix, ..m.clone() })
        })
        .collect();
    let x0 = DVector::zeros(orders.get(model.initial.mode));
    let mut reduced = model.with_continuous_part(subsystems, resets, x0);
    reduced
        .metadata
        .insert("reduction_orders".into(), format!("{:?}", orders.as_slice()));

    let lambdas: Vec<_> = model
        .modes()
        .map(|q| DMatrix::from_diagonal(&bal.sigma(q).rows(0, orders.get(q)).into_owned()))
        .collect();
    // Λ̂ residuals are compressions of the Λ residuals, so the same
    // tolerances apply.
    let observability = lambda_report(&reduced, GramianKind::Observability, &lambdas, bal.tolerances[0])?;
    let reachability = lambda_report(&reduced, GramianKind::Reachability, &lambdas, bal.tolerances[1])?;
    Ok(ReducedModel {
        bound: error_bound(bal, &orders),
        model: reduced,
        orders,
        sigma: bal.sigma.iter().map(|s| s.iter().copied().collect()).collect(),
        observability,
        reachability,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub enum GramianSource {
    Solve { epsilon: f64, options: SolveOptions },
    Provided {
        reachability: GramianFamily,
        observability: GramianFamily,
    },
}

impl Default for GramianSource {
    fn default() -> Self {
        GramianSource::Solve {
            epsilon: 1e-4,
            options: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reduction {
    pub reachability: GramianFamily,
    pub observability: GramianFamily,
    pub balanced: BalancedRealization,
    pub reduced: ReducedModel,
}

/// Gramians (solved or given), balancing, truncation and bound in one go.
pub fn reduce(model: &LinearHybridSystem, orders: &ReductionOrders, source: &GramianSource) -> Result<Reduction> {
    let (reachability, observability) = match source {
        GramianSource::Solve { epsilon, options } => (
            solve_gramians(model, GramianKind::Reachability, *epsilon, options)?,
            solve_gramians(model, GramianKind::Observability, *epsilon, options)?,
        ),
        GramianSource::Provided {
            reachability,
            observability,
        } => (reachability.clone(), observability.clone()),
    };
    let balanced = balance(model, &reachability, &observability)?;
    let reduced = truncate(&balanced, orders)?;
    Ok(Reduction {
        reachability,
        observability,
        balanced,
        reduced,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VSample {
    pub time: f64,
    pub mode: ModeId,
    pub v: f64,
    pub dv_dt: f64,
    /// `4β²‖u‖² − ‖y − ŷ‖²`.
    pub supply: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VJump {
    pub time: f64,
    pub before: f64,
    pub after: f64,
}

/// Samples of `V = x_oᵀΛx_o + β²x_cᵀΛ⁻¹x_c` along a pair of trajectories,
/// with `x_o = x̄ − [x̂; 0]` and `x_c = x̄ + [x̂; 0]`.
#[derive(Debug, Clone)]
pub struct VDiagnostic {
    pub beta: f64,
    /// One vector per continuous segment.
    pub segments: Vec<Vec<VSample>>,
    pub jumps: Vec<VJump>,
}

impl VDiagnostic {
    /// Largest pointwise `dV/dt − supply`.
    pub fn max_rate_excess(&self) -> f64 {
        self.segments
            .iter()
            .flatten()
            .map(|s| s.dv_dt - s.supply)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `V(end⁻) − V(start) − ∫ supply` over segments (trapezoid).
    pub fn max_integrated_excess(&self) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.len() > 1)
            .map(|s| {
                let integral: f64 = s
                    .windows(2)
                    .map(|w| 0.5 * (w[1].time - w[0].time) * (w[0].supply + w[1].supply))
                    .sum();
                s[s.len() - 1].v - s[0].v - integral
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `V(T) − V(T⁻)` over events.
    pub fn max_jump_increase(&self) -> f64 {
        self.jumps
            .iter()
            .map(|j| j.after - j.before)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.segments.iter().flatten().all(|s| s.v.is_finite() && s.dv_dt.is_finite())
    }
}

/// Evaluates `V` and its analytic time derivative on trajectories of the
/// balanced model (`traj`) and the reduced model (`traj_hat`) driven by the
/// same input and event sequence.
///
/// `β` is the smallest truncated σ over truncated modes (the smallest last σ
/// when nothing is truncated).
pub fn v_diagnostic(
    bal: &BalancedRealization,
    reduced: &ReducedModel,
    u: &InputSignal,
    traj: &HybridTrajectory,
    traj_hat: &HybridTrajectory,
) -> Result<VDiagnostic> {
    let model = &bal.model;
    for q in model.modes() {
        let dropped = model.state_dim(q) - reduced.orders.get(q);
        if dropped > 1 {
            return Err(Error::GeometryMismatch {
                mode: model.mode_name(q).to_string(),
                dropped,
            });
        }
    }
    if traj.segments.len() != traj_hat.segments.len() || traj.events.len() != traj_hat.events.len() {
        return Err(Error::DimensionMismatch("trajectories do not share an event sequence".into()));
    }

    let last = |q: ModeId| bal.sigma(q)[bal.sigma(q).len() - 1];
    let truncated: Vec<_> = model
        .modes()
        .filter(|&q| reduced.orders.get(q) < model.state_dim(q))
        .collect();
    let beta = if truncated.is_empty() {
        model.modes().map(last).fold(f64::INFINITY, f64::min)
    } else {
        truncated.into_iter().map(last).fold(f64::INFINITY, f64::min)
    };
    let b2 = beta * beta;

    let pad = |q: ModeId, xh: &DVector<f64>| {
        let mut z = DVector::zeros(model.state_dim(q));
        z.rows_mut(0, xh.len()).copy_from(xh);
        z
    };
    let value = |q: ModeId, x: &DVector<f64>, xh: &DVector<f64>| {
        let sig = bal.sigma(q);
        let p = pad(q, xh);
        let xo = x - &p;
        let xc = x + &p;
        xo.iter().zip(sig.iter()).map(|(v, s)| s * v * v).sum::<f64>()
            + b2 * xc.iter().zip(sig.iter()).map(|(v, s)| v * v / s).sum::<f64>()
    };

    let mut segments = Vec::with_capacity(traj.segments.len());
    for (seg, seg_hat) in traj.segments.iter().zip(&traj_hat.segments) {
        if seg.times.len() != seg_hat.times.len() || seg.mode != seg_hat.mode {
            return Err(Error::DimensionMismatch("trajectories do not share a time grid".into()));
        }
        let q = seg.mode;
        let full = model.subsystem(q);
        let red = reduced.model.subsystem(q);
        let sig = bal.sigma(q);
        let k = seg.times.len();
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let t = seg.times[i];
            let ui = if i + 1 == k && k > 1 { u.eval_left(t) } else { u.eval(t) };
            let x = &seg.states[i];
            let xh = &seg_hat.states[i];
            let dx = &full.a * x + &full.b * &ui;
            let dxh = &red.a * xh + &red.b * &ui;
            let p = pad(q, xh);
            let dp = pad(q, &dxh);
            let (xo, xc) = (x - &p, x + &p);
            let (dxo, dxc) = (&dx - &dp, &dx + &dp);
            let mut dv = 0.0;
            for j in 0..sig.len() {
                dv += 2.0 * sig[j] * xo[j] * dxo[j] + 2.0 * b2 * xc[j] * dxc[j] / sig[j];
            }
            let e = &seg.outputs[i] - &seg_hat.outputs[i];
            out.push(VSample {
                time: t,
                mode: q,
                v: value(q, x, xh),
                dv_dt: dv,
                supply: 4.0 * b2 * ui.norm_squared() - e.norm_squared(),
            });
        }
        segments.push(out);
    }

    let jumps = traj
        .events
        .iter()
        .zip(&traj_hat.events)
        .map(|(ev, evh)| VJump {
            time: ev.time,
            before: value(ev.from, &ev.pre, &evh.pre),
            after: value(ev.to, &ev.post, &evh.post),
        })
        .collect();

    Ok(VDiagnostic { beta, segments, jumps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EventId, InitialState, OutputId};

    fn single_mode(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> LinearHybridSystem {
        let n = a.nrows();
        let mut resets = BTreeMap::new();
        resets.insert(
            (ModeId(0), EventId(0)),
            ResetMap {
                source: ModeId(0),
                event: EventId(0),
                target: ModeId(0),
                matrix: DMatrix::zeros(n, n),
            },
        );
        LinearHybridSystem {
            mode_names: vec!["q".into()],
            subsystems: vec![Subsystem::new(a, b, c)],
            event_names: vec!["e".into()],
            output_names: vec!["o".into()],
            delta: vec![vec![Some(ModeId(0))]],
            lambda: vec![Some(OutputId(0))],
            resets,
            initial: InitialState {
                mode: ModeId(0),
                x0: DVector::zeros(n),
            },
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn identity_reachability_diagonal_observability() {
        // 𝒫 = I, 𝒬 = Λ² gives S = Λ^{1/2}.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let model = single_mode(a, DMatrix::from_element(2, 1, 0.1), DMatrix::from_element(1, 2, 0.1));
        let p = GramianFamily::new(GramianKind::Reachability, vec![DMatrix::identity(2, 2)], 1e-6);
        let q = GramianFamily::new(
            GramianKind::Observability,
            vec![DMatrix::from_diagonal(&DVector::from_vec(vec![9.0, 4.0]))],
            1e-6,
        );
        let bal = balance(&model, &p, &q).unwrap();
        assert!((bal.sigma[0][0] - 3.0).abs() < 1e-12);
        assert!((bal.sigma[0][1] - 2.0).abs() < 1e-12);
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![3f64.sqrt(), 2f64.sqrt()]));
        assert!(rel_diff(&bal.transforms[0].s, &expect) < 1e-12);
    }

    #[test]
    fn orders_are_bounded() {
        let model = single_mode(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        );
        assert!(ReductionOrders::new(&model, vec![0]).is_err());
        assert!(ReductionOrders::new(&model, vec![2]).is_err());
        assert!(ReductionOrders::new(&model, vec![1, 1]).is_err());
        assert!(ReductionOrders::new(&model, vec![1]).is_ok());
    }

    #[test]
    fn one_state_reduction_is_identity_up_to_scaling() {
        let model = single_mode(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        );
        let red = reduce(&model, &ReductionOrders::full(&model), &GramianSource::default()).unwrap();
        assert_eq!(red.reduced.bound, 0.0);
        let (a, b, c) = (
            &red.reduced.model.subsystems[0].a,
            &red.reduced.model.subsystems[0].b,
            &red.reduced.model.subsystems[0].c,
        );
        assert!((a[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((b[(0, 0)] * c[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(red.reduced.is_verified());
    }

    #[test]
    fn singular_gramian_product_is_ill_conditioned() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let model = single_mode(a, DMatrix::from_element(2, 1, 0.0), DMatrix::from_element(1, 2, 0.0));
        let p = GramianFamily::new(GramianKind::Reachability, vec![DMatrix::identity(2, 2)], 1e-6);
        let q = GramianFamily::new(
            GramianKind::Observability,
            vec![DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-22]))],
            1e-30,
        );
        assert!(matches!(
            balance(&model, &p, &q),
            Err(Error::IllConditionedBalancing { .. })
        ));
    }
}
