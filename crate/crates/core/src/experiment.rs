//! Simulation-based comparisons, the bundled example report, and seeded
//! random generators for models, schedules and inputs.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::balance::{balance, truncate, BalancedRealization, ReducedModel, ReductionOrders};
use crate::error::Result;
use crate::example;
use crate::gramian::{check_gramians_with, GramianFamily};
use crate::model::{EventId, InitialState, LinearHybridSystem, ModeId, OutputId, ResetMap, Subsystem, TimedEventSequence};
use crate::simulate::{
    discrete_arrival_breaks, input_l2, output_error_l2, simulate, HybridTrajectory, InputSignal, L2Report, SimConfig,
};

/// Quadrature allowance added to the right-hand side of the bound check.
pub const QUADRATURE_BUDGET: f64 = 1e-3;

/// Output error of a reduced model against the full one for one `(u, w)`.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub traj: HybridTrajectory,
    pub traj_hat: HybridTrajectory,
    pub error: L2Report,
    pub input: L2Report,
    pub bound: f64,
    /// `ô ≡ o` on the shared grid.
    pub outputs_match: bool,
}

impl Comparison {
    /// `bound·‖u‖ + budget − ‖y − ŷ‖`; non-negative when the bound holds.
    pub fn slack(&self, budget: f64) -> f64 {
        self.bound * self.input.value() + budget - self.error.value()
    }

    pub fn holds(&self, budget: f64) -> bool {
        self.slack(budget) >= 0.0 && self.outputs_match
    }
}

/// Simulates both models with the same input and events. The bound is only
/// meaningful for zero initial states.
pub fn compare(
    full: &LinearHybridSystem,
    reduced: &LinearHybridSystem,
    bound: f64,
    u: &InputSignal,
    w: &TimedEventSequence,
    cfg: &SimConfig,
) -> Result<Comparison> {
    let traj = simulate(full, u, w, cfg)?;
    let traj_hat = simulate(reduced, u, w, cfg)?;
    let outputs_match = traj.same_discrete_outputs(&traj_hat);
    let error = output_error_l2(&traj, &traj_hat)?;
    let input = input_l2(u, &traj);
    Ok(Comparison {
        traj,
        traj_hat,
        error,
        input,
        bound,
        outputs_match,
    })
}

/// Copy of `model` started from the zero state.
pub fn at_rest(model: &LinearHybridSystem) -> LinearHybridSystem {
    let mut m = model.clone();
    m.initial.x0 = DVector::zeros(m.state_dim(m.initial.mode));
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for ReportLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

#[derive(Debug, Clone)]
pub struct ExampleReport {
    pub orders: Vec<usize>,
    pub balanced: BalancedRealization,
    pub reduced: ReducedModel,
    pub comparison: Comparison,
    pub lines: Vec<ReportLine>,
}

impl ExampleReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }
}

impl fmt::Display for ExampleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "orders {:?}", self.orders)?;
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

fn line(name: &str, pass: bool, detail: String) -> ReportLine {
    ReportLine {
        name: name.into(),
        pass,
        detail,
    }
}

/// Relative tolerance for singular values compared against the reference.
pub const SIGMA_TOLERANCE: f64 = 5e-3;
/// Jump slack used when certifying the four-decimal reference Gramians.
pub const REFERENCE_JUMP_SLACK: f64 = 1e-6;

/// Runs the whole pipeline on the bundled example with the reference
/// Gramians and the given orders.
pub fn run_example(orders: &[usize], cfg: &SimConfig) -> Result<ExampleReport> {
    let model = example::model(example::DEFAULT_TAU);
    let obs = example::reference_observability();
    let reach = example::reference_reachability();
    let mut lines = Vec::new();

    for fam in [&obs, &reach] {
        let r = check_gramians_with(&model, fam, 0.0, REFERENCE_JUMP_SLACK)?;
        let ok = r.worst_lyapunov() < 0.0 && r.worst_jump() <= REFERENCE_JUMP_SLACK && r.min_gramian_eigenvalue() > 0.0;
        lines.push(line(
            &format!("reference {} Gramians certify", fam.kind),
            ok,
            format!(
                "worst Lyapunov λmax {:.4e}, worst jump λmax {:.4e}",
                r.worst_lyapunov(),
                r.worst_jump()
            ),
        ));
    }

    let balanced = balance(&model, &reach, &obs)?;
    let mut worst = 0.0f64;
    for (got, want) in balanced.sigma.iter().zip(example::reference_sigma()) {
        for (g, w) in got.iter().zip(want) {
            worst = worst.max((g - w).abs() / w);
        }
    }
    lines.push(line(
        "singular values match reference",
        worst <= SIGMA_TOLERANCE,
        format!("max relative deviation {worst:.3e} (tolerance {SIGMA_TOLERANCE:e})"),
    ));
    lines.push(line(
        "balanced Λ is a Gramian of both kinds",
        balanced.observability.is_ok() && balanced.reachability.is_ok(),
        format!(
            "observability λmax {:.4e}, reachability λmax {:.4e}",
            balanced.observability.worst_lyapunov(),
            balanced.reachability.worst_lyapunov()
        ),
    ));

    let orders = ReductionOrders::new(&model, orders.to_vec())?;
    let reduced = truncate(&balanced, &orders)?;
    lines.push(line(
        "reduced Λ̂ is a Gramian of both kinds",
        reduced.is_verified(),
        format!(
            "observability λmax {:.4e}, reachability λmax {:.4e}",
            reduced.observability.worst_lyapunov(),
            reduced.reachability.worst_lyapunov()
        ),
    ));

    let reference_bound = 2.0
        * example::reference_sigma()
            .iter()
            .enumerate()
            .map(|(q, s)| s[orders.get(ModeId(q))..].iter().sum::<f64>())
            .sum::<f64>();
    let expected = match orders.as_slice() {
        o if o == example::ORDERS_A => Some(example::BOUND_A),
        o if o == example::ORDERS_B => Some(example::BOUND_B),
        _ => None,
    };
    let bound_ok = (reduced.bound - reference_bound).abs() <= SIGMA_TOLERANCE * reference_bound.max(1e-12)
        && expected.is_none_or(|e| (reference_bound - e).abs() < 1e-9);
    lines.push(line(
        "error bound",
        bound_ok,
        format!(
            "computed {:.4}, from reference σ {:.4}{}",
            reduced.bound,
            reference_bound,
            expected.map(|e| format!(", expected {e}")).unwrap_or_default()
        ),
    ));

    let comparison = compare(
        &at_rest(&model),
        &reduced.model,
        reduced.bound,
        &example::input(),
        &example::schedule(),
        cfg,
    )?;
    lines.push(line(
        "discrete outputs agree",
        comparison.outputs_match,
        format!("{} segments", comparison.traj.segments.len()),
    ));
    lines.push(line(
        "output error within bound",
        comparison.slack(QUADRATURE_BUDGET) >= 0.0,
        format!(
            "‖y−ŷ‖ = {:.6} ≤ {:.4}·‖u‖ = {:.6} (‖u‖ = {:.6})",
            comparison.error.value(),
            comparison.bound,
            comparison.bound * comparison.input.value(),
            comparison.input.value()
        ),
    ));

    Ok(ExampleReport {
        orders: orders.as_slice().to_vec(),
        balanced,
        reduced,
        comparison,
        lines,
    })
}

/// Shape of randomly generated models.
#[derive(Debug, Clone)]
pub struct RandomModelConfig {
    pub modes: RangeInclusive<usize>,
    pub states: RangeInclusive<usize>,
    pub inputs: RangeInclusive<usize>,
    pub outputs: RangeInclusive<usize>,
    pub events: RangeInclusive<usize>,
    /// Spectral-norm cap of every reset map.
    pub reset_norm: f64,
    /// Eigenvalues of every `A_q` have real part at most `−decay`.
    pub decay: f64,
}

impl Default for RandomModelConfig {
    fn default() -> Self {
        Self {
            modes: 1..=3,
            states: 1..=3,
            inputs: 1..=2,
            outputs: 1..=2,
            events: 1..=2,
            reset_norm: 0.5,
            decay: 0.3,
        }
    }
}

fn uniform_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

/// `Z − sI` with `s` past the Gershgorin abscissa of `Z`, so every
/// eigenvalue has real part at most `−decay`.
fn random_stable(rng: &mut impl Rng, n: usize, decay: f64) -> DMatrix<f64> {
    let z = uniform_matrix(rng, n, n) * rng.gen_range(0.5..2.0);
    let abscissa = (0..n)
        .map(|i| z[(i, i)] + (0..n).filter(|&j| j != i).map(|j| z[(i, j)].abs()).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = abscissa.max(0.0) + decay + rng.gen_range(0.0..1.5);
    z - DMatrix::identity(n, n) * shift
}

/// Random total automaton with Hurwitz modes and contracting resets.
pub fn random_model(rng: &mut impl Rng, cfg: &RandomModelConfig) -> LinearHybridSystem {
    let nq = rng.gen_range(cfg.modes.clone());
    let ne = rng.gen_range(cfg.events.clone());
    let m = rng.gen_range(cfg.inputs.clone());
    let p = rng.gen_range(cfg.outputs.clone());
    let dims: Vec<usize> = (0..nq).map(|_| rng.gen_range(cfg.states.clone())).collect();
    let subsystems = dims
        .iter()
        .map(|&n| {
            Subsystem::new(
                random_stable(rng, n, cfg.decay),
                uniform_matrix(rng, n, m),
                uniform_matrix(rng, p, n),
            )
        })
        .collect();
    let no = rng.gen_range(1..=nq);
    let mut delta = vec![vec![None; ne]; nq];
    let mut resets = BTreeMap::new();
    for q in 0..nq {
        for e in 0..ne {
            let t = rng.gen_range(0..nq);
            delta[q][e] = Some(ModeId(t));
            let raw = uniform_matrix(rng, dims[t], dims[q]);
            let norm = raw.clone().svd(false, false).singular_values.max().max(1e-12);
            let scale = rng.gen_range(0.0..cfg.reset_norm) / norm;
            resets.insert(
                (ModeId(q), EventId(e)),
                ResetMap {
                    source: ModeId(q),
                    event: EventId(e),
                    target: ModeId(t),
                    matrix: raw * scale,
                },
            );
        }
    }
    let q0 = rng.gen_range(0..nq);
    LinearHybridSystem {
        mode_names: (1..=nq).map(|i| format!("q{i}")).collect(),
        subsystems,
        event_names: (0..ne).map(|e| format!("e{e}")).collect(),
        output_names: (1..=no).map(|i| format!("o{i}")).collect(),
        delta,
        lambda: (0..nq).map(|q| Some(OutputId(q % no))).collect(),
        resets,
        initial: InitialState {
            mode: ModeId(q0),
            x0: DVector::zeros(dims[q0]),
        },
        metadata: BTreeMap::new(),
    }
}

/// Random events with dwell times in `[0, max_dwell]`; about one in ten is a
/// zero-dwell event.
pub fn random_schedule(
    rng: &mut impl Rng,
    model: &LinearHybridSystem,
    horizon: f64,
    max_dwell: f64,
) -> TimedEventSequence {
    let mut entries = Vec::new();
    let mut t = 0.0;
    while t < horizon {
        let dwell = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..max_dwell) };
        t += dwell;
        entries.push((EventId(rng.gen_range(0..model.num_events())), dwell));
    }
    TimedEventSequence::new(entries, horizon).expect("generated schedule is valid")
}

/// Piecewise-constant input switching at the event arrival times (plus 0),
/// so it is constant on every grid step.
pub fn random_aligned_input(rng: &mut impl Rng, dim: usize, w: &TimedEventSequence, amplitude: f64) -> InputSignal {
    let breaks = discrete_arrival_breaks(w);
    let values = breaks
        .iter()
        .map(|_| DVector::from_fn(dim, |_, _| rng.gen_range(-amplitude..amplitude)))
        .collect();
    InputSignal::piecewise_constant(breaks, values).expect("breaks are increasing")
}

/// Scalar damped sinusoid with random parameters, or a random aligned
/// piecewise-constant input for multi-channel models.
pub fn random_input(rng: &mut impl Rng, dim: usize, w: &TimedEventSequence) -> InputSignal {
    if dim == 1 && rng.gen_bool(0.5) {
        InputSignal::DampedSine {
            amplitude: rng.gen_range(0.5..5.0),
            frequency: rng.gen_range(0.5..20.0),
            decay: rng.gen_range(0.5..5.0),
            offset: rng.gen_range(-1.0..1.0),
            offset_decay: rng.gen_range(0.5..5.0),
        }
    } else {
        random_aligned_input(rng, dim, w, 2.0)
    }
}

/// Random admissible orders, each `r_q` in `1..=n_q`.
pub fn random_orders(rng: &mut impl Rng, model: &LinearHybridSystem) -> ReductionOrders {
    let r = model.modes().map(|q| rng.gen_range(1..=model.state_dim(q))).collect();
    ReductionOrders::new(model, r).expect("orders within bounds")
}

/// Largest `xᵀ𝒫⁻¹x − ∫₀ᵗ‖u‖²` over all samples of a trajectory.
pub fn reachability_energy_excess(
    reach: &GramianFamily,
    u: &InputSignal,
    traj: &HybridTrajectory,
) -> Result<f64> {
    let inverses = reach
        .matrices
        .iter()
        .map(crate::linalg::inverse)
        .collect::<Result<Vec<_>>>()?;
    let energy = crate::simulate::cumulative_input_energy(u, traj);
    let mut worst = f64::NEG_INFINITY;
    for (seg, e) in traj.segments.iter().zip(&energy) {
        let pinv = &inverses[seg.mode.0];
        for (x, acc) in seg.states.iter().zip(e) {
            worst = worst.max(x.dot(&(pinv * x)) - acc);
        }
    }
    Ok(worst)
}

/// `∫‖y‖²` (extrapolated) against `x₀ᵀ𝒬x₀`: returns both.
pub fn observability_energy(obs: &GramianFamily, model: &LinearHybridSystem, traj: &HybridTrajectory) -> (f64, f64) {
    let x0 = &model.initial.x0;
    let bound = x0.dot(&(obs.get(model.initial.mode) * x0));
    let energy = crate::simulate::output_l2(traj).extrapolated_squared;
    (energy, bound)
}

/// A reproducible random model with matching schedule and input.
pub fn random_case(seed: u64, horizon: f64) -> (LinearHybridSystem, TimedEventSequence, InputSignal) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let model = random_model(&mut rng, &RandomModelConfig::default());
    let w = random_schedule(&mut rng, &model, horizon, 1.5);
    let u = random_input(&mut rng, model.input_dim(), &w);
    (model, w, u)
}
