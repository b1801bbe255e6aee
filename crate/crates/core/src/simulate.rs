//! Input-to-state and input-output maps of a linear hybrid system.
//!
//! Between events every subsystem is LTI, so the continuous state is
//! integrated on a uniform per-interval grid that always lands exactly on the
//! event times. At each event the reset matrix is applied to the left limit.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::mat_exp;
use crate::model::{discrete_trajectory, EventId, LinearHybridSystem, ModeId, OutputId, Subsystem, TimedEventSequence};

/// Continuous input `u : [0, T] → ℝ^m`.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSignal {
    Zero { dim: usize },
    Constant(DVector<f64>),
    /// Scalar `a·sin(ωt)·e^{−t/τ₁} + b·e^{−t/τ₂}`.
    DampedSine {
        amplitude: f64,
        frequency: f64,
        decay: f64,
        offset: f64,
        offset_decay: f64,
    },
    /// Zero-order hold: `values[i]` on `[breaks[i], breaks[i+1])`, the last
    /// value persisting. `breaks` is strictly increasing and starts at 0.
    PiecewiseConstant {
        breaks: Vec<f64>,
        values: Vec<DVector<f64>>,
    },
}

impl InputSignal {
    /// `u(t) = 5 sin(20t) e^{−t/5} + 0.5 e^{−t/2}`.
    pub fn damped_sine_example() -> Self {
        InputSignal::DampedSine {
            amplitude: 5.0,
            frequency: 20.0,
            decay: 5.0,
            offset: 0.5,
            offset_decay: 2.0,
        }
    }

    pub fn piecewise_constant(breaks: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != values.len() {
            return Err(Error::Format(
                "piecewise-constant input needs one value per break".into(),
            ));
        }
        if breaks[0] != 0.0 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Format(
                "breaks must start at 0 and be strictly increasing".into(),
            ));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Format("inconsistent or non-finite input values".into()));
        }
        Ok(InputSignal::PiecewiseConstant { breaks, values })
    }

    pub fn dim(&self) -> usize {
        match self {
            InputSignal::Zero { dim } => *dim,
            InputSignal::Constant(v) => v.len(),
            InputSignal::DampedSine { .. } => 1,
            InputSignal::PiecewiseConstant { values, .. } => values[0].len(),
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        !matches!(self, InputSignal::DampedSine { .. })
    }

    /// Right-continuous value `u(t⁺)`.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            InputSignal::PiecewiseConstant { breaks, values } => {
                let i = breaks.partition_point(|&b| b <= t).saturating_sub(1);
                values[i].clone()
            }
            _ => self.eval_smooth(t),
        }
    }

    /// Left limit `u(t⁻)`; equals [`eval`](Self::eval) for continuous signals.
    pub fn eval_left(&self, t: f64) -> DVector<f64> {
        match self {
            InputSignal::PiecewiseConstant { breaks, values } => {
                let i = breaks.partition_point(|&b| b < t).saturating_sub(1);
                values[i].clone()
            }
            _ => self.eval_smooth(t),
        }
    }

    fn eval_smooth(&self, t: f64) -> DVector<f64> {
        match self {
            InputSignal::Zero { dim } => DVector::zeros(*dim),
            InputSignal::Constant(v) => v.clone(),
            InputSignal::DampedSine {
                amplitude,
                frequency,
                decay,
                offset,
                offset_decay,
            } => DVector::from_element(
                1,
                amplitude * (frequency * t).sin() * (-t / decay).exp()
                    + offset * (-t / offset_decay).exp(),
            ),
            InputSignal::PiecewiseConstant { .. } => unreachable!(),
        }
    }

    /// `α·u`.
    pub fn scaled(&self, alpha: f64) -> Self {
        match self {
            InputSignal::Zero { dim } => InputSignal::Zero { dim: *dim },
            InputSignal::Constant(v) => InputSignal::Constant(v * alpha),
            InputSignal::DampedSine {
                amplitude,
                frequency,
                decay,
                offset,
                offset_decay,
            } => InputSignal::DampedSine {
                amplitude: amplitude * alpha,
                frequency: *frequency,
                decay: *decay,
                offset: offset * alpha,
                offset_decay: *offset_decay,
            },
            InputSignal::PiecewiseConstant { breaks, values } => InputSignal::PiecewiseConstant {
                breaks: breaks.clone(),
                values: values.iter().map(|v| v * alpha).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub max_step: f64,
    pub overflow_norm: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            max_step: 1e-3,
            overflow_norm: 1e12,
        }
    }
}

/// Samples on one inter-event interval `[start, end]`. The last sample is the
/// left limit at `end`; the post-reset state opens the next segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub mode: ModeId,
    pub output: OutputId,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
}

impl Segment {
    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("segment has at least one sample")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub event: EventId,
    pub from: ModeId,
    pub to: ModeId,
    /// `x(T⁻)`.
    pub pre: DVector<f64>,
    /// `x(T) = M x(T⁻)`.
    pub post: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrajectory {
    pub segments: Vec<Segment>,
    pub events: Vec<EventRecord>,
}

impl HybridTrajectory {
    pub fn num_samples(&self) -> usize {
        self.segments.iter().map(|s| s.times.len()).sum()
    }

    /// Largest Euclidean state difference over matching samples.
    pub fn max_state_deviation(&self, other: &HybridTrajectory) -> f64 {
        self.segments
            .iter()
            .zip(&other.segments)
            .flat_map(|(a, b)| a.states.iter().zip(&b.states))
            .map(|(x, z)| (x - z).norm())
            .fold(0.0, f64::max)
    }

    /// Largest output difference over matching samples.
    pub fn max_output_deviation(&self, other: &HybridTrajectory) -> f64 {
        self.segments
            .iter()
            .zip(&other.segments)
            .flat_map(|(a, b)| a.outputs.iter().zip(&b.outputs))
            .map(|(x, z)| (x - z).norm())
            .fold(0.0, f64::max)
    }

    /// Discrete output signals agree sample by sample.
    pub fn same_discrete_outputs(&self, other: &HybridTrajectory) -> bool {
        self.segments.len() == other.segments.len()
            && self
                .segments
                .iter()
                .zip(&other.segments)
                .all(|(a, b)| a.output == b.output && a.mode == b.mode && a.times == b.times)
    }
}

/// `0` followed by the distinct event arrival times: the breaks of an input
/// that is constant between events.
pub fn discrete_arrival_breaks(w: &TimedEventSequence) -> Vec<f64> {
    let mut breaks = vec![0.0];
    for (_, t) in w.arrivals() {
        if t > *breaks.last().expect("non-empty") {
            breaks.push(t);
        }
    }
    breaks
}

trait Stepper {
    fn begin(&mut self, sys: &Subsystem, h: f64) -> Result<()>;
    fn step(&mut self, sys: &Subsystem, u: &InputSignal, t0: f64, t1: f64, x: &DVector<f64>) -> DVector<f64>;
}

struct Rk4;

impl Stepper for Rk4 {
    fn begin(&mut self, _: &Subsystem, _: f64) -> Result<()> {
        Ok(())
    }

    fn step(&mut self, sys: &Subsystem, u: &InputSignal, t0: f64, t1: f64, x: &DVector<f64>) -> DVector<f64> {
        let h = t1 - t0;
        let f = |x: &DVector<f64>, u: &DVector<f64>| &sys.a * x + &sys.b * u;
        let u0 = u.eval(t0);
        let um = u.eval(t0 + 0.5 * h);
        let u1 = u.eval_left(t1);
        let k1 = f(x, &u0);
        let k2 = f(&(x + &k1 * (0.5 * h)), &um);
        let k3 = f(&(x + &k2 * (0.5 * h)), &um);
        let k4 = f(&(x + &k3 * h), &u1);
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }
}

/// Exact zero-order-hold propagation: `x⁺ = e^{Ah}x + (∫₀ʰ e^{As}ds) B u`.
#[derive(Default)]
struct ExactZoh {
    phi: DMatrix<f64>,
    gamma: DMatrix<f64>,
}

impl Stepper for ExactZoh {
    fn begin(&mut self, sys: &Subsystem, h: f64) -> Result<()> {
        let n = sys.state_dim();
        let m = sys.input_dim();
        let mut aug = DMatrix::<f64>::zeros(n + m, n + m);
        aug.view_mut((0, 0), (n, n)).copy_from(&sys.a);
        aug.view_mut((0, n), (n, m)).copy_from(&sys.b);
        let e = mat_exp(&aug, h)?;
        self.phi = e.view((0, 0), (n, n)).into_owned();
        self.gamma = e.view((0, n), (n, m)).into_owned();
        Ok(())
    }

    fn step(&mut self, _: &Subsystem, u: &InputSignal, t0: f64, _t1: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.phi * x + &self.gamma * u.eval(t0)
    }
}

/// Integrates the hybrid system with classical RK4.
pub fn simulate(
    model: &LinearHybridSystem,
    u: &InputSignal,
    w: &TimedEventSequence,
    cfg: &SimConfig,
) -> Result<HybridTrajectory> {
    integrate(model, u, w, cfg, &mut Rk4)
}

/// Matrix-exponential propagation on the same grid as [`simulate`]; exact for
/// inputs that are piecewise constant with breaks on the grid.
pub fn simulate_exact(
    model: &LinearHybridSystem,
    u: &InputSignal,
    w: &TimedEventSequence,
    cfg: &SimConfig,
) -> Result<HybridTrajectory> {
    if !u.is_piecewise_constant() {
        return Err(Error::NotPiecewiseConstant);
    }
    integrate(model, u, w, cfg, &mut ExactZoh::default())
}

fn integrate<S: Stepper>(
    model: &LinearHybridSystem,
    u: &InputSignal,
    w: &TimedEventSequence,
    cfg: &SimConfig,
    stepper: &mut S,
) -> Result<HybridTrajectory> {
    model.ensure_valid()?;
    if !(cfg.max_step > 0.0) {
        return Err(Error::Format(format!("max_step must be positive, got {}", cfg.max_step)));
    }
    if u.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} channels, model expects {}",
            u.dim(),
            model.input_dim()
        )));
    }

    let intervals = discrete_trajectory(model, w)?;
    let mut segments: Vec<Segment> = Vec::with_capacity(intervals.len());
    let mut events = Vec::with_capacity(intervals.len().saturating_sub(1));
    let mut x = model.initial.x0.clone();

    for iv in &intervals {
        let sys = model.subsystem(iv.mode);
        if let (Some(event), Some(prev)) = (iv.entered_by, segments.last()) {
            let reset = &model.resets[&(prev.mode, event)];
            let post = &reset.matrix * &x;
            events.push(EventRecord {
                time: iv.start,
                event,
                from: prev.mode,
                to: iv.mode,
                pre: x.clone(),
                post: post.clone(),
            });
            x = post;
        }

        let span = iv.end - iv.start;
        let steps = if span > 0.0 {
            (span / cfg.max_step).ceil().max(1.0) as usize
        } else {
            0
        };
        let mut times = Vec::with_capacity(steps + 1);
        let mut states = Vec::with_capacity(steps + 1);
        times.push(iv.start);
        states.push(x.clone());
        if steps > 0 {
            let h = span / steps as f64;
            stepper.begin(sys, h)?;
            for j in 0..steps {
                let t0 = times[j];
                let t1 = if j + 1 == steps {
                    iv.end
                } else {
                    iv.start + (j + 1) as f64 * h
                };
                x = stepper.step(sys, u, t0, t1, &x);
                let norm = x.norm();
                if !(norm <= cfg.overflow_norm) {
                    return Err(Error::Diverged {
                        time: t1,
                        limit: cfg.overflow_norm,
                    });
                }
                times.push(t1);
                states.push(x.clone());
            }
        }
        let outputs = states.iter().map(|s| &sys.c * s).collect();
        segments.push(Segment {
            mode: iv.mode,
            output: iv.output,
            times,
            states,
            outputs,
        });
    }
    Ok(HybridTrajectory { segments, events })
}

/// Squared-norm samples on one interval. `right[j]` is the integrand just
/// after `times[j]`, `left[j]` just before it, so jumps on grid points are
/// integrated exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPiece {
    pub times: Vec<f64>,
    pub right: Vec<f64>,
    pub left: Vec<f64>,
}

impl SampledPiece {
    pub fn continuous(times: Vec<f64>, values: Vec<f64>) -> Self {
        Self {
            times,
            left: values.clone(),
            right: values,
        }
    }

    fn trapezoid(&self, stride: usize) -> f64 {
        let n = self.times.len();
        let mut s = 0.0;
        let mut j = 0;
        while j + stride < n {
            let k = j + stride;
            s += 0.5 * (self.right[j] + self.left[k]) * (self.times[k] - self.times[j]);
            j = k;
        }
        // Odd leftovers on the coarse grid use the fine rule.
        while j + 1 < n {
            s += 0.5 * (self.right[j] + self.left[j + 1]) * (self.times[j + 1] - self.times[j]);
            j += 1;
        }
        s
    }
}

/// L2 norm of a sampled signal over the union of its pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Report {
    /// Composite trapezoid of `‖v‖²`.
    pub squared: f64,
    /// `|I_h − I_{2h}| / 3` from grid halving.
    pub squared_error: f64,
    /// Richardson-extrapolated `‖v‖²`.
    pub extrapolated_squared: f64,
    pub rule: &'static str,
}

impl L2Report {
    pub fn value(&self) -> f64 {
        self.squared.max(0.0).sqrt()
    }

    pub fn extrapolated(&self) -> f64 {
        self.extrapolated_squared.max(0.0).sqrt()
    }

    /// First-order error estimate on [`value`](Self::value).
    pub fn estimated_error(&self) -> f64 {
        let v = self.value();
        if v > 0.0 {
            self.squared_error / (2.0 * v)
        } else {
            self.squared_error.sqrt()
        }
    }
}

/// Per-piece composite trapezoid, never integrating across a piece boundary.
pub fn l2_norm(pieces: &[SampledPiece]) -> L2Report {
    let fine: f64 = pieces.iter().map(|p| p.trapezoid(1)).sum();
    let coarse: f64 = pieces.iter().map(|p| p.trapezoid(2)).sum();
    let diff = (fine - coarse) / 3.0;
    L2Report {
        squared: fine,
        squared_error: diff.abs(),
        extrapolated_squared: fine + diff,
        rule: "composite-trapezoid/richardson",
    }
}

/// `‖y‖_{L2}` over the trajectory.
pub fn output_l2(traj: &HybridTrajectory) -> L2Report {
    let pieces: Vec<_> = traj
        .segments
        .iter()
        .map(|s| SampledPiece::continuous(s.times.clone(), s.outputs.iter().map(|y| y.norm_squared()).collect()))
        .collect();
    l2_norm(&pieces)
}

/// `‖y − ŷ‖_{L2}` for two trajectories on the same grid.
pub fn output_error_l2(traj: &HybridTrajectory, other: &HybridTrajectory) -> Result<L2Report> {
    if !traj.same_discrete_outputs(other) {
        return Err(Error::DimensionMismatch(
            "trajectories do not share a grid and discrete trajectory".into(),
        ));
    }
    let pieces: Vec<_> = traj
        .segments
        .iter()
        .zip(&other.segments)
        .map(|(a, b)| {
            let vals = a
                .outputs
                .iter()
                .zip(&b.outputs)
                .map(|(y, z)| (y - z).norm_squared())
                .collect();
            SampledPiece::continuous(a.times.clone(), vals)
        })
        .collect();
    Ok(l2_norm(&pieces))
}

fn input_pieces(u: &InputSignal, traj: &HybridTrajectory) -> Vec<SampledPiece> {
    traj.segments
        .iter()
        .map(|s| SampledPiece {
            times: s.times.clone(),
            right: s.times.iter().map(|&t| u.eval(t).norm_squared()).collect(),
            left: s.times.iter().map(|&t| u.eval_left(t).norm_squared()).collect(),
        })
        .collect()
}

/// `‖u‖_{L2}` on the trajectory's grid.
pub fn input_l2(u: &InputSignal, traj: &HybridTrajectory) -> L2Report {
    l2_norm(&input_pieces(u, traj))
}

/// `∫₀ᵗ ‖u‖²` at every sample, segment by segment.
pub fn cumulative_input_energy(u: &InputSignal, traj: &HybridTrajectory) -> Vec<Vec<f64>> {
    let mut acc = 0.0;
    input_pieces(u, traj)
        .iter()
        .map(|p| {
            let mut out = Vec::with_capacity(p.times.len());
            out.push(acc);
            for j in 0..p.times.len().saturating_sub(1) {
                acc += 0.5 * (p.right[j] + p.left[j + 1]) * (p.times[j + 1] - p.times[j]);
                out.push(acc);
            }
            out
        })
        .collect()
}

/// Writes `time,mode,o,x1..xN,y1..yp`, padding unused state columns with
/// empty fields. Event times appear twice: left limit, then post-reset.
pub fn write_trajectory_csv<W: Write>(model: &LinearHybridSystem, traj: &HybridTrajectory, mut out: W) -> Result<()> {
    let nmax = model.max_state_dim();
    let p = model.output_dim();
    let mut header = vec!["time".to_string(), "mode".into(), "o".into()];
    header.extend((1..=nmax).map(|i| format!("x{i}")));
    header.extend((1..=p).map(|i| format!("y{i}")));
    writeln!(out, "{}", header.join(","))?;
    for seg in &traj.segments {
        for ((t, x), y) in seg.times.iter().zip(&seg.states).zip(&seg.outputs) {
            let mut row = vec![
                t.to_string(),
                model.mode_name(seg.mode).to_string(),
                model.output_name(seg.output).to_string(),
            ];
            row.extend((0..nmax).map(|i| x.get(i).map_or(String::new(), |v| v.to_string())));
            row.extend(y.iter().map(|v| v.to_string()));
            writeln!(out, "{}", row.join(","))?;
        }
    }
    Ok(())
}
