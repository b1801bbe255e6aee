//! Linear hybrid systems: a Moore automaton driven by external events whose
//! discrete states each carry a linear subsystem, with linear reset maps on
//! every transition.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }
    };
}

id_type!(ModeId);
id_type!(EventId);
id_type!(OutputId);

/// `ẋ = A x + B u`, `y = C x` in one discrete state.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl Subsystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Self {
        Self { a, b, c }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }
}

/// Reset matrix applied when `event` fires in `source`, landing in `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetMap {
    pub source: ModeId,
    pub event: EventId,
    pub target: ModeId,
    /// `n_target × n_source`.
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub mode: ModeId,
    pub x0: DVector<f64>,
}

/// The full hybrid-system tuple.
///
/// Fields are public so that files can be loaded as-is and checked with
/// [`validate`]; every algorithm downstream calls [`LinearHybridSystem::ensure_valid`]
/// first.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHybridSystem {
    pub mode_names: Vec<String>,
    pub subsystems: Vec<Subsystem>,
    pub event_names: Vec<String>,
    pub output_names: Vec<String>,
    /// `delta[q][γ]`.
    pub delta: Vec<Vec<Option<ModeId>>>,
    /// `lambda[q]`.
    pub lambda: Vec<Option<OutputId>>,
    /// Keyed by `(source, event)`.
    pub resets: BTreeMap<(ModeId, EventId), ResetMap>,
    pub initial: InitialState,
    /// Free-form notes carried through serialization.
    pub metadata: BTreeMap<String, String>,
}

impl LinearHybridSystem {
    pub fn num_modes(&self) -> usize {
        self.subsystems.len()
    }

    pub fn num_events(&self) -> usize {
        self.event_names.len()
    }

    pub fn modes(&self) -> impl Iterator<Item = ModeId> {
        (0..self.subsystems.len()).map(ModeId)
    }

    pub fn events(&self) -> impl Iterator<Item = EventId> {
        (0..self.event_names.len()).map(EventId)
    }

    pub fn subsystem(&self, q: ModeId) -> &Subsystem {
        &self.subsystems[q.0]
    }

    pub fn state_dim(&self, q: ModeId) -> usize {
        self.subsystems[q.0].state_dim()
    }

    pub fn max_state_dim(&self) -> usize {
        self.subsystems.iter().map(Subsystem::state_dim).max().unwrap_or(0)
    }

    pub fn input_dim(&self) -> usize {
        self.subsystems.first().map_or(0, Subsystem::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.subsystems.first().map_or(0, Subsystem::output_dim)
    }

    pub fn mode_name(&self, q: ModeId) -> &str {
        &self.mode_names[q.0]
    }

    pub fn event_name(&self, e: EventId) -> &str {
        &self.event_names[e.0]
    }

    pub fn output_name(&self, o: OutputId) -> &str {
        &self.output_names[o.0]
    }

    pub fn mode_by_name(&self, name: &str) -> Result<ModeId> {
        lookup(&self.mode_names, name, "mode").map(ModeId)
    }

    pub fn event_by_name(&self, name: &str) -> Result<EventId> {
        lookup(&self.event_names, name, "event").map(EventId)
    }

    pub fn output_by_name(&self, name: &str) -> Result<OutputId> {
        lookup(&self.output_names, name, "output").map(OutputId)
    }

    pub fn readout(&self, q: ModeId) -> OutputId {
        self.lambda[q.0].expect("validated model has a total readout map")
    }

    /// Every reset map, ordered by `(source, event)`.
    pub fn transitions(&self) -> impl Iterator<Item = &ResetMap> {
        self.resets.values()
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate(self);
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    /// Same automaton, new continuous data. Used by the balancing and
    /// truncation steps; the caller is responsible for dimensional consistency.
    pub fn with_continuous_part(
        &self,
        subsystems: Vec<Subsystem>,
        resets: BTreeMap<(ModeId, EventId), ResetMap>,
        x0: DVector<f64>,
    ) -> Self {
        Self {
            subsystems,
            resets,
            initial: InitialState {
                mode: self.initial.mode,
                x0,
            },
            ..self.clone()
        }
    }
}

fn lookup(names: &[String], name: &str, kind: &'static str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::UnknownId {
            kind,
            name: name.to_string(),
        })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Dotted path to the offending field, e.g. `modes.q1.B`.
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "OK");
        }
        for v in &self.violations {
            writeln!(f, "{}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

/// Checks every structural invariant and reports all violations at once.
pub fn validate(model: &LinearHybridSystem) -> ValidationReport {
    let mut report = ValidationReport::default();
    let nq = model.subsystems.len();

    if nq == 0 {
        report.push("modes", "set of discrete states is empty");
    }
    if model.event_names.is_empty() {
        report.push("events", "set of discrete events is empty");
    }
    if model.output_names.is_empty() {
        report.push("outputs", "set of discrete outputs is empty");
    }
    if model.mode_names.len() != nq {
        report.push(
            "modes",
            format!("{} names for {nq} subsystems", model.mode_names.len()),
        );
    }
    check_unique(&model.mode_names, "modes", &mut report);
    check_unique(&model.event_names, "events", &mut report);
    check_unique(&model.output_names, "outputs", &mut report);

    let name = |q: usize| {
        model
            .mode_names
            .get(q)
            .cloned()
            .unwrap_or_else(|| format!("#{q}"))
    };
    let ename = |e: usize| {
        model
            .event_names
            .get(e)
            .cloned()
            .unwrap_or_else(|| format!("#{e}"))
    };

    let m = model.input_dim();
    let p = model.output_dim();
    for (q, sys) in model.subsystems.iter().enumerate() {
        let path = format!("modes.{}", name(q));
        let n = sys.a.nrows();
        if n == 0 {
            report.push(format!("{path}.A"), "state dimension must be positive");
        }
        if sys.a.ncols() != n {
            report.push(
                format!("{path}.A"),
                format!("dimension mismatch: A is {}x{}", n, sys.a.ncols()),
            );
        }
        if sys.b.nrows() != n {
            report.push(
                format!("{path}.B"),
                format!("dimension mismatch: B has {} rows, expected {n}", sys.b.nrows()),
            );
        }
        if sys.c.ncols() != n {
            report.push(
                format!("{path}.C"),
                format!("dimension mismatch: C has {} columns, expected {n}", sys.c.ncols()),
            );
        }
        if sys.b.ncols() != m {
            report.push(
                format!("{path}.B"),
                format!("dimension mismatch: {} inputs, other modes have {m}", sys.b.ncols()),
            );
        }
        if sys.c.nrows() != p {
            report.push(
                format!("{path}.C"),
                format!("dimension mismatch: {} outputs, other modes have {p}", sys.c.nrows()),
            );
        }
        if [&sys.a, &sys.b, &sys.c]
            .iter()
            .any(|mat| mat.iter().any(|x| !x.is_finite()))
        {
            report.push(path.clone(), "non-finite matrix entry");
        }
    }

    if model.delta.len() != nq {
        report.push("delta", format!("table has {} rows for {nq} modes", model.delta.len()));
    }
    for (q, row) in model.delta.iter().enumerate().take(nq) {
        for e in 0..model.event_names.len() {
            match row.get(e).copied().flatten() {
                None => report.push(
                    format!("delta.{},{}", name(q), ename(e)),
                    "transition map is not total",
                ),
                Some(t) if t.0 >= nq => report.push(
                    format!("delta.{},{}", name(q), ename(e)),
                    format!("target mode #{} does not exist", t.0),
                ),
                Some(_) => {}
            }
        }
    }

    if model.lambda.len() != nq {
        report.push("lambda", format!("readout has {} entries for {nq} modes", model.lambda.len()));
    }
    for (q, o) in model.lambda.iter().enumerate().take(nq) {
        match o {
            None => report.push(format!("lambda.{}", name(q)), "readout map is not total"),
            Some(o) if o.0 >= model.output_names.len() => report.push(
                format!("lambda.{}", name(q)),
                format!("output #{} does not exist", o.0),
            ),
            Some(_) => {}
        }
    }

    for q in 0..nq {
        for e in 0..model.event_names.len() {
            let target = model.delta.get(q).and_then(|r| r.get(e)).copied().flatten();
            let path = format!("resets.{},{}", name(q), ename(e));
            match model.resets.get(&(ModeId(q), EventId(e))) {
                None => report.push(path, "reset map absent"),
                Some(r) => {
                    if Some(r.target) != target {
                        report.push(path.clone(), "reset target disagrees with delta");
                    }
                    if r.target.0 < nq {
                        let rows = model.subsystems[r.target.0].state_dim();
                        let cols = model.subsystems[q].state_dim();
                        if r.matrix.nrows() != rows || r.matrix.ncols() != cols {
                            report.push(
                                path,
                                format!(
                                    "dimension mismatch: reset is {}x{}, expected {rows}x{cols}",
                                    r.matrix.nrows(),
                                    r.matrix.ncols()
                                ),
                            );
                        }
                    }
                }
            }
        }
    }
    for (q, e) in model.resets.keys() {
        if q.0 >= nq || e.0 >= model.event_names.len() {
            report.push(
                format!("resets.#{},#{}", q.0, e.0),
                "reset map refers to an undeclared mode or event",
            );
        }
    }

    let q0 = model.initial.mode;
    if q0.0 >= nq {
        report.push("initial.mode", "initial mode does not exist");
    } else if model.initial.x0.len() != model.subsystems[q0.0].state_dim() {
        report.push(
            "initial.x0",
            format!(
                "dimension mismatch: x0 has length {}, mode {} has {} states",
                model.initial.x0.len(),
                name(q0.0),
                model.subsystems[q0.0].state_dim()
            ),
        );
    }
    report
}

fn check_unique(names: &[String], path: &str, report: &mut ValidationReport) {
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            report.push(path, format!("duplicate identifier `{n}`"));
        }
    }
}

/// `(δ(q, γ), M_{δ(q,γ),γ,q})`.
pub fn step_mode(model: &LinearHybridSystem, q: ModeId, event: EventId) -> Result<(ModeId, &DMatrix<f64>)> {
    if q.0 >= model.num_modes() {
        return Err(Error::UnknownId {
            kind: "mode",
            name: format!("#{}", q.0),
        });
    }
    if event.0 >= model.num_events() {
        return Err(Error::UnknownId {
            kind: "event",
            name: format!("#{}", event.0),
        });
    }
    let target = model.delta[q.0][event.0];
    let reset = model.resets.get(&(q, event));
    match (target, reset) {
        (Some(t), Some(r)) if r.target == t => Ok((t, &r.matrix)),
        _ => {
            let mut report = ValidationReport::default();
            report.push(
                format!("resets.{},{}", model.mode_name(q), model.event_name(event)),
                "transition or reset map absent",
            );
            Err(Error::InvalidModel(report))
        }
    }
}

/// Finite prefix of a timed event sequence plus a horizon.
///
/// Each entry is `(event, dwell)` where `dwell` is the time elapsed since the
/// previous event (or since 0 for the first). Events whose arrival time
/// reaches the horizon are ignored; the last mode persists to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedEventSequence {
    entries: Vec<(EventId, f64)>,
    horizon: f64,
}

impl TimedEventSequence {
    pub fn new(entries: Vec<(EventId, f64)>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Format(format!("horizon must be positive, got {horizon}")));
        }
        if let Some((_, t)) = entries.iter().find(|(_, t)| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::Format(format!("dwell times must be finite and >= 0, got {t}")));
        }
        Ok(Self { entries, horizon })
    }

    /// No events: the initial mode persists on `[0, horizon)`.
    pub fn empty(horizon: f64) -> Result<Self> {
        Self::new(Vec::new(), horizon)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn entries(&self) -> &[(EventId, f64)] {
        &self.entries
    }

    /// `(event, arrival time T_i)` for every event strictly before the horizon.
    pub fn arrivals(&self) -> Vec<(EventId, f64)> {
        let mut t = 0.0;
        let mut out = Vec::with_capacity(self.entries.len());
        for &(e, dwell) in &self.entries {
            t += dwell;
            if t >= self.horizon {
                break;
            }
            out.push((e, t));
        }
        out
    }
}

/// One piece of the discrete trajectory. Zero-dwell events produce pieces
/// with `start == end`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteInterval {
    pub start: f64,
    pub end: f64,
    pub mode: ModeId,
    pub output: OutputId,
    /// Event whose arrival at `start` put the system in `mode`.
    pub entered_by: Option<EventId>,
}

/// Mode/output piecewise-constant signals on `[0, horizon)`.
pub fn discrete_trajectory(
    model: &LinearHybridSystem,
    w: &TimedEventSequence,
) -> Result<Vec<DiscreteInterval>> {
    let mut q = model.initial.mode;
    if q.0 >= model.num_modes() {
        return Err(Error::UnknownId {
            kind: "mode",
            name: format!("#{}", q.0),
        });
    }
    let mut start = 0.0;
    let mut entered_by = None;
    let mut out = Vec::new();
    for (e, t) in w.arrivals() {
        out.push(DiscreteInterval {
            start,
            end: t,
            mode: q,
            output: model.readout(q),
            entered_by,
        });
        q = step_mode(model, q, e)?.0;
        start = t;
        entered_by = Some(e);
    }
    out.push(DiscreteInterval {
        start,
        end: w.horizon(),
        mode: q,
        output: model.readout(q),
        entered_by,
    });
    Ok(out)
}
