//! JSON and CSV formats.
//!
//! Model files:
//!
//! ```json
//! {
//!   "modes":   { "q1": { "A": [[-1.0]], "B": [[1.0]], "C": [[1.0]] } },
//!   "events":  ["e"],
//!   "outputs": ["o1"],
//!   "delta":   { "q1,e": "q1" },
//!   "lambda":  { "q1": "o1" },
//!   "resets":  { "q1,e,q1": [[0.5]] },
//!   "initial": { "mode": "q1", "x0": [0.0] }
//! }
//! ```
//!
//! Reset keys read `target,event,source`. Matrices are row-major nested
//! arrays; numbers are written in shortest round-trip form, so every file
//! reads back bit-identically.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use crate::balance::ReducedModel;
use crate::error::{Error, Result};
use crate::gramian::{GramianFamily, GramianKind, LmiResidualReport, DEFAULT_EPSILON};
use crate::model::{EventId, InitialState, LinearHybridSystem, ModeId, OutputId, ResetMap, Subsystem, TimedEventSequence};
use crate::simulate::{HybridTrajectory, InputSignal};

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn matrix_to_json(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!(m[(i, j)])).collect()))
            .collect(),
    )
}

pub fn matrix_from_json(v: &Value, what: &str) -> Result<DMatrix<f64>> {
    let rows = v
        .as_array()
        .ok_or_else(|| fmt_err(format!("{what}: expected an array of rows")))?;
    if rows.is_empty() {
        return Err(fmt_err(format!("{what}: empty matrix")));
    }
    let mut data = Vec::new();
    let mut ncols = None;
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| fmt_err(format!("{what}: row {i} is not an array")))?;
        if *ncols.get_or_insert(row.len()) != row.len() {
            return Err(fmt_err(format!("{what}: ragged rows")));
        }
        for x in row {
            data.push(number(x, what)?);
        }
    }
    let ncols = ncols.unwrap_or(0);
    if ncols == 0 {
        return Err(fmt_err(format!("{what}: empty matrix")));
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &data))
}

fn number(x: &Value, what: &str) -> Result<f64> {
    x.as_f64()
        .filter(|v| v.is_finite())
        .ok_or_else(|| fmt_err(format!("{what}: `{x}` is not a finite number")))
}

pub fn vector_to_json(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|x| json!(x)).collect())
}

pub fn vector_from_json(v: &Value, what: &str) -> Result<DVector<f64>> {
    let items = v
        .as_array()
        .ok_or_else(|| fmt_err(format!("{what}: expected an array")))?;
    let data = items.iter().map(|x| number(x, what)).collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(data))
}

fn object<'a>(v: &'a Value, key: &str) -> Result<&'a Map<String, Value>> {
    v.get(key)
        .and_then(Value::as_object)
        .ok_or_else(|| fmt_err(format!("`{key}` must be an object")))
}

fn string_list(v: &Value, key: &str) -> Result<Vec<String>> {
    let arr = v
        .get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| fmt_err(format!("`{key}` must be an array of names")))?;
    arr.iter()
        .map(|x| {
            x.as_str()
                .map(str::to_string)
                .ok_or_else(|| fmt_err(format!("`{key}`: `{x}` is not a string")))
        })
        .collect()
}

fn check_name(name: &str, kind: &str) -> Result<()> {
    if name.is_empty() || name.contains(',') {
        return Err(fmt_err(format!("{kind} name `{name}` must be non-empty and free of commas")));
    }
    Ok(())
}

fn position(names: &[String], name: &str, kind: &'static str) -> Result<usize> {
    names.iter().position(|n| n == name).ok_or_else(|| Error::UnknownId {
        kind,
        name: name.to_string(),
    })
}

pub fn model_to_json(model: &LinearHybridSystem) -> Value {
    let mut modes = Map::new();
    for q in model.modes() {
        let s = model.subsystem(q);
        modes.insert(
            model.mode_name(q).to_string(),
            json!({ "A": matrix_to_json(&s.a), "B": matrix_to_json(&s.b), "C": matrix_to_json(&s.c) }),
        );
    }
    let mut delta = Map::new();
    for q in model.modes() {
        for e in model.events() {
            if let Some(t) = model.delta[q.0][e.0] {
                delta.insert(
                    format!("{},{}", model.mode_name(q), model.event_name(e)),
                    json!(model.mode_name(t)),
                );
            }
        }
    }
    let mut lambda = Map::new();
    for q in model.modes() {
        if let Some(o) = model.lambda[q.0] {
            lambda.insert(model.mode_name(q).to_string(), json!(model.output_name(o)));
        }
    }
    let mut resets = Map::new();
    for r in model.transitions() {
        resets.insert(
            format!(
                "{},{},{}",
                model.mode_name(r.target),
                model.event_name(r.event),
                model.mode_name(r.source)
            ),
            matrix_to_json(&r.matrix),
        );
    }
    let mut out = json!({
        "modes": modes,
        "events": model.event_names,
        "outputs": model.output_names,
        "delta": delta,
        "lambda": lambda,
        "resets": resets,
        "initial": {
            "mode": model.mode_name(model.initial.mode),
            "x0": vector_to_json(&model.initial.x0),
        },
    });
    if !model.metadata.is_empty() {
        out["metadata"] = json!(model.metadata);
    }
    out
}

/// Parses a model without validating it; run [`crate::model::validate`] on
/// the result for a full structural report.
pub fn model_from_json(v: &Value) -> Result<LinearHybridSystem> {
    let modes = object(v, "modes")?;
    let mut mode_names = Vec::new();
    let mut subsystems = Vec::new();
    for (name, body) in modes {
        check_name(name, "mode")?;
        let get = |k: &str| {
            body.get(k)
                .ok_or_else(|| fmt_err(format!("modes.{name}.{k} missing")))
                .and_then(|m| matrix_from_json(m, &format!("modes.{name}.{k}")))
        };
        mode_names.push(name.clone());
        subsystems.push(Subsystem::new(get("A")?, get("B")?, get("C")?));
    }
    let event_names = string_list(v, "events")?;
    let output_names = string_list(v, "outputs")?;
    for e in &event_names {
        check_name(e, "event")?;
    }

    let mut delta = vec![vec![None; event_names.len()]; mode_names.len()];
    for (key, target) in object(v, "delta")? {
        let (q, e) = key
            .split_once(',')
            .ok_or_else(|| fmt_err(format!("delta key `{key}` must read `mode,event`")))?;
        let t = target
            .as_str()
            .ok_or_else(|| fmt_err(format!("delta.{key} must be a mode name")))?;
        delta[position(&mode_names, q, "mode")?][position(&event_names, e, "event")?] =
            Some(ModeId(position(&mode_names, t, "mode")?));
    }

    let mut lambda = vec![None; mode_names.len()];
    for (q, o) in object(v, "lambda")? {
        let o = o
            .as_str()
            .ok_or_else(|| fmt_err(format!("lambda.{q} must be an output name")))?;
        lambda[position(&mode_names, q, "mode")?] = Some(OutputId(position(&output_names, o, "output")?));
    }

    let mut resets = BTreeMap::new();
    for (key, mat) in object(v, "resets")? {
        let parts: Vec<&str> = key.split(',').collect();
        let [t, e, s] = parts[..] else {
            return Err(fmt_err(format!("reset key `{key}` must read `target,event,source`")));
        };
        let source = ModeId(position(&mode_names, s, "mode")?);
        let event = EventId(position(&event_names, e, "event")?);
        let target = ModeId(position(&mode_names, t, "mode")?);
        resets.insert(
            (source, event),
            ResetMap {
                source,
                event,
                target,
                matrix: matrix_from_json(mat, &format!("resets.{key}"))?,
            },
        );
    }

    let init = v.get("initial").ok_or_else(|| fmt_err("`initial` missing"))?;
    let mode = init
        .get("mode")
        .and_then(Value::as_str)
        .ok_or_else(|| fmt_err("initial.mode must be a mode name"))?;
    let mode = ModeId(position(&mode_names, mode, "mode")?);
    let x0 = match init.get("x0") {
        Some(x) => vector_from_json(x, "initial.x0")?,
        None => DVector::zeros(subsystems[mode.0].state_dim()),
    };

    let metadata = match v.get("metadata") {
        Some(Value::Object(m)) => m
            .iter()
            .map(|(k, v)| (k.clone(), v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string())))
            .collect(),
        _ => BTreeMap::new(),
    };

    Ok(LinearHybridSystem {
        mode_names,
        subsystems,
        event_names,
        output_names,
        delta,
        lambda,
        resets,
        initial: InitialState { mode, x0 },
        metadata,
    })
}

pub fn parse_model(text: &str) -> Result<LinearHybridSystem> {
    model_from_json(&serde_json::from_str(text)?)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<LinearHybridSystem> {
    parse_model(&fs::read_to_string(path)?)
}

pub fn write_json(path: impl AsRef<Path>, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_model(path: impl AsRef<Path>, model: &LinearHybridSystem) -> Result<()> {
    write_json(path, &model_to_json(model))
}

pub fn gramians_to_json(model: &LinearHybridSystem, family: &GramianFamily) -> Value {
    let mut matrices = Map::new();
    for q in model.modes() {
        matrices.insert(model.mode_name(q).to_string(), matrix_to_json(family.get(q)));
    }
    json!({ "kind": family.kind, "epsilon": family.epsilon, "matrices": matrices })
}

/// Reads a Gramian family produced by this crate or by an external solver.
/// `epsilon` defaults to [`DEFAULT_EPSILON`]; the kind may be overridden
/// when the file omits it.
pub fn gramians_from_json(model: &LinearHybridSystem, v: &Value, kind: Option<GramianKind>) -> Result<GramianFamily> {
    let kind = match (v.get("kind").and_then(Value::as_str), kind) {
        (Some(k), None) => k.parse()?,
        (Some(k), Some(want)) => {
            let got: GramianKind = k.parse()?;
            if got != want {
                return Err(fmt_err(format!("file holds {got} Gramians, expected {want}")));
            }
            got
        }
        (None, Some(want)) => want,
        (None, None) => return Err(fmt_err("Gramian file has no `kind`")),
    };
    let epsilon = match v.get("epsilon") {
        Some(e) => number(e, "epsilon")?,
        None => DEFAULT_EPSILON,
    };
    let mats = object(v, "matrices")?;
    let mut matrices = Vec::with_capacity(model.num_modes());
    for q in model.modes() {
        let name = model.mode_name(q);
        let m = mats
            .get(name)
            .ok_or_else(|| fmt_err(format!("matrices.{name} missing")))?;
        matrices.push(matrix_from_json(m, &format!("matrices.{name}"))?);
    }
    if let Some(extra) = mats.keys().find(|k| model.mode_by_name(k).is_err()) {
        return Err(Error::UnknownId {
            kind: "mode",
            name: extra.clone(),
        });
    }
    Ok(GramianFamily::new(kind, matrices, epsilon))
}

pub fn import_gramians(model: &LinearHybridSystem, path: impl AsRef<Path>, kind: Option<GramianKind>) -> Result<GramianFamily> {
    let v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    gramians_from_json(model, &v, kind)
}

fn margins_json(r: &LmiResidualReport) -> Value {
    json!({
        "ok": r.is_ok(),
        "margin": r.margin,
        "worst_lyapunov_eigenvalue": r.worst_lyapunov(),
        "worst_jump_eigenvalue": if r.jumps.is_empty() { Value::Null } else { json!(r.worst_jump()) },
        "min_gramian_eigenvalue": r.min_gramian_eigenvalue(),
    })
}

/// Reduced model in the model schema plus a `provenance` block.
pub fn reduced_to_json(reduced: &ReducedModel) -> Value {
    let model = &reduced.model;
    let mut out = model_to_json(model);
    let mut orders = Map::new();
    let mut sigma = Map::new();
    let mut truncated = Map::new();
    for q in model.modes() {
        let name = model.mode_name(q).to_string();
        orders.insert(name.clone(), json!(reduced.orders.get(q)));
        sigma.insert(name.clone(), json!(reduced.sigma[q.0]));
        truncated.insert(name, json!(reduced.truncated_sigma(q)));
    }
    out["provenance"] = json!({
        "orders": orders,
        "sigma": sigma,
        "truncated_sigma": truncated,
        "bound": reduced.bound,
        "gramian_margins": {
            "observability": margins_json(&reduced.observability),
            "reachability": margins_json(&reduced.reachability),
        },
        "warnings": reduced.warnings,
    });
    out
}

/// Parses an input signal from a JSON object, a path to one, or a short form:
/// `example`, `zero[:m]`, `const:v1,v2,...`,
/// `damped:amplitude,frequency,decay,offset,offset_decay`.
pub fn parse_input_spec(spec: &str) -> Result<InputSignal> {
    let spec = spec.trim();
    if spec.starts_with('{') {
        return input_from_json(&serde_json::from_str(spec)?);
    }
    if Path::new(spec).is_file() {
        return input_from_json(&serde_json::from_str(&fs::read_to_string(spec)?)?);
    }
    let (head, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let nums = || -> Result<Vec<f64>> {
        rest.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| fmt_err(format!("bad number `{x}` in input spec"))))
            .collect()
    };
    match head {
        "example" => Ok(InputSignal::damped_sine_example()),
        "zero" => Ok(InputSignal::Zero {
            dim: if rest.is_empty() {
                1
            } else {
                rest.parse().map_err(|_| fmt_err(format!("bad dimension `{rest}`")))?
            },
        }),
        "const" => Ok(InputSignal::Constant(DVector::from_vec(nums()?))),
        "damped" => match nums()?[..] {
            [amplitude, frequency, decay, offset, offset_decay] => Ok(InputSignal::DampedSine {
                amplitude,
                frequency,
                decay,
                offset,
                offset_decay,
            }),
            _ => Err(fmt_err("damped input needs five numbers")),
        },
        _ => Err(fmt_err(format!("unrecognised input spec `{spec}`"))),
    }
}

pub fn input_from_json(v: &Value) -> Result<InputSignal> {
    let kind = v
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| fmt_err("input spec needs a `type`"))?;
    let f = |k: &str| {
        v.get(k)
            .ok_or_else(|| fmt_err(format!("input spec needs `{k}`")))
            .and_then(|x| number(x, k))
    };
    match kind {
        "zero" => Ok(InputSignal::Zero {
            dim: v.get("dim").and_then(Value::as_u64).unwrap_or(1) as usize,
        }),
        "constant" => Ok(InputSignal::Constant(vector_from_json(
            v.get("value").ok_or_else(|| fmt_err("input spec needs `value`"))?,
            "value",
        )?)),
        "damped_sine" => Ok(InputSignal::DampedSine {
            amplitude: f("amplitude")?,
            frequency: f("frequency")?,
            decay: f("decay")?,
            offset: f("offset")?,
            offset_decay: f("offset_decay")?,
        }),
        "piecewise_constant" => {
            let breaks = vector_from_json(v.get("breaks").ok_or_else(|| fmt_err("needs `breaks`"))?, "breaks")?;
            let values = v
                .get("values")
                .and_then(Value::as_array)
                .ok_or_else(|| fmt_err("needs `values`"))?
                .iter()
                .map(|x| vector_from_json(x, "values"))
                .collect::<Result<Vec<_>>>()?;
            InputSignal::piecewise_constant(breaks.iter().copied().collect(), values)
        }
        other => Err(fmt_err(format!("unknown input type `{other}`"))),
    }
}

pub fn input_to_json(u: &InputSignal) -> Value {
    match u {
        InputSignal::Zero { dim } => json!({ "type": "zero", "dim": dim }),
        InputSignal::Constant(v) => json!({ "type": "constant", "value": vector_to_json(v) }),
        InputSignal::DampedSine {
            amplitude,
            frequency,
            decay,
            offset,
            offset_decay,
        } => json!({
            "type": "damped_sine",
            "amplitude": amplitude,
            "frequency": frequency,
            "decay": decay,
            "offset": offset,
            "offset_decay": offset_decay,
        }),
        InputSignal::PiecewiseConstant { breaks, values } => json!({
            "type": "piecewise_constant",
            "breaks": breaks,
            "values": values.iter().map(vector_to_json).collect::<Vec<_>>(),
        }),
    }
}

/// Parses an event schedule from JSON (`{"horizon": T, "events": [["e", dwell], ...]}`),
/// a path to such a file, the word `example`, or the short form
/// `T;e:dwell,e:dwell,...`.
pub fn parse_schedule_spec(model: &LinearHybridSystem, spec: &str) -> Result<TimedEventSequence> {
    let spec = spec.trim();
    if spec == "example" {
        return Ok(crate::example::schedule());
    }
    let from_json = |v: Value| -> Result<TimedEventSequence> {
        let horizon = number(v.get("horizon").ok_or_else(|| fmt_err("schedule needs `horizon`"))?, "horizon")?;
        let mut entries = Vec::new();
        if let Some(list) = v.get("events") {
            for item in list.as_array().ok_or_else(|| fmt_err("`events` must be an array"))? {
                let pair = item.as_array().filter(|p| p.len() == 2);
                let (e, d) = match pair {
                    Some(p) => (p[0].as_str(), number(&p[1], "dwell")?),
                    None => return Err(fmt_err("each event must be [name, dwell]")),
                };
                let e = e.ok_or_else(|| fmt_err("event name must be a string"))?;
                entries.push((model.event_by_name(e)?, d));
            }
        }
        TimedEventSequence::new(entries, horizon)
    };
    if spec.starts_with('{') {
        return from_json(serde_json::from_str(spec)?);
    }
    if Path::new(spec).is_file() {
        return from_json(serde_json::from_str(&fs::read_to_string(spec)?)?);
    }
    let (h, rest) = spec.split_once(';').unwrap_or((spec, ""));
    let horizon: f64 = h
        .trim()
        .parse()
        .map_err(|_| fmt_err(format!("bad horizon `{h}` in schedule spec")))?;
    let mut entries = Vec::new();
    for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (e, d) = item
            .split_once(':')
            .ok_or_else(|| fmt_err(format!("schedule entry `{item}` must read event:dwell")))?;
        let d: f64 = d.parse().map_err(|_| fmt_err(format!("bad dwell `{d}`")))?;
        entries.push((model.event_by_name(e.trim())?, d));
    }
    TimedEventSequence::new(entries, horizon)
}

pub fn schedule_to_json(model: &LinearHybridSystem, w: &TimedEventSequence) -> Value {
    json!({
        "horizon": w.horizon(),
        "events": w.entries().iter().map(|(e, d)| json!([model.event_name(*e), d])).collect::<Vec<_>>(),
    })
}

/// `time,mode,o,y1..,yhat1..,err1..` on the shared grid of two trajectories.
pub fn write_compare_csv<W: Write>(
    model: &LinearHybridSystem,
    traj: &HybridTrajectory,
    traj_hat: &HybridTrajectory,
    mut out: W,
) -> Result<()> {
    if !traj.same_discrete_outputs(traj_hat) {
        return Err(Error::DimensionMismatch("trajectories do not share a grid".into()));
    }
    let p = model.output_dim();
    let mut header = vec!["time".to_string(), "mode".into(), "o".into()];
    for prefix in ["y", "yhat", "err"] {
        header.extend((1..=p).map(|i| format!("{prefix}{i}")));
    }
    writeln!(out, "{}", header.join(","))?;
    for (seg, seg_hat) in traj.segments.iter().zip(&traj_hat.segments) {
        for i in 0..seg.times.len() {
            let y = &seg.outputs[i];
            let yh = &seg_hat.outputs[i];
            let mut row = vec![
                format!("{}", seg.times[i]),
                model.mode_name(seg.mode).to_string(),
                model.output_name(seg.output).to_string(),
            ];
            row.extend(y.iter().map(|v| format!("{v}")));
            row.extend(yh.iter().map(|v| format!("{v}")));
            row.extend((y - yh).iter().map(|v| format!("{v}")));
            writeln!(out, "{}", row.join(","))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;

    #[test]
    fn example_model_round_trips() {
        let h = example::model(3.0);
        let text = serde_json::to_string_pretty(&model_to_json(&h)).unwrap();
        let back = parse_model(&text).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn gramians_round_trip() {
        let h = example::model(3.0);
        let fam = example::reference_observability();
        let v = gramians_to_json(&h, &fam);
        let back = gramians_from_json(&h, &v, None).unwrap();
        assert_eq!(back, fam);
        assert!(gramians_from_json(&h, &v, Some(GramianKind::Reachability)).is_err());
    }

    #[test]
    fn unknown_names_are_reported() {
        let h = example::model(3.0);
        let mut v = model_to_json(&h);
        v["initial"]["mode"] = json!("nowhere");
        assert!(matches!(model_from_json(&v), Err(Error::UnknownId { kind: "mode", .. })));
    }

    #[test]
    fn ragged_matrix_rejected() {
        assert!(matrix_from_json(&json!([[1.0, 2.0], [3.0]]), "m").is_err());
        assert!(matrix_from_json(&json!([]), "m").is_err());
    }

    #[test]
    fn input_and_schedule_specs() {
        let h = example::model(3.0);
        assert_eq!(parse_input_spec("example").unwrap(), InputSignal::damped_sine_example());
        assert_eq!(
            parse_input_spec("const:1,2").unwrap(),
            InputSignal::Constant(DVector::from_vec(vec![1.0, 2.0]))
        );
        let w = parse_schedule_spec(&h, "5;0:1.0,1:0.5").unwrap();
        assert_eq!(w.entries(), &[(EventId(0), 1.0), (EventId(1), 0.5)]);
        let again = parse_schedule_spec(&h, &schedule_to_json(&h, &w).to_string()).unwrap();
        assert_eq!(again, w);
        let u = InputSignal::piecewise_constant(vec![0.0, 1.5], vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![-2.0])]).unwrap();
        assert_eq!(input_from_json(&input_to_json(&u)).unwrap(), u);
        let d = InputSignal::damped_sine_example();
        assert_eq!(input_from_json(&input_to_json(&d)).unwrap(), d);
        assert!(parse_schedule_spec(&h, "5;7:1.0").is_err());
    }
}
