//! The bundled four-mode example: automaton, subsystem data, reset maps scaled
//! by `1/τ`, the event schedule, the input, and reference Gramians.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::gramian::{GramianFamily, GramianKind};
use crate::model::{EventId, InitialState, LinearHybridSystem, ModeId, OutputId, ResetMap, Subsystem, TimedEventSequence};
use crate::simulate::InputSignal;

/// Reset scaling used for the reference values.
pub const DEFAULT_TAU: f64 = 3.0;
pub const HORIZON: f64 = 15.0;

/// Dwell times between consecutive events. Read off a plotted switching
/// signal, so approximate.
pub const DWELLS: [f64; 10] = [1.2, 1.5, 1.0, 1.6, 1.3, 1.1, 1.7, 1.2, 1.4, 1.5];
/// Event labels fired after each dwell.
pub const EVENTS: [usize; 10] = [0, 1, 0, 1, 0, 0, 0, 1, 1, 1];

/// Kept orders of the two reference reductions.
pub const ORDERS_A: [usize; 4] = [2, 2, 2, 2];
pub const ORDERS_B: [usize; 4] = [2, 1, 2, 1];

pub const BOUND_A: f64 = 7.9666;
pub const BOUND_B: f64 = 23.8148;

fn m(rows: &[&[f64]]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn diag(d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(d))
}

/// The example with resets scaled by `1/tau`. The fourth mode uses
/// `A₄ = diag(−1, −½)`; with the opposite sign it is unstable and no Gramian
/// exists.
pub fn model(tau: f64) -> LinearHybridSystem {
    let subsystems = vec![
        Subsystem::new(
            diag(&[-1.0, -3.0, -4.0]),
            m(&[&[1.0], &[-1.0], &[1.0]]),
            m(&[&[1.0, -1.0, 1.0]]),
        ),
        Subsystem::new(diag(&[-2.0, -1.0]), m(&[&[1.0], &[1.0]]), m(&[&[1.0, 1.5]])),
        Subsystem::new(
            diag(&[-3.0, -1.0, -2.0]),
            m(&[&[1.0], &[1.0], &[3.0]]),
            m(&[&[1.0, 1.0, 1.0]]),
        ),
        Subsystem::new(diag(&[-1.0, -0.5]), m(&[&[2.0], &[-1.0]]), m(&[&[2.0, 1.0]])),
    ];
    // (source, event, target, matrix)
    let raw: [(usize, usize, usize, DMatrix<f64>); 8] = [
        (0, 0, 3, m(&[&[0.0, 0.0, -1.0], &[0.0, 0.5, 0.0]])),
        (0, 1, 1, m(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]])),
        (1, 0, 2, m(&[&[0.0, 1.0], &[1.0, 0.0], &[0.0, 0.0]])),
        (1, 1, 3, m(&[&[-1.0, 1.0], &[0.0, 1.0]])),
        (2, 0, 3, m(&[&[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]])),
        (2, 1, 0, m(&[&[1.0, -1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, -1.0, 0.0]])),
        (3, 0, 1, m(&[&[-1.0, 0.0], &[0.0, -0.5]])),
        (3, 1, 2, m(&[&[-1.0, 0.0], &[1.0, 0.0], &[0.0, 0.5]])),
    ];
    let mut delta = vec![vec![None; 2]; 4];
    let mut resets = BTreeMap::new();
    for (s, e, t, mat) in raw {
        delta[s][e] = Some(ModeId(t));
        resets.insert(
            (ModeId(s), EventId(e)),
            ResetMap {
                source: ModeId(s),
                event: EventId(e),
                target: ModeId(t),
                matrix: mat / tau,
            },
        );
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("tau".into(), format!("{tau}"));
    metadata.insert("schedule".into(), "dwell times approximate (read from a plot)".into());
    LinearHybridSystem {
        mode_names: (1..=4).map(|i| format!("q{i}")).collect(),
        subsystems,
        event_names: vec!["0".into(), "1".into()],
        output_names: (1..=4).map(|i| format!("o{i}")).collect(),
        delta,
        lambda: (0..4).map(|i| Some(OutputId(i))).collect(),
        resets,
        initial: InitialState {
            mode: ModeId(1),
            x0: DVector::zeros(2),
        },
        metadata,
    }
}

pub fn schedule() -> TimedEventSequence {
    let entries = EVENTS.iter().zip(DWELLS).map(|(&e, d)| (EventId(e), d)).collect();
    TimedEventSequence::new(entries, HORIZON).expect("static schedule is valid")
}

/// `u(t) = 5 sin(20t) e^{−t/5} + 0.5 e^{−t/2}`.
pub fn input() -> InputSignal {
    InputSignal::damped_sine_example()
}

/// Reference observability Gramians (four decimals).
pub fn reference_observability() -> GramianFamily {
    GramianFamily::new(
        GramianKind::Observability,
        vec![
            m(&[
                &[3.2662, -0.1118, 0.0733],
                &[-0.1118, 1.7564, -0.0693],
                &[0.0733, -0.0693, 1.4755],
            ]),
            m(&[&[2.4546, -0.0023], &[-0.0023, 4.0827]]),
            m(&[
                &[1.7873, -0.0041, 0.0752],
                &[-0.0041, 3.4766, 0.1468],
                &[0.0752, 0.1468, 2.4182],
            ]),
            m(&[&[3.9745, 0.6789], &[0.6789, 4.6925]]),
        ],
        crate::gramian::DEFAULT_EPSILON,
    )
}

/// Reference reachability Gramians (four decimals).
pub fn reference_reachability() -> GramianFamily {
    GramianFamily::new(
        GramianKind::Reachability,
        vec![
            m(&[
                &[5.3173, -0.1332, 0.3859],
                &[-0.1332, 2.3055, -0.0914],
                &[0.3859, -0.0914, 1.9288],
            ]),
            m(&[&[3.8471, 0.1453], &[0.1453, 5.3503]]),
            m(&[
                &[3.1234, -0.0344, 0.3250],
                &[-0.0344, 5.2759, 0.5661],
                &[0.3250, 0.5661, 4.5523],
            ]),
            m(&[&[6.2062, -0.3344], &[-0.3344, 7.4608]]),
        ],
        crate::gramian::DEFAULT_EPSILON,
    )
}

/// Reference balanced singular values per mode.
pub fn reference_sigma() -> Vec<Vec<f64>> {
    vec![
        vec![4.1894, 2.0184, 1.6542],
        vec![4.6754, 3.0703],
        vec![4.3741, 3.2543, 2.3291],
        vec![5.9718, 4.8538],
    ]
}
