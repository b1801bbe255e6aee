//! Shared inputs for the benchmarks in `benches/`.

use hybrid_reduce::example;
use hybrid_reduce::gramian::GramianFamily;
use hybrid_reduce::simulate::{InputSignal, SimConfig};
use hybrid_reduce::{LinearHybridSystem, TimedEventSequence};

pub struct Fixture {
    pub model: LinearHybridSystem,
    pub observability: GramianFamily,
    pub reachability: GramianFamily,
    pub schedule: TimedEventSequence,
    pub input: InputSignal,
}

/// The bundled four-mode example with its reference Gramians.
pub fn example_fixture() -> Fixture {
    Fixture {
        model: example::model(example::DEFAULT_TAU),
        observability: example::reference_observability(),
        reachability: example::reference_reachability(),
        schedule: example::schedule(),
        input: example::input(),
    }
}

pub fn sim_config(step: f64) -> SimConfig {
    SimConfig {
        max_step: step,
        ..SimConfig::default()
    }
}
