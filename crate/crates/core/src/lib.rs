//! Balanced truncation for linear hybrid systems: per-mode Gramians under
//! reset constraints, balancing, truncation with an a-priori L2 error bound,
//! and the simulation tools used to check it.

pub mod balance;
pub mod error;
pub mod example;
pub mod experiment;
pub mod gramian;
pub mod io;
pub mod linalg;
pub mod model;
pub mod simulate;

pub use balance::{
    balance, error_bound, reduce, truncate, v_diagnostic, BalancedRealization, GramianSource, ReducedModel, Reduction,
    ReductionOrders, VDiagnostic,
};
pub use error::{Error, Result};
pub use gramian::{check_gramians, solve_gramians, GramianFamily, GramianKind, LmiResidualReport, SolveOptions};
pub use model::{
    validate, EventId, LinearHybridSystem, ModeId, OutputId, ResetMap, Subsystem, TimedEventSequence, ValidationReport,
};
pub use simulate::{simulate, simulate_exact, HybridTrajectory, InputSignal, SimConfig};
