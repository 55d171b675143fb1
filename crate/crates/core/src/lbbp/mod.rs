//! Joint optimization of a target basis Ψ and conformal factor w so that the
//! target's coefficients in the deformed metric match the source's.

mod config;
mod problem;
mod solver;
mod warm_start;

pub use config::{FeatureConfig, LbbpConfig, Recovery, WarmStartConfig};
pub use problem::{energy, grad_psibar, grad_w, proximal_objective, EnergyBreakdown, LbbpInputs, LbbpState};
pub use solver::{
    initial_state, recover_basis, solve, write_trace_csv, FeatureRefresh, LbbpOutcome, ReinitEvent, Termination,
    TraceRow, TRACE_HEADER,
};
pub use warm_start::{lift, reduced_inputs, warm_start, WarmStart};
