//! Generic optimizers: Cayley-curve descent on the Stiefel manifold and
//! limited-memory BFGS.

pub mod lbfgs;
pub mod stiefel;

pub use lbfgs::{lbfgs_minimize, LbfgsOptions, LbfgsOutcome, LbfgsStatus};
pub use stiefel::{curvilinear_step, CayleyCurve, CurvilinearOptions};
