//! Lumped mass and cotangent stiffness matrices, sparse SPD solves, and
//! Crank–Nicolson heat diffusion.

mod assembly;
mod heat;
mod solve;
mod sparse;

pub use assembly::{assemble_mass, assemble_stiffness};
pub use heat::{heat_step, weighted_mass, HeatStepper};
pub use solve::{conjugate_gradient, SpdSolver, CG_TOLERANCE};
pub use sparse::SparseSymMatrix;
