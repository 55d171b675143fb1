pub mod correspondence;
pub mod eigen;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod fem;
pub mod lbbp;
pub mod linalg;
pub mod mesh;
pub mod optim;
pub mod pipeline;

pub use correspondence::Correspondence;
pub use eigen::{Eigensystem, Weighting};
pub use error::{Error, Result};
pub use evaluation::ErrorReport;
pub use fem::SparseSymMatrix;
pub use lbbp::{EnergyBreakdown, LbbpConfig, LbbpInputs, LbbpOutcome, LbbpState};
pub use pipeline::{register, Registration, RunSummary};
pub use mesh::{MeshOptions, Point, SampleHierarchy, TriangleMesh};
