//! Asynchronous block fixed-point iteration with bounded delays, applied to
//! resolvents `F = (I + cT)^{-1}` of maximal strongly monotone operators.
//!
//! * [`block_space`]: block decomposition of `R^n`, inner product and the two norms.
//! * [`operators`]: the operator catalog, resolvents and the `c` threshold.
//! * [`scheduler`]: update sets `J(p)` and read indices `s_i(p)`.
//! * [`engine`]: deterministic simulator and shared-memory parallel executor.
//! * [`diagnostics`]: sampled checks of the convergence hypotheses, trace analytics.
//! * [`oracle`]: independent reference solvers and solution certificates.

pub mod block_space;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod operators;
pub mod oracle;
pub mod scheduler;

pub use block_space::{euclidean_norm, inner_product, uniform_norm, BlockStructure, BlockVector};
pub use error::{Error, Result};
pub use operators::{FixedPointMap, Problem, ProblemKind, Resolvent};
pub use scheduler::{Schedule, ScheduleKind, ScheduleStep};
