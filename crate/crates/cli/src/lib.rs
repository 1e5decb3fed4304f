//! Command-line harness around `asyncprox`: run specs, hypothesis checks,
//! parameter sweeps and schedule comparisons.
//!
//! Exit codes are a stable contract: 0 converged/pass, 1 usage or runtime
//! error, 2 non-convergence, 3 hypothesis check failed.

pub mod commands;
pub mod spec;

pub use commands::{
    cmd_check, cmd_compare, cmd_run, cmd_sweep, CheckKind, CheckReport, CompareReport, RunReport, SweepAxis,
    SweepReport, SweepRequest,
};
pub use spec::RunSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;

/// Directory holding the bundled demo specs.
pub fn demo_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("demos")
}
