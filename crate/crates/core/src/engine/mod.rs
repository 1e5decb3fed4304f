//! Executors for the asynchronous iteration
//!
//! ```text
//! x_i^{p+1} = F_i(x_1^{s_1(p)}, ..., x_alpha^{s_alpha(p)})   if i in J(p)
//! x_i^{p+1} = x_i^p                                          otherwise
//! ```
//!
//! [`run_simulated`] replays a [`Schedule`](crate::scheduler::Schedule) exactly
//! and is bitwise deterministic. [`run_parallel`] runs one thread per worker on
//! shared block storage with periodic barriers.

mod parallel;
mod simulated;
mod trace;

pub use parallel::{run_parallel, ParallelConfig, StalenessAudit};
pub use simulated::{assemble_read, run_simulated, IterationState};
pub use trace::{Trace, TraceRecord};

use serde::{Deserialize, Serialize};

use crate::block_space::BlockVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Stop once `||x - F(x)||_inf <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Residual is also evaluated (and recorded) every `record_every` iterations.
    pub record_every: usize,
    /// Known solution `u`, enables `z_p` and `err_inf` in the trace.
    pub reference: Option<BlockVector>,
}

impl RunConfig {
    pub fn new(tol: f64, max_iter: usize) -> Result<Self> {
        let cfg = Self {
            tol,
            max_iter,
            record_every: 1,
            reference: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn record_every(mut self, every: usize) -> Result<Self> {
        self.record_every = every;
        self.validate()?;
        Ok(self)
    }

    pub fn reference(mut self, u: BlockVector) -> Self {
        self.reference = Some(u);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", format!("must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub x_final: BlockVector,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub trace: Trace,
    /// Only set by the parallel executor.
    pub staleness: Option<StalenessAudit>,
}

/// Serializable run summary, without the iterate and trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub max_lag: Option<usize>,
}

impl RunResult {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            converged: self.converged,
            iterations: self.iterations,
            final_residual: self.final_residual,
            max_lag: self.staleness.as_ref().map(|a| a.max_lag),
        }
    }
}
