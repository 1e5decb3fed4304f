//! Update-set and read-index sequences `J(p)`, `s_i(p)` driving the iteration.
//!
//! A [`Schedule`] is a pure function of its configuration and the iteration
//! index, so any run can be replayed and any step queried out of order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Jacobi,
    GaussSeidel,
    RandomBoundedDelay,
}

/// One step of the iteration: which blocks update and which past iterate each
/// block is read from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub p: usize,
    /// Sorted, nonempty subset of `0..alpha`.
    pub update_set: Vec<usize>,
    /// `reads[j] = s_j(p)`, the iteration whose block `j` is read.
    pub reads: Vec<usize>,
    pub is_sync: bool,
}

impl ScheduleStep {
    fn new(p: usize, update_set: Vec<usize>, reads: Vec<usize>) -> Self {
        let is_sync = update_set.len() == reads.len() && reads.iter().all(|&r| r == p);
        Self {
            p,
            update_set,
            reads,
            is_sync,
        }
    }

    pub fn max_delay(&self) -> usize {
        self.reads.iter().map(|&r| self.p - r).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    kind: ScheduleKind,
    blocks: usize,
    s_bound: usize,
    sync_period: usize,
    seed: u64,
}

impl Schedule {
    /// All blocks, fresh reads, every step.
    pub fn jacobi(blocks: usize) -> Result<Self> {
        Self::new(ScheduleKind::Jacobi, blocks, 0, 1, 0)
    }

    /// Block `p mod alpha` at step `p`, fresh reads.
    pub fn gauss_seidel(blocks: usize) -> Result<Self> {
        Self::new(ScheduleKind::GaussSeidel, blocks, 0, 1, 0)
    }

    /// Random nonempty update sets and delays up to `s_bound`, with a forced
    /// synchronous step whenever `p % sync_period == 0`.
    pub fn random_bounded_delay(blocks: usize, s_bound: usize, sync_period: usize, seed: u64) -> Result<Self> {
        Self::new(ScheduleKind::RandomBoundedDelay, blocks, s_bound, sync_period, seed)
    }

    /// Generic constructor. Jacobi and Gauss-Seidel ignore `s_bound` (forced to 0).
    pub fn new(kind: ScheduleKind, blocks: usize, s_bound: usize, sync_period: usize, seed: u64) -> Result<Self> {
        if blocks == 0 {
            return Err(Error::param("blocks", "need at least one block"));
        }
        if sync_period == 0 {
            return Err(Error::param("sync_period", "must be at least 1"));
        }
        let s_bound = match kind {
            ScheduleKind::RandomBoundedDelay => s_bound,
            _ => 0,
        };
        Ok(Self {
            kind,
            blocks,
            s_bound,
            sync_period,
            seed,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn s_bound(&self) -> usize {
        self.s_bound
    }

    pub fn sync_period(&self) -> usize {
        self.sync_period
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_step(&self, p: usize) -> ScheduleStep {
        let alpha = self.blocks;
        match self.kind {
            ScheduleKind::Jacobi => ScheduleStep::new(p, (0..alpha).collect(), vec![p; alpha]),
            ScheduleKind::GaussSeidel => ScheduleStep::new(p, vec![p % alpha], vec![p; alpha]),
            ScheduleKind::RandomBoundedDelay => {
                if p % self.sync_period == 0 {
                    return ScheduleStep::new(p, (0..alpha).collect(), vec![p; alpha]);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(p as u64);
                let update_set = loop {
                    let set: Vec<usize> = (0..alpha).filter(|_| rng.random_bool(0.5)).collect();
                    if !set.is_empty() {
                        break set;
                    }
                };
                let max_delay = self.s_bound.min(p);
                let reads = (0..alpha).map(|_| p - rng.random_range(0..=max_delay)).collect();
                ScheduleStep::new(p, update_set, reads)
            }
        }
    }

    pub fn steps(&self) -> impl Iterator<Item = ScheduleStep> + '_ {
        (0..).map(move |p| self.next_step(p))
    }

    /// Check the bounded-delay and recurring-synchronization hypotheses over
    /// the first `horizon` steps.
    pub fn validate(&self, horizon: usize) -> Result<ValidationReport> {
        if horizon == 0 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        let mut max_delay = 0;
        let mut sync_positions = Vec::new();
        let mut h1_violations = 0;
        for step in self.steps().take(horizon) {
            let well_formed = !step.update_set.is_empty()
                && step.update_set.iter().all(|&i| i < self.blocks)
                && step.reads.len() == self.blocks
                && step.reads.iter().all(|&r| r <= step.p);
            if !well_formed {
                h1_violations += 1;
                continue;
            }
            let d = step.max_delay();
            max_delay = max_delay.max(d);
            if d > self.s_bound {
                h1_violations += 1;
            }
            if step.is_sync {
                sync_positions.push(step.p);
            }
        }
        let required_syncs = match self.kind {
            ScheduleKind::RandomBoundedDelay => horizon / self.sync_period,
            // synchronous algorithms: every step should be a full fresh update
            ScheduleKind::Jacobi | ScheduleKind::GaussSeidel => horizon,
        };
        let sync_count = sync_positions.len();
        Ok(ValidationReport {
            kind: self.kind,
            horizon,
            s_bound: self.s_bound,
            max_delay,
            h1_violations,
            sync_count,
            required_syncs,
            sync_positions,
            h0_pass: sync_count >= required_syncs.max(1),
            h1_pass: h1_violations == 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub kind: ScheduleKind,
    pub horizon: usize,
    pub s_bound: usize,
    pub max_delay: usize,
    pub h1_violations: usize,
    pub sync_count: usize,
    pub required_syncs: usize,
    pub sync_positions: Vec<usize>,
    pub h0_pass: bool,
    pub h1_pass: bool,
}
