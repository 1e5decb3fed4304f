use std::any::Any;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Barrier, Mutex, RwLock};
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{RunConfig, RunResult, Trace, TraceRecord};
use crate::block_space::{uniform_distance, BlockVector};
use crate::error::{Error, Result};
use crate::operators::FixedPointMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelConfig {
    /// Worker threads; worker `w` owns blocks `i` with `i % workers == w`.
    pub workers: usize,
    /// Local updates per worker between two barriers.
    pub epoch_len: usize,
    /// Largest admissible read lag, in commits.
    pub staleness_cap: usize,
}

impl ParallelConfig {
    pub const DEFAULT_EPOCH_LEN: usize = 16;

    /// One worker per block, default epoch, and the tightest cap the barrier
    /// cadence guarantees.
    pub fn for_blocks(alpha: usize) -> Self {
        Self {
            workers: alpha,
            epoch_len: Self::DEFAULT_EPOCH_LEN,
            staleness_cap: alpha * Self::DEFAULT_EPOCH_LEN,
        }
    }

    fn validate(&self, alpha: usize) -> Result<()> {
        if self.workers == 0 || self.workers > alpha {
            return Err(Error::param(
                "workers",
                format!("need 1 <= workers <= {alpha} blocks, got {}", self.workers),
            ));
        }
        if self.epoch_len == 0 {
            return Err(Error::param("epoch_len", "must be at least 1"));
        }
        // at most alpha * epoch_len commits can land between a read and the
        // commit that uses it
        if self.staleness_cap + 1 < alpha * self.epoch_len {
            return Err(Error::param(
                "staleness_cap",
                format!(
                    "{} cannot be guaranteed with {alpha} blocks and epoch_len {}; need >= {}",
                    self.staleness_cap,
                    self.epoch_len,
                    alpha * self.epoch_len - 1
                ),
            ));
        }
        Ok(())
    }
}

/// Staleness observed over a parallel run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StalenessAudit {
    pub max_lag: usize,
    pub reads: u64,
    pub cap: usize,
}

/// Block storage with all-or-nothing replacement. `commits` counts iterations;
/// a block's value is always tagged with the count observed under its lock.
struct SharedBlocks {
    blocks: Vec<RwLock<Arc<Vec<f64>>>>,
    commits: AtomicUsize,
}

struct Snapshot {
    x: BlockVector,
    versions: Vec<usize>,
}

impl SharedBlocks {
    fn new(x0: &BlockVector) -> Self {
        let s = x0.structure();
        Self {
            blocks: (0..s.num_blocks())
                .map(|i| RwLock::new(Arc::new(x0.block(i).to_vec())))
                .collect(),
            commits: AtomicUsize::new(0),
        }
    }

    fn snapshot(&self, template: &BlockVector) -> Snapshot {
        let mut x = template.clone();
        let mut versions = Vec::with_capacity(self.blocks.len());
        for (i, slot) in self.blocks.iter().enumerate() {
            let guard = slot.read().expect("block lock poisoned");
            versions.push(self.commits.load(Ordering::SeqCst));
            let data = Arc::clone(&guard);
            drop(guard);
            x.set_block(i, &data);
        }
        Snapshot { x, versions }
    }

    /// Replace block `i`; returns the iteration index `p` of this commit.
    fn commit(&self, i: usize, values: &[f64]) -> usize {
        let mut guard = self.blocks[i].write().expect("block lock poisoned");
        let p = self.commits.fetch_add(1, Ordering::SeqCst);
        *guard = Arc::new(values.to_vec());
        p
    }

    /// One synchronous iteration replacing every block.
    fn commit_all(&self, x: &BlockVector) -> usize {
        let mut guards: Vec<_> = self
            .blocks
            .iter()
            .map(|b| b.write().expect("block lock poisoned"))
            .collect();
        let p = self.commits.fetch_add(1, Ordering::SeqCst);
        for (i, g) in guards.iter_mut().enumerate() {
            **g = Arc::new(x.block(i).to_vec());
        }
        p
    }
}

struct RunControl {
    /// Skip remaining work; set by anyone on failure.
    stop: AtomicBool,
    /// Leave the worker loop; set only by the coordinator so that every round
    /// a worker enters is also completed at the closing barrier.
    shutdown: AtomicBool,
    error: Mutex<Option<Error>>,
    panic: Mutex<Option<Box<dyn Any + Send>>>,
    max_lag: AtomicUsize,
    reads: AtomicU64,
}

impl RunControl {
    fn fail(&self, e: Error) {
        let mut slot = self.error.lock().expect("error slot poisoned");
        if slot.is_none() {
            *slot = Some(e);
        }
        self.stop.store(true, Ordering::SeqCst);
    }
}

/// Run the iteration on `cfg.workers` threads over shared block storage.
///
/// Between barriers each worker performs `epoch_len` local updates: snapshot
/// every block, evaluate `F`, commit its own blocks. At each barrier the
/// coordinator performs one fully fresh update of all blocks and evaluates the
/// stopping residual. Every read's lag is audited against `staleness_cap`.
///
/// The iterate sequence depends on thread interleaving; only the contracts on
/// `converged`, `final_residual` and the audit are deterministic. Workers stop
/// taking new updates once `max_iter` commits exist, so the count can overshoot
/// by at most one update per block.
pub fn run_parallel<F: FixedPointMap + ?Sized>(
    f: &F,
    x0: BlockVector,
    cfg: &RunConfig,
    par: &ParallelConfig,
) -> Result<RunResult> {
    cfg.validate()?;
    x0.check_structure(f.structure())?;
    if let Some(u) = &cfg.reference {
        u.check_structure(f.structure())?;
    }
    let alpha = f.structure().num_blocks();
    par.validate(alpha)?;

    let shared = SharedBlocks::new(&x0);
    let control = RunControl {
        stop: AtomicBool::new(false),
        shutdown: AtomicBool::new(false),
        error: Mutex::new(None),
        panic: Mutex::new(None),
        max_lag: AtomicUsize::new(0),
        reads: AtomicU64::new(0),
    };
    let barrier = Barrier::new(par.workers + 1);
    let start = Instant::now();
    let mut trace = Trace::default();
    let mut outcome: Option<(BlockVector, usize, bool, f64)> = None;

    thread::scope(|scope| {
        for w in 0..par.workers {
            let owned: Vec<usize> = (w..alpha).step_by(par.workers).collect();
            let (shared, control, barrier, template) = (&shared, &control, &barrier, &x0);
            scope.spawn(move || loop {
                barrier.wait();
                if control.shutdown.load(Ordering::SeqCst) {
                    break;
                }
                for _ in 0..par.epoch_len {
                    if control.stop.load(Ordering::SeqCst)
                        || shared.commits.load(Ordering::SeqCst) >= cfg.max_iter
                    {
                        break;
                    }
                    let step = panic::catch_unwind(AssertUnwindSafe(|| {
                        local_update(f, shared, control, template, &owned, par.staleness_cap)
                    }));
                    match step {
                        Ok(Ok(())) => {}
                        Ok(Err(e)) => {
                            control.fail(e);
                            break;
                        }
                        Err(payload) => {
                            control.panic.lock().expect("panic slot poisoned").get_or_insert(payload);
                            control.stop.store(true, Ordering::SeqCst);
                            break;
                        }
                    }
                }
                barrier.wait();
            });
        }

        // coordinator: workers are parked at the start barrier whenever this runs
        loop {
            if control.stop.load(Ordering::SeqCst) {
                break;
            }
            let x = shared.snapshot(&x0).x;
            let p = shared.commits.load(Ordering::SeqCst);
            let fx = match panic::catch_unwind(AssertUnwindSafe(|| f.apply(&x))) {
                Ok(Ok(fx)) => fx,
                Ok(Err(e)) => {
                    control.fail(e.at_iteration(p));
                    break;
                }
                Err(payload) => {
                    control.panic.lock().expect("panic slot poisoned").get_or_insert(payload);
                    break;
                }
            };
            let residual = match uniform_distance(&x, &fx) {
                Ok(r) => r,
                Err(e) => {
                    control.fail(e);
                    break;
                }
            };
            let err_inf = cfg
                .reference
                .as_ref()
                .map(|u| uniform_distance(&x, u).expect("structure checked"));
            trace.push(TraceRecord {
                p,
                residual_inf: residual,
                z_p: None,
                err_inf,
                wall_ns: start.elapsed().as_nanos() as u64,
            });
            if residual <= cfg.tol || p >= cfg.max_iter {
                outcome = Some((x, p, residual <= cfg.tol, residual));
                break;
            }
            shared.commit_all(&fx);
            barrier.wait();
            barrier.wait();
        }
        control.stop.store(true, Ordering::SeqCst);
        control.shutdown.store(true, Ordering::SeqCst);
        barrier.wait();
    });

    if let Some(payload) = control.panic.into_inner().expect("panic slot poisoned") {
        panic::resume_unwind(payload);
    }
    if let Some(e) = control.error.into_inner().expect("error slot poisoned") {
        return Err(e);
    }
    let (x_final, iterations, converged, final_residual) =
        outcome.ok_or_else(|| Error::Internal("parallel run ended without a result".into()))?;
    Ok(RunResult {
        x_final,
        iterations,
        converged,
        final_residual,
        trace,
        staleness: Some(StalenessAudit {
            max_lag: control.max_lag.load(Ordering::SeqCst),
            reads: control.reads.load(Ordering::SeqCst),
            cap: par.staleness_cap,
        }),
    })
}

fn local_update<F: FixedPointMap + ?Sized>(
    f: &F,
    shared: &SharedBlocks,
    control: &RunControl,
    template: &BlockVector,
    owned: &[usize],
    cap: usize,
) -> Result<()> {
    let snap = shared.snapshot(template);
    let fx = f.apply(&snap.x).map_err(|e| {
        let p = shared.commits.load(Ordering::SeqCst);
        e.at_iteration(p)
    })?;
    for &i in owned {
        let p = shared.commit(i, fx.block(i));
        let lag = snap.versions.iter().map(|&v| p - v).max().unwrap_or(0);
        control.max_lag.fetch_max(lag, Ordering::SeqCst);
        control.reads.fetch_add(snap.versions.len() as u64, Ordering::Relaxed);
        if lag > cap {
            return Err(Error::Internal(format!(
                "staleness audit: read lag {lag} exceeds cap {cap} at iteration {p}"
            )));
        }
    }
    Ok(())
}
