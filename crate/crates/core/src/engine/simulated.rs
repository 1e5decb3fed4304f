use std::collections::VecDeque;
use std::time::Instant;

use super::{RunConfig, RunResult, Trace, TraceRecord};
use crate::block_space::{uniform_distance, BlockVector};
use crate::error::{Error, Result};
use crate::operators::FixedPointMap;
use crate::scheduler::{Schedule, ScheduleStep};

/// The last `s_bound + 1` iterates, enough to serve every read allowed by the
/// delay bound.
#[derive(Debug, Clone)]
pub struct IterationState {
    history: VecDeque<BlockVector>,
    p: usize,
    window: usize,
}

impl IterationState {
    pub fn new(x0: BlockVector, s_bound: usize) -> Self {
        let window = s_bound + 1;
        let mut history = VecDeque::with_capacity(window);
        history.push_back(x0);
        Self { history, p: 0, window }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn current(&self) -> &BlockVector {
        self.history.back().expect("history is never empty")
    }

    /// Oldest iteration index still held.
    pub fn oldest(&self) -> usize {
        self.p + 1 - self.history.len()
    }

    pub fn iterate(&self, q: usize) -> Option<&BlockVector> {
        if q > self.p || q < self.oldest() {
            return None;
        }
        self.history.get(q - self.oldest())
    }

    /// Append `x^{p+1}` and drop anything older than the window.
    pub fn push(&mut self, next: BlockVector) {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(next);
        self.p += 1;
    }
}

/// `(x_1^{s_1(p)}, ..., x_alpha^{s_alpha(p)})`.
pub fn assemble_read(state: &IterationState, step: &ScheduleStep) -> Result<BlockVector> {
    if step.p != state.p {
        return Err(Error::Internal(format!(
            "step for iteration {} applied at iteration {}",
            step.p, state.p
        )));
    }
    let current = state.current();
    if step.reads.len() != current.structure().num_blocks() {
        return Err(Error::Dimension {
            expected: current.structure().num_blocks(),
            got: step.reads.len(),
        });
    }
    if step.reads.iter().all(|&q| q == state.p) {
        return Ok(current.clone());
    }
    let mut out = current.clone();
    for (j, &q) in step.reads.iter().enumerate() {
        let src = state.iterate(q).ok_or(Error::Staleness {
            block: j,
            read: q,
            oldest: state.oldest(),
            p: state.p,
        })?;
        out.set_block(j, src.block(j));
    }
    Ok(out)
}

/// Sliding maximum of `||x^l - u||_inf` over the last `s_bound + 1` iterates.
struct LyapunovWindow<'a> {
    reference: &'a BlockVector,
    errors: VecDeque<f64>,
    window: usize,
}

impl<'a> LyapunovWindow<'a> {
    fn push(&mut self, x: &BlockVector) -> Result<(f64, f64)> {
        let err = uniform_distance(x, self.reference)?;
        if self.errors.len() == self.window {
            self.errors.pop_front();
        }
        self.errors.push_back(err);
        let z = self.errors.iter().copied().fold(0.0, f64::max);
        Ok((err, z))
    }
}

/// Replay `sched` on `f` starting from `x0`.
///
/// The synchronous residual `||x^p - F(x^p)||_inf` is evaluated at every
/// synchronous step, every `record_every` iterations and at `max_iter`; each
/// evaluation is recorded in the trace and the run stops as soon as it drops
/// to `cfg.tol`. Apart from `wall_ns`, the result is bitwise reproducible.
pub fn run_simulated<F: FixedPointMap + ?Sized>(
    f: &F,
    x0: BlockVector,
    sched: &Schedule,
    cfg: &RunConfig,
) -> Result<RunResult> {
    cfg.validate()?;
    x0.check_structure(f.structure())?;
    if sched.blocks() != f.structure().num_blocks() {
        return Err(Error::Structure(format!(
            "schedule has {} blocks, map has {}",
            sched.blocks(),
            f.structure().num_blocks()
        )));
    }
    if let Some(u) = &cfg.reference {
        u.check_structure(f.structure())?;
    }

    let start = Instant::now();
    let mut lyapunov = cfg.reference.as_ref().map(|u| LyapunovWindow {
        reference: u,
        errors: VecDeque::new(),
        window: sched.s_bound() + 1,
    });
    let mut state = IterationState::new(x0, sched.s_bound());
    let mut trace = Trace::default();

    loop {
        let p = state.p();
        let (err_inf, z_p) = match lyapunov.as_mut() {
            Some(w) => {
                let (e, z) = w.push(state.current())?;
                (Some(e), Some(z))
            }
            None => (None, None),
        };
        let mut record = |residual_inf: f64| {
            trace.push(TraceRecord {
                p,
                residual_inf,
                z_p,
                err_inf,
                wall_ns: start.elapsed().as_nanos() as u64,
            })
        };

        if p == cfg.max_iter {
            let fx = f.apply(state.current()).map_err(|e| e.at_iteration(p))?;
            let residual = uniform_distance(state.current(), &fx)?;
            record(residual);
            return Ok(finish(state, p, residual <= cfg.tol, residual, trace));
        }

        let step = sched.next_step(p);
        let read = assemble_read(&state, &step)?;
        let fread = f.apply(&read).map_err(|e| e.at_iteration(p))?;

        if step.is_sync || p % cfg.record_every == 0 {
            let residual = if step.is_sync {
                uniform_distance(state.current(), &fread)?
            } else {
                let fx = f.apply(state.current()).map_err(|e| e.at_iteration(p))?;
                uniform_distance(state.current(), &fx)?
            };
            record(residual);
            if residual <= cfg.tol {
                return Ok(finish(state, p, true, residual, trace));
            }
        }

        let mut next = state.current().clone();
        for &i in &step.update_set {
            next.set_block(i, fread.block(i));
        }
        state.push(next);
    }
}

fn finish(state: IterationState, p: usize, converged: bool, residual: f64, trace: Trace) -> RunResult {
    RunResult {
        x_final: state.current().clone(),
        iterations: p,
        converged,
        final_residual: residual,
        trace,
        staleness: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block_space::BlockStructure;
    use crate::operators::{LinearMap, Problem, Resolvent};
    use nalgebra::{DMatrix, DVector};

    fn s2() -> BlockStructure {
        BlockStructure::new(vec![1, 1]).unwrap()
    }

    fn v(data: &[f64]) -> BlockVector {
        BlockVector::from_vec(s2(), data.to_vec()).unwrap()
    }

    #[test]
    fn history_window() {
        let mut st = IterationState::new(v(&[0.0, 0.0]), 2);
        for k in 1..=5 {
            st.push(v(&[k as f64, -(k as f64)]));
        }
        assert_eq!(st.p(), 5);
        assert_eq!(st.oldest(), 3);
        assert!(st.iterate(2).is_none());
        assert_eq!(st.iterate(3).unwrap().as_slice(), &[3.0, -3.0]);
        assert!(st.iterate(6).is_none());
    }

    #[test]
    fn fresh_read_is_current() {
        let mut st = IterationState::new(v(&[0.0, 0.0]), 1);
        st.push(v(&[1.0, 2.0]));
        let step = ScheduleStep { p: 1, update_set: vec![0], reads: vec![1, 1], is_sync: false };
        assert_eq!(assemble_read(&st, &step).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn mixed_read() {
        // x^0 = (0, 0), x^1 = (1, 10), x^2 = (2, 20): read (x_1^2, x_2^1)
        let mut st = IterationState::new(v(&[0.0, 0.0]), 1);
        st.push(v(&[1.0, 10.0]));
        st.push(v(&[2.0, 20.0]));
        let step = ScheduleStep { p: 2, update_set: vec![0, 1], reads: vec![2, 1], is_sync: false };
        assert_eq!(assemble_read(&st, &step).unwrap().as_slice(), &[2.0, 10.0]);
    }

    #[test]
    fn read_past_window_is_staleness_error() {
        let s_bound = 1;
        let mut st = IterationState::new(v(&[0.0, 0.0]), s_bound);
        for k in 1..=3 {
            st.push(v(&[k as f64, k as f64]));
        }
        let p = st.p();
        let step = ScheduleStep { p, update_set: vec![0], reads: vec![p, p - s_bound - 1], is_sync: false };
        assert!(matches!(assemble_read(&st, &step), Err(Error::Staleness { block: 1, .. })));
    }

    fn scalar_resolvent() -> Resolvent {
        let p = Problem::affine_monotone(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 2.0)).unwrap();
        Resolvent::new(p, 1.0).unwrap()
    }

    #[test]
    fn scalar_jacobi_recurrence() {
        let f = scalar_resolvent();
        let x0 = f.problem().zeros();
        let sched = Schedule::jacobi(1).unwrap();
        let r = run_simulated(&f, x0.clone(), &sched, &RunConfig::new(1e-300, 2).unwrap()).unwrap();
        assert_eq!(r.x_final.as_slice(), &[1.5]);
        assert_eq!(r.iterations, 2);
        assert!(!r.converged);
        let r = run_simulated(&f, x0.clone(), &sched, &RunConfig::new(1e-300, 1).unwrap()).unwrap();
        assert_eq!(r.x_final.as_slice(), &[1.0]);

        let r = run_simulated(&f, x0, &sched, &RunConfig::new(1e-12, 1000).unwrap()).unwrap();
        assert!(r.converged);
        assert!((r.x_final.as_slice()[0] - 2.0).abs() < 1e-11);
    }

    #[test]
    fn starts_at_fixed_point() {
        let f = scalar_resolvent();
        let x0 = f.problem().vector(vec![2.0]).unwrap();
        let r = run_simulated(&f, x0, &Schedule::jacobi(1).unwrap(), &RunConfig::new(1e-8, 10).unwrap()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.final_residual, 0.0);
    }

    #[test]
    fn rejects_mismatched_schedule() {
        let f = scalar_resolvent();
        let err = run_simulated(&f, f.problem().zeros(), &Schedule::jacobi(2).unwrap(), &RunConfig::new(1e-8, 10).unwrap());
        assert!(matches!(err, Err(Error::Structure(_))));
        let wrong = BlockVector::zeros(s2());
        assert!(run_simulated(&f, wrong, &Schedule::jacobi(1).unwrap(), &RunConfig::new(1e-8, 10).unwrap()).is_err());
    }

    #[test]
    fn residual_recorded_at_cadence() {
        let map = LinearMap::scaled_identity(0.5, s2());
        let sched = Schedule::gauss_seidel(2).unwrap();
        let cfg = RunConfig::new(1e-300, 20).unwrap().record_every(5).unwrap();
        let r = run_simulated(&map, v(&[1.0, 1.0]), &sched, &cfg).unwrap();
        let ps: Vec<usize> = r.trace.records.iter().map(|t| t.p).collect();
        assert_eq!(ps, vec![0, 5, 10, 15, 20]);
    }

    #[test]
    fn inner_failure_carries_iteration() {
        struct Failing;
        impl FixedPointMap for Failing {
            fn structure(&self) -> &BlockStructure {
                Box::leak(Box::new(BlockStructure::single(1).unwrap()))
            }
            fn apply(&self, _: &BlockVector) -> Result<BlockVector> {
                Err(Error::Numeric("boom".into()))
            }
        }
        let x0 = BlockVector::zeros(BlockStructure::single(1).unwrap());
        let err = run_simulated(&Failing, x0, &Schedule::jacobi(1).unwrap(), &RunConfig::new(1e-8, 5).unwrap()).unwrap_err();
        assert!(matches!(err, Error::AtIteration { iteration: 0, .. }));
    }
}
