use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use asyncprox::diagnostics::{
    analyze_trace, check_h3, check_h4, check_linear_h4, estimate_modulus, Hypothesis, HypothesisReport, SampleConfig,
};
use asyncprox::engine::{run_parallel, run_simulated, RunResult, Trace};
use asyncprox::oracle::solve_direct;
use asyncprox::{BlockVector, Schedule, ScheduleKind};
use serde::{Deserialize, Serialize};

use crate::spec::{CMode, Engine, Prepared, RunSpec, TraceFormat};
use crate::{EXIT_HYPOTHESIS, EXIT_NOT_CONVERGED, EXIT_OK};

fn execute(prep: &Prepared, schedule: &Schedule, engine: Engine) -> Result<RunResult> {
    let result = match engine {
        Engine::Simulated => run_simulated(&prep.resolvent, prep.x0.clone(), schedule, &prep.run),
        Engine::Parallel => run_parallel(&prep.resolvent, prep.x0.clone(), &prep.run, &prep.parallel),
    };
    result.map_err(|e| anyhow!("engine: {e}"))
}

fn error_vs(x: &BlockVector, u: Option<&BlockVector>) -> Option<f64> {
    u.map(|u| asyncprox::block_space::uniform_distance(x, u).expect("same structure"))
}

pub fn write_trace(trace: &Trace, path: &Path, format: TraceFormat) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let w = BufWriter::new(file);
    match format {
        TraceFormat::Csv => trace.write_csv(w),
        TraceFormat::Jsonl => trace.write_jsonl(w),
    }
    .with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).with_context(|| format!("writing {}", path.display()))
}

fn summary_path(trace: &Path) -> PathBuf {
    let mut name = trace.file_stem().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    trace.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub problem: String,
    pub engine: Engine,
    pub schedule: ScheduleKind,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub c: f64,
    pub a: f64,
    pub alpha: usize,
    pub beta: f64,
    pub min_c: f64,
    pub max_lag: Option<usize>,
    pub error_vs_reference: Option<f64>,
    pub z_nonincreasing: Option<bool>,
    pub rate: Option<f64>,
    pub trace_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        }
    }

    pub fn human(&self) -> String {
        let mut s = format!(
            "{} with {} blocks ({:?} schedule, seed {}, {:?} engine)\n  a = {:.6e}, alpha = {}, min_c = {:.6e}, c = {:.6e}, beta = {:.6}\n  {} after {} iterations, residual {:.3e}",
            self.problem,
            self.alpha,
            self.schedule,
            self.seed,
            self.engine,
            self.a,
            self.alpha,
            self.min_c,
            self.c,
            self.beta,
            if self.converged { "converged" } else { "NOT converged" },
            self.iterations,
            self.final_residual
        );
        if let Some(e) = self.error_vs_reference {
            s += &format!(", error vs reference {e:.3e}");
        }
        if let Some(l) = self.max_lag {
            s += &format!(", max read lag {l}");
        }
        s
    }
}

/// Execute the spec once; writes the trace and a JSON summary when
/// `output.trace` is set.
pub fn cmd_run(spec: &RunSpec) -> Result<RunReport> {
    let prep = spec.prepare()?;
    let result = execute(&prep, &prep.schedule, prep.engine)?;
    let stats = analyze_trace(&result.trace).ok();
    let f = &prep.resolvent;
    let mut report = RunReport {
        problem: prep.problem.kind().name().to_string(),
        engine: prep.engine,
        schedule: prep.schedule.kind(),
        seed: prep.schedule.seed(),
        converged: result.converged,
        iterations: result.iterations,
        final_residual: result.final_residual,
        c: f.c(),
        a: prep.problem.modulus(),
        alpha: prep.problem.num_blocks(),
        beta: f.contraction_factor(),
        min_c: f.min_c(),
        max_lag: result.staleness.as_ref().map(|s| s.max_lag),
        error_vs_reference: error_vs(&result.x_final, prep.reference.as_ref()),
        z_nonincreasing: stats.as_ref().and_then(|s| s.z_nonincreasing),
        rate: stats.as_ref().and_then(|s| s.rate),
        trace_path: None,
        summary_path: None,
    };
    if let Some(path) = &spec.output.trace {
        write_trace(&result.trace, path, spec.output.format)?;
        let summary = spec.output.summary.clone().unwrap_or_else(|| summary_path(path));
        report.trace_path = Some(path.clone());
        report.summary_path = Some(summary.clone());
        write_json(&report, &summary)?;
    } else if let Some(summary) = &spec.output.summary {
        report.summary_path = Some(summary.clone());
        write_json(&report, summary)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    H3,
    H4,
    /// Sampled strong monotonicity against the declared modulus.
    Monotone,
    /// Symmetric / positive / nonexpansive test of the operator's matrix.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub seed: u64,
    pub samples: usize,
    pub c: f64,
    pub reports: Vec<HypothesisReport>,
    pub passed: bool,
}

impl CheckReport {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_OK
        } else {
            EXIT_HYPOTHESIS
        }
    }

    pub fn human(&self) -> String {
        let mut lines = vec![format!("hypothesis checks (c = {:.6e}, seed {}, {} samples)", self.c, self.seed, self.samples)];
        for r in &self.reports {
            lines.push(format!(
                "  {:<20} {}  worst violation {:.3e}",
                format!("{:?}", r.hypothesis),
                if r.passed { "pass" } else { "FAIL" },
                r.worst_violation
            ));
            for c in &r.conditions {
                lines.push(format!(
                    "    {:<16} {} ({:.3e})",
                    c.name,
                    if c.passed { "ok" } else { "violated" },
                    c.value
                ));
            }
        }
        lines.join("\n")
    }
}

/// Run the selected diagnostics. Samples are centered at the known solution
/// when the spec provides one.
pub fn cmd_check(spec: &RunSpec, which: &[CheckKind], samples: usize) -> Result<CheckReport> {
    if which.is_empty() {
        bail!("check: nothing to do, select at least one of h3, h4, monotone, linear");
    }
    if samples == 0 {
        bail!("check: --samples must be at least 1");
    }
    let prep = spec.prepare()?;
    let seed = prep.schedule.seed();
    let mut cfg = SampleConfig::new(samples, seed);
    if let Some(u) = &prep.reference {
        cfg = cfg.center(u.as_slice().to_vec());
    }
    let mut reports = Vec::new();
    for kind in which {
        let report = match kind {
            CheckKind::H3 => check_h3(&prep.resolvent, &cfg)?,
            CheckKind::H4 => check_h4(&prep.resolvent, &cfg)?,
            CheckKind::Linear => check_linear_h4(prep.problem.matrix(), samples, seed)?,
            CheckKind::Monotone => {
                let a = prep.problem.modulus();
                let est = estimate_modulus(&prep.problem, samples.max(2), seed)?;
                let violation = a - est;
                HypothesisReport {
                    hypothesis: Hypothesis::StrongMonotonicity,
                    samples: samples.max(2) - 1,
                    worst_violation: violation,
                    witness: None,
                    passed: est > 0.0 && violation <= 1e-8,
                    conditions: Vec::new(),
                }
            }
        };
        reports.push(report);
    }
    let passed = reports.iter().all(|r| r.passed);
    Ok(CheckReport {
        seed,
        samples,
        c: prep.resolvent.c(),
        reports,
        passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    C,
    SBound,
    SyncPeriod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRequest {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// For the `c` axis: values are multiples of `max(min_c, 1e-3)`.
    pub relative: bool,
    /// Run the values concurrently (independent runs).
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub converged: bool,
    pub iterations: Option<usize>,
    pub final_residual: Option<f64>,
    pub rate: Option<f64>,
    pub c: f64,
    pub s_bound: usize,
    pub sync_period: usize,
    /// `c < min_c`: outside the sufficient condition, reported without verdict.
    pub below_threshold: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub min_c: f64,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Rows at or above the threshold must converge; the rest are informational.
    pub fn passed(&self) -> bool {
        self.rows.iter().filter(|r| !r.below_threshold).all(|r| r.converged)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn human(&self) -> String {
        let mut lines = vec![format!("sweep over {:?} (min_c = {:.6e}, seed {})", self.axis, self.min_c, self.seed)];
        lines.push(format!(
            "  {:>12} {:>12} {:>10} {:>10} {:>12} {:>10}",
            "value", "c", "converged", "iters", "residual", "rate"
        ));
        for r in &self.rows {
            lines.push(format!(
                "  {:>12.5e} {:>12.5e} {:>10} {:>10} {:>12} {:>10}{}{}",
                r.value,
                r.c,
                r.converged,
                r.iterations.map_or("-".into(), |i| i.to_string()),
                r.final_residual.map_or("-".into(), |v| format!("{v:.3e}")),
                r.rate.map_or("-".into(), |v| format!("{v:.4}")),
                if r.below_threshold { "  (c < min_c: no guarantee)" } else { "" },
                r.error.as_ref().map_or(String::new(), |e| format!("  error: {e}")),
            ));
        }
        lines.join("\n")
    }
}

fn as_count(axis: &str, i: usize, v: f64, min: usize) -> Result<usize> {
    if v.fract() != 0.0 || v < min as f64 || !v.is_finite() {
        bail!("values[{i}]: {axis} needs an integer >= {min}, got {v}");
    }
    Ok(v as usize)
}

/// One simulated run per value; failures become rows.
pub fn cmd_sweep(spec: &RunSpec, req: &SweepRequest) -> Result<SweepReport> {
    if req.values.is_empty() {
        bail!("sweep: no values given");
    }
    let base = spec.prepare()?;
    let min_c = base.resolvent.min_c();
    let floor = asyncprox::operators::auto_c(base.problem.modulus(), base.problem.num_blocks())?;
    if req.axis != SweepAxis::C && spec.schedule.kind != ScheduleKind::RandomBoundedDelay {
        bail!("schedule.kind: sweeping {:?} needs the random_bounded_delay schedule", req.axis);
    }

    let mut variants = Vec::with_capacity(req.values.len());
    for (i, &v) in req.values.iter().enumerate() {
        let mut s = spec.clone();
        s.output = Default::default();
        match req.axis {
            SweepAxis::C => {
                let c = if req.relative { v * floor } else { v };
                if !(c > 0.0) || !c.is_finite() {
                    bail!("values[{i}]: c must be positive, got {c}");
                }
                s.solver.c = CMode::Explicit(c);
            }
            SweepAxis::SBound => s.schedule.s_bound = as_count("s_bound", i, v, 0)?,
            SweepAxis::SyncPeriod => s.schedule.sync_period = as_count("sync_period", i, v, 1)?,
        }
        variants.push((v, s));
    }

    let run_one = |(v, s): &(f64, RunSpec)| -> SweepRow {
        let c = match s.solver.c {
            CMode::Explicit(c) => c,
            CMode::Auto => base.resolvent.c(),
        };
        let mut row = SweepRow {
            value: *v,
            converged: false,
            iterations: None,
            final_residual: None,
            rate: None,
            c,
            s_bound: s.schedule.s_bound,
            sync_period: s.schedule.sync_period,
            below_threshold: c < min_c,
            error: None,
        };
        let outcome = s.prepare().and_then(|p| execute(&p, &p.schedule, Engine::Simulated));
        match outcome {
            Ok(r) => {
                row.converged = r.converged;
                row.iterations = Some(r.iterations);
                row.final_residual = Some(r.final_residual);
                row.rate = analyze_trace(&r.trace).ok().and_then(|t| t.rate);
            }
            Err(e) => row.error = Some(format!("{e:#}")),
        }
        row
    };

    let rows = if req.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = variants.iter().map(|v| scope.spawn(move || run_one(v))).collect();
            handles.into_iter().map(|h| h.join().expect("sweep run panicked")).collect()
        })
    } else {
        variants.iter().map(run_one).collect()
    };
    Ok(SweepReport {
        axis: req.axis,
        min_c,
        seed: spec.schedule.seed,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub schedule: Option<ScheduleKind>,
    pub engine: Engine,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub error_vs_oracle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub c: f64,
    pub seed: u64,
    /// `"spec"` or `"oracle"`; `None` when no reference could be computed.
    pub reference: Option<String>,
    pub rows: Vec<CompareRow>,
    /// Final iterates, parallel to `rows`; kept out of the serialized report.
    #[serde(skip)]
    pub finals: Vec<BlockVector>,
}

impl CompareReport {
    pub fn exit_code(&self) -> i32 {
        if self.rows.iter().all(|r| r.converged) {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn human(&self) -> String {
        let mut lines = vec![format!(
            "compare (c = {:.6e}, seed {}, reference: {})",
            self.c,
            self.seed,
            self.reference.as_deref().unwrap_or("none")
        )];
        for r in &self.rows {
            lines.push(format!(
                "  {:<22} {:<9} {:>8} iters  residual {:.3e}  error {}",
                r.label,
                if r.converged { "converged" } else { "FAILED" },
                r.iterations,
                r.final_residual,
                r.error_vs_oracle.map_or("-".into(), |e| format!("{e:.3e}"))
            ));
        }
        lines.join("\n")
    }
}

/// Jacobi and Gauss-Seidel (always simulated, as deterministic baselines)
/// against the spec's own schedule and engine, all with the same `c`.
pub fn cmd_compare(spec: &RunSpec) -> Result<CompareReport> {
    let prep = spec.prepare()?;
    let (reference, source) = match &prep.reference {
        Some(u) => (Some(u.clone()), Some("spec".to_string())),
        None => match solve_direct(&prep.problem) {
            Ok(u) => (Some(u), Some("oracle".to_string())),
            Err(_) => (None, None),
        },
    };
    let alpha = prep.problem.num_blocks();
    let runs = [
        ("jacobi".to_string(), Some(Schedule::jacobi(alpha)?), Engine::Simulated),
        ("gauss_seidel".to_string(), Some(Schedule::gauss_seidel(alpha)?), Engine::Simulated),
        match prep.engine {
            Engine::Simulated => (
                format!("spec ({})", serde_json::to_value(prep.schedule.kind())?.as_str().unwrap_or("?")),
                Some(prep.schedule.clone()),
                Engine::Simulated,
            ),
            Engine::Parallel => ("spec (parallel)".to_string(), None, Engine::Parallel),
        },
    ];
    let mut rows = Vec::new();
    let mut finals = Vec::new();
    for (label, schedule, engine) in runs {
        let sched = schedule.clone().unwrap_or_else(|| prep.schedule.clone());
        let r = execute(&prep, &sched, engine)?;
        rows.push(CompareRow {
            label,
            schedule: schedule.map(|s| s.kind()),
            engine,
            converged: r.converged,
            iterations: r.iterations,
            final_residual: r.final_residual,
            error_vs_oracle: error_vs(&r.x_final, reference.as_ref()),
        });
        finals.push(r.x_final);
    }
    Ok(CompareReport {
        c: prep.resolvent.c(),
        seed: prep.schedule.seed(),
        reference: source,
        rows,
        finals,
    })
}
