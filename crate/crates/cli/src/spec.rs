//! Run specifications: TOML (or JSON) files describing a problem, a schedule
//! and solver settings.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use asyncprox::engine::{ParallelConfig, RunConfig};
use asyncprox::linalg::matrix_from_rows;
use asyncprox::operators::{auto_c, min_c, BoxSet, Problem, Resolvent, SaddleParams};
use asyncprox::{BlockStructure, BlockVector, Schedule, ScheduleKind};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Environment variable capping the parallel worker count.
pub const THREADS_ENV: &str = "ASYNCPROX_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub parallel: ParallelSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory `@file` references resolve against; set by [`RunSpec::load`].
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProblemType {
    AffineMonotone,
    QuadraticMin,
    SaddleQuadratic,
    BoxVi,
}

/// Inline row-major matrix or `"@path.csv"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Rows(Vec<Vec<f64>>),
    File(String),
}

/// Block layout: a number of (near-)equal blocks, or explicit sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockSpec {
    Count(usize),
    Sizes(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(rename = "type")]
    pub kind: ProblemType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<MatrixSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<MatrixSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<MatrixSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<MatrixSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<MatrixSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_lin: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_lin: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<BlockSpec>,
    /// Overrides the computed strong monotonicity modulus (must not exceed it).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<f64>,
    /// Known solution; enables `z_p` / `err_inf` tracking and error reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default = "default_kind")]
    pub kind: ScheduleKind,
    #[serde(default)]
    pub s_bound: usize,
    #[serde(default = "default_sync_period")]
    pub sync_period: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_kind() -> ScheduleKind {
    ScheduleKind::Jacobi
}

fn default_sync_period() -> usize {
    10
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            s_bound: 0,
            sync_period: default_sync_period(),
            seed: 0,
        }
    }
}

/// `c = "auto"` picks `max(min_c, 1e-3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CMode {
    Auto,
    Explicit(f64),
}

impl Serialize for CMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CMode::Auto => s.serialize_str("auto"),
            CMode::Explicit(c) => s.serialize_f64(*c),
        }
    }
}

impl<'de> Deserialize<'de> for CMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(c) => Ok(CMode::Explicit(c)),
            Raw::Str(s) if s == "auto" => Ok(CMode::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected \"auto\" or a number, got {s:?}"))),
        }
    }
}

impl fmt::Display for CMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CMode::Auto => f.write_str("auto"),
            CMode::Explicit(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Simulated,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_c")]
    pub c: CMode,
    #[serde(default = "default_engine")]
    pub engine: Engine,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_tol: Option<f64>,
}

fn default_c() -> CMode {
    CMode::Auto
}
fn default_engine() -> Engine {
    Engine::Simulated
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    50_000
}
fn default_record_every() -> usize {
    1
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            c: default_c(),
            engine: default_engine(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            record_every: default_record_every(),
            inner_tol: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelSpec {
    /// Defaults to one per block, capped by `ASYNCPROX_THREADS`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub staleness_cap: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    Csv,
    #[default]
    Jsonl,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(default)]
    pub format: TraceFormat,
    /// Defaults to the trace path with a `.summary.json` suffix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

/// Everything needed to execute a spec.
pub struct Prepared {
    pub problem: Problem,
    pub resolvent: Resolvent,
    pub x0: BlockVector,
    pub reference: Option<BlockVector>,
    pub schedule: Schedule,
    pub run: RunConfig,
    pub parallel: ParallelConfig,
    pub engine: Engine,
}

impl RunSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| anyhow!("invalid spec: {e}"))?;
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| anyhow!("invalid spec: {e}"))
    }

    /// TOML unless the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading spec {}", path.display()))?;
        let mut spec = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .with_context(|| format!("in {}", path.display()))?;
        spec.base_dir = path.parent().map(Path::to_path_buf);
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Field-level checks that do not need the assembled problem.
    pub fn validate(&self) -> Result<()> {
        if let CMode::Explicit(c) = self.solver.c {
            if !(c > 0.0) || !c.is_finite() {
                bail!("solver.c: must be a positive number or \"auto\", got {c}");
            }
        }
        if !(self.solver.tol > 0.0) {
            bail!("solver.tol: must be positive, got {}", self.solver.tol);
        }
        if self.solver.max_iter == 0 {
            bail!("solver.max_iter: must be at least 1");
        }
        if self.solver.record_every == 0 {
            bail!("solver.record_every: must be at least 1");
        }
        if let Some(t) = self.solver.inner_tol {
            if !(t > 0.0) {
                bail!("solver.inner_tol: must be positive, got {t}");
            }
        }
        if self.schedule.sync_period == 0 {
            bail!("schedule.sync_period: must be at least 1");
        }
        if self.parallel.workers == Some(0) {
            bail!("parallel.workers: must be at least 1");
        }
        if self.parallel.epoch_len == Some(0) {
            bail!("parallel.epoch_len: must be at least 1");
        }
        if let Some(m) = self.problem.modulus {
            if !(m > 0.0) {
                bail!("problem.modulus: must be positive, got {m}");
            }
        }
        Ok(())
    }

    fn matrix(&self, field: &str, src: Option<&MatrixSource>) -> Result<DMatrix<f64>> {
        let src = src.ok_or_else(|| anyhow!("problem.{field}: required for type {:?}", self.problem.kind))?;
        let rows = match src {
            MatrixSource::Rows(rows) => rows.clone(),
            MatrixSource::File(name) => {
                let rel = name
                    .strip_prefix('@')
                    .ok_or_else(|| anyhow!("problem.{field}: file references start with '@', got {name:?}"))?;
                let path = self.base_dir.as_deref().unwrap_or(Path::new(".")).join(rel);
                read_csv_matrix(&path).with_context(|| format!("problem.{field}"))?
            }
        };
        matrix_from_rows(&rows).map_err(|e| anyhow!("problem.{field}: {e}"))
    }

    fn vector(&self, field: &str, v: Option<&Vec<f64>>) -> Result<DVector<f64>> {
        let v = v.ok_or_else(|| anyhow!("problem.{field}: required for type {:?}", self.problem.kind))?;
        Ok(DVector::from_column_slice(v))
    }

    fn bounds(&self, required: bool) -> Result<Option<BoxSet>> {
        match (&self.problem.lower, &self.problem.upper) {
            (Some(lo), Some(hi)) => Ok(Some(
                BoxSet::new(lo.clone(), hi.clone()).map_err(|e| anyhow!("problem.lower/upper: {e}"))?,
            )),
            (None, None) if !required => Ok(None),
            (None, None) => bail!("problem.lower: required for type {:?}", self.problem.kind),
            (None, Some(_)) => bail!("problem.lower: missing while problem.upper is set"),
            (Some(_), None) => bail!("problem.upper: missing while problem.lower is set"),
        }
    }

    /// Assemble the operator, including the block layout and modulus override.
    pub fn problem(&self) -> Result<Problem> {
        let ps = &self.problem;
        let problem = match ps.kind {
            ProblemType::AffineMonotone => {
                Problem::affine_monotone(self.matrix("a", ps.a.as_ref())?, self.vector("b", ps.b.as_ref())?)
            }
            ProblemType::QuadraticMin => Problem::quadratic_min(
                self.matrix("q", ps.q.as_ref())?,
                self.vector("linear", ps.linear.as_ref())?,
                self.bounds(false)?,
            ),
            ProblemType::SaddleQuadratic => Problem::saddle_quadratic(SaddleParams {
                p: self.matrix("p", ps.p.as_ref())?,
                r: self.matrix("r", ps.r.as_ref())?,
                k: self.matrix("k", ps.k.as_ref())?,
                p_lin: self.vector("p_lin", ps.p_lin.as_ref())?,
                q_lin: self.vector("q_lin", ps.q_lin.as_ref())?,
            }),
            ProblemType::BoxVi => Problem::box_vi(
                self.matrix("a", ps.a.as_ref())?,
                self.vector("b", ps.b.as_ref())?,
                self.bounds(true)?.expect("required"),
            ),
        }
        .map_err(|e| anyhow!("problem: {e}"))?;
        let n = problem.dim();
        let structure = match &ps.blocks {
            None => BlockStructure::single(n),
            Some(BlockSpec::Count(alpha)) => BlockStructure::even(n, *alpha),
            Some(BlockSpec::Sizes(sizes)) => BlockStructure::new(sizes.clone()),
        }
        .map_err(|e| anyhow!("problem.blocks: {e}"))?;
        let mut problem = problem.with_blocks(structure).map_err(|e| anyhow!("problem.blocks: {e}"))?;
        if let Some(a) = ps.modulus {
            problem = problem.with_modulus(a).map_err(|e| anyhow!("problem.modulus: {e}"))?;
        }
        Ok(problem)
    }

    /// The `c` this spec selects for `problem`.
    pub fn c_value(&self, problem: &Problem) -> Result<f64> {
        match self.solver.c {
            CMode::Explicit(c) => Ok(c),
            CMode::Auto => auto_c(problem.modulus(), problem.num_blocks()).map_err(|e| anyhow!("solver.c: {e}")),
        }
    }

    pub fn min_c(&self, problem: &Problem) -> Result<f64> {
        Ok(min_c(problem.modulus(), problem.num_blocks())?)
    }

    pub fn resolvent(&self, problem: &Problem, c: f64) -> Result<Resolvent> {
        let mut f = Resolvent::new(problem.clone(), c).map_err(|e| anyhow!("solver.c: {e}"))?;
        if let Some(tol) = self.solver.inner_tol {
            let max_iter = f.inner_max_iter();
            f = f.with_inner(tol, max_iter).map_err(|e| anyhow!("solver.inner_tol: {e}"))?;
        }
        Ok(f)
    }

    pub fn schedule(&self, blocks: usize) -> Result<Schedule> {
        let s = &self.schedule;
        Schedule::new(s.kind, blocks, s.s_bound, s.sync_period, s.seed).map_err(|e| anyhow!("schedule: {e}"))
    }

    /// Worker count after applying `ASYNCPROX_THREADS`.
    pub fn parallel_config(&self, blocks: usize) -> Result<ParallelConfig> {
        let mut workers = self.parallel.workers.unwrap_or(blocks);
        if let Ok(cap) = std::env::var(THREADS_ENV) {
            let cap: usize = cap
                .trim()
                .parse()
                .map_err(|_| anyhow!("{THREADS_ENV}: expected a positive integer, got {cap:?}"))?;
            if cap == 0 {
                bail!("{THREADS_ENV}: must be at least 1");
            }
            workers = workers.min(cap);
        }
        let epoch_len = self.parallel.epoch_len.unwrap_or(ParallelConfig::DEFAULT_EPOCH_LEN);
        Ok(ParallelConfig {
            workers,
            epoch_len,
            staleness_cap: self.parallel.staleness_cap.unwrap_or(blocks * epoch_len),
        })
    }

    fn point(&self, problem: &Problem, field: &str, v: &[f64]) -> Result<BlockVector> {
        problem.vector(v.to_vec()).map_err(|e| anyhow!("problem.{field}: {e}"))
    }

    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        let problem = self.problem()?;
        let c = self.c_value(&problem)?;
        let resolvent = self.resolvent(&problem, c)?;
        let x0 = match &self.problem.x0 {
            Some(v) => self.point(&problem, "x0", v)?,
            None => problem.zeros(),
        };
        let reference = match &self.problem.solution {
            Some(v) => Some(self.point(&problem, "solution", v)?),
            None => None,
        };
        let schedule = self.schedule(problem.num_blocks())?;
        let mut run = RunConfig::new(self.solver.tol, self.solver.max_iter)
            .and_then(|r| r.record_every(self.solver.record_every))
            .map_err(|e| anyhow!("solver: {e}"))?;
        if let Some(u) = &reference {
            run = run.reference(u.clone());
        }
        let parallel = self.parallel_config(problem.num_blocks())?;
        Ok(Prepared {
            problem,
            resolvent,
            x0,
            reference,
            schedule,
            run,
            parallel,
            engine: self.solver.engine,
        })
    }
}

/// Headerless CSV of numbers, one matrix row per line.
pub fn read_csv_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        rows.push(row);
    }
    Ok(rows)
}
