//! Sampled falsification checks for the convergence hypotheses, plus trace
//! analytics. Nothing here proves anything; a passing report only means no
//! counterexample was found among the samples.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::block_space::{euclidean_norm, inner_product, uniform_norm, BlockStructure, BlockVector};
use crate::engine::Trace;
use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::{FixedPointMap, Problem};

/// Absolute slack of every inequality, scaled by `1 + |lhs| + |rhs|`.
pub const SLACK: f64 = 1e-10;

pub const DEFAULT_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// `||F(x) - F(x')||_inf <= ||x - x'||_inf`
    H3,
    /// `||F(x) - F(x')||^2 <= <F(x) - F(x'), x - x'>`
    H4,
    StrongMonotonicity,
    /// Symmetric, positive and nonexpansive linear map, and h4 for it.
    LinearH4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

/// A named sub-condition of a check (used by the linear check).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub value: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub hypothesis: Hypothesis,
    pub samples: usize,
    /// Largest `lhs - rhs` over the samples; `<= 0` means the inequality held exactly.
    pub worst_violation: f64,
    pub witness: Option<Witness>,
    /// Every sample satisfied `lhs - rhs <= SLACK * (1 + |lhs| + |rhs|)` and
    /// every condition passed.
    pub passed: bool,
    pub conditions: Vec<Condition>,
}

impl HypothesisReport {
    fn new(hypothesis: Hypothesis, samples: usize) -> Self {
        Self {
            hypothesis,
            samples,
            worst_violation: f64::NEG_INFINITY,
            witness: None,
            passed: true,
            conditions: Vec::new(),
        }
    }

    fn observe(&mut self, x: &[f64], x_prime: &[f64], lhs: f64, rhs: f64) {
        let v = lhs - rhs;
        if v > SLACK * (1.0 + lhs.abs() + rhs.abs()) {
            self.passed = false;
        }
        if v > self.worst_violation {
            self.worst_violation = v;
            self.witness = Some(Witness {
                x: x.to_vec(),
                x_prime: x_prime.to_vec(),
                lhs,
                rhs,
            });
        }
    }

    fn condition(&mut self, name: &str, value: f64, passed: bool) {
        self.passed &= passed;
        self.conditions.push(Condition {
            name: name.to_string(),
            value,
            passed,
        });
    }
}

/// Where sample pairs are drawn: uniformly in the ball of `radius` around
/// `center` (origin when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub samples: usize,
    pub radius: f64,
    pub seed: u64,
    pub center: Option<Vec<f64>>,
}

impl SampleConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            radius: DEFAULT_RADIUS,
            seed,
            center: None,
        }
    }

    pub fn radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn center(mut self, center: Vec<f64>) -> Self {
        self.center = Some(center);
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::param("samples", "must be at least 1"));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::param("radius", format!("must be positive, got {}", self.radius)));
        }
        if let Some(c) = &self.center {
            if c.len() != n {
                return Err(Error::Dimension { expected: n, got: c.len() });
            }
        }
        Ok(())
    }

    /// The sample pairs; identical for equal configs, so h3 and h4 run on the
    /// same points.
    pub fn pairs(&self, structure: &BlockStructure) -> Result<Vec<(BlockVector, BlockVector)>> {
        let n = structure.dim();
        self.validate(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let center = self.center.clone().unwrap_or_else(|| vec![0.0; n]);
        let draw = |rng: &mut ChaCha8Rng| {
            let data = uniform_in_ball(rng, &center, self.radius);
            BlockVector::from_vec(structure.clone(), data).expect("length matches")
        };
        Ok((0..self.samples)
            .map(|_| (draw(&mut rng), draw(&mut rng)))
            .collect())
    }
}

fn uniform_in_ball(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let n = center.len();
    let dir: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
    center
        .iter()
        .zip(&dir)
        .map(|(c, d)| c + r * d / norm)
        .collect()
}

/// Max-norm nonexpansiveness on sampled pairs.
pub fn check_h3<F: FixedPointMap + ?Sized>(f: &F, cfg: &SampleConfig) -> Result<HypothesisReport> {
    let pairs = cfg.pairs(f.structure())?;
    let mut report = HypothesisReport::new(Hypothesis::H3, pairs.len());
    for (x, xp) in &pairs {
        let df = f.apply(x)?.sub(&f.apply(xp)?)?;
        let dx = x.sub(xp)?;
        report.observe(x.as_slice(), xp.as_slice(), uniform_norm(&df), uniform_norm(&dx));
    }
    Ok(report)
}

/// Firm nonexpansiveness on sampled pairs.
pub fn check_h4<F: FixedPointMap + ?Sized>(f: &F, cfg: &SampleConfig) -> Result<HypothesisReport> {
    let pairs = cfg.pairs(f.structure())?;
    let mut report = HypothesisReport::new(Hypothesis::H4, pairs.len());
    for (x, xp) in &pairs {
        let df = f.apply(x)?.sub(&f.apply(xp)?)?;
        let dx = x.sub(xp)?;
        let lhs = euclidean_norm(&df).powi(2);
        let rhs = inner_product(&df, &dx)?;
        report.observe(x.as_slice(), xp.as_slice(), lhs, rhs);
    }
    Ok(report)
}

/// Sufficient condition for h4 on a linear map: symmetric, positive,
/// nonexpansive; then `<Ax, x> - ||Ax||^2 >= 0` is checked on unit vectors.
pub fn check_linear_h4(a: &DMatrix<f64>, samples: usize, seed: u64) -> Result<HypothesisReport> {
    let n = linalg::check_square("A", a)?;
    if samples == 0 {
        return Err(Error::param("samples", "must be at least 1"));
    }
    let mut report = HypothesisReport::new(Hypothesis::LinearH4, samples);
    let asym = linalg::asymmetry(a);
    report.condition("symmetric", asym, asym <= SLACK);
    let norm = linalg::spectral_norm(a);
    report.condition("nonexpansive", norm, norm <= 1.0 + SLACK);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = vec![0.0; n];
    let mut min_quad = f64::INFINITY;
    for _ in 0..samples {
        let x = DVector::from_vec(uniform_in_ball(&mut rng, &origin, 1.0));
        let ax = a * &x;
        let quad = ax.dot(&x);
        min_quad = min_quad.min(quad);
        report.observe(x.as_slice(), &origin, ax.norm_squared(), quad);
    }
    report.condition("positive", min_quad, min_quad >= -SLACK);
    Ok(report)
}

/// Sampled lower envelope of `<T(u) - T(v), u - v> / ||u - v||^2`.
///
/// Points are drawn in the ball of radius 10 for unconstrained problems and
/// uniformly in the interior of the box otherwise, so only the single-valued
/// part of `T` is involved. Consecutive samples form the pairs.
pub fn estimate_modulus(problem: &Problem, samples: usize, seed: u64) -> Result<f64> {
    if samples < 2 {
        return Err(Error::param("samples", "need at least 2 samples"));
    }
    let n = problem.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = vec![0.0; n];
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|_| match problem.bounds() {
            None => uniform_in_ball(&mut rng, &origin, DEFAULT_RADIUS),
            Some(b) => (0..n)
                .map(|j| {
                    let (lo, hi) = (b.lower()[j], b.upper()[j]);
                    // open interval: (0, 1) excludes the faces
                    let t: f64 = rng.random_range(f64::EPSILON..1.0 - f64::EPSILON);
                    lo + t * (hi - lo)
                })
                .collect(),
        })
        .collect();
    let mut best = f64::INFINITY;
    for w in points.windows(2) {
        let (u, v) = (&w[0], &w[1]);
        let du = DVector::from_fn(n, |j, _| u[j] - v[j]);
        let d2 = du.norm_squared();
        if d2 == 0.0 {
            continue;
        }
        let dt = problem.single_valued(u) - problem.single_valued(v);
        best = best.min(dt.dot(&du) / d2);
    }
    if best.is_infinite() {
        return Err(Error::Numeric("all sampled pairs coincide".into()));
    }
    Ok(best)
}

/// First recorded iteration at which the residual fell below `r_0 * 10^-decade`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecadeHit {
    pub decade: u32,
    pub p: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub records: usize,
    /// `None` when the trace has no `z_p` values.
    pub z_nonincreasing: Option<bool>,
    pub z_violations: usize,
    /// Least-squares slope of `ln(residual)` against `p`.
    pub rate: Option<f64>,
    /// Why `rate` is missing, if it is.
    pub rate_note: Option<String>,
    pub decades: Vec<DecadeHit>,
}

/// Monotonicity of `z_p` (with slack `1e-12 (1 + z_0)`), empirical linear
/// rate of the residual and decade crossings.
pub fn analyze_trace(trace: &Trace) -> Result<TraceStats> {
    if trace.is_empty() {
        return Err(Error::param("trace", "trace is empty"));
    }
    let zs: Vec<f64> = trace.records.iter().filter_map(|r| r.z_p).collect();
    let (z_nonincreasing, z_violations) = if zs.is_empty() {
        (None, 0)
    } else {
        let slack = 1e-12 * (1.0 + zs[0]);
        let v = zs.windows(2).filter(|w| w[1] > w[0] + slack).count();
        (Some(v == 0), v)
    };

    let pts: Vec<(f64, f64)> = trace
        .records
        .iter()
        .filter(|r| r.residual_inf > 0.0 && r.residual_inf.is_finite())
        .map(|r| (r.p as f64, r.residual_inf.ln()))
        .collect();
    let (rate, rate_note) = fit_slope(&pts);

    let r0 = trace.records[0].residual_inf;
    let mut decades = Vec::new();
    if r0 > 0.0 {
        let mut k = 1;
        for rec in &trace.records {
            while rec.residual_inf <= r0 * 10f64.powi(k as i32) .recip() {
                decades.push(DecadeHit { decade: k, p: rec.p });
                k += 1;
                if k > 300 {
                    break;
                }
            }
        }
    }

    Ok(TraceStats {
        records: trace.len(),
        z_nonincreasing,
        z_violations,
        rate,
        rate_note,
        decades,
    })
}

fn fit_slope(pts: &[(f64, f64)]) -> (Option<f64>, Option<String>) {
    if pts.len() < 2 {
        return (None, Some("fewer than two positive residuals".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return (None, Some("all residuals recorded at one iteration".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (Some(sxy / sxx), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_simulated, RunConfig, TraceRecord};
    use crate::operators::{min_c, BoxProjection, BoxSet, LinearMap, Resolvent, SaddleParams};
    use crate::scheduler::Schedule;

    #[test]
    fn sampling_is_deterministic_and_in_ball() {
        let s = BlockStructure::even(5, 2).unwrap();
        let cfg = SampleConfig::new(50, 9).radius(2.0).center(vec![1.0; 5]);
        let a = cfg.pairs(&s).unwrap();
        assert_eq!(a, cfg.pairs(&s).unwrap());
        for (x, y) in &a {
            for v in [x, y] {
                let d: f64 = v.as_slice().iter().map(|t| (t - 1.0).powi(2)).sum::<f64>().sqrt();
                assert!(d <= 2.0 + 1e-12);
            }
        }
        assert!(SampleConfig::new(0, 1).pairs(&s).is_err());
        assert!(SampleConfig::new(3, 1).center(vec![0.0; 2]).pairs(&s).is_err());
    }

    #[test]
    fn h3_identity_like_resolvent_passes() {
        let p = Problem::affine_monotone(DMatrix::identity(4, 4), DVector::zeros(4))
            .unwrap()
            .with_blocks(BlockStructure::even(4, 2).unwrap())
            .unwrap();
        let f = Resolvent::new(p, 1e-9).unwrap();
        assert!(check_h3(&f, &SampleConfig::new(200, 1)).unwrap().passed);
    }

    /// `A = [[1, -k], [k, 1]]`: symmetric part `I`, so `a = 1`, but the
    /// skew part makes `(I + cA)^{-1}` expand the max norm for small `c`.
    fn skewed(k: f64) -> Problem {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -k, k, 1.0]);
        Problem::affine_monotone(a, DVector::zeros(2))
            .unwrap()
            .with_blocks(BlockStructure::even(2, 2).unwrap())
            .unwrap()
    }

    #[test]
    fn h3_violation_reproduced_by_hand() {
        let k = 10.0;
        let p = skewed(k);
        let c = 0.01 * min_c(1.0, 2).unwrap();
        let f = Resolvent::new(p, c).unwrap();
        let report = check_h3(&f, &SampleConfig::new(500, 4)).unwrap();
        assert!(!report.passed);
        assert!(report.worst_violation > 0.0);

        // (I + cA)^{-1} = [[1+c, ck], [-ck, 1+c]] / ((1+c)^2 + (ck)^2)
        let det = (1.0 + c).powi(2) + (c * k).powi(2);
        let apply = |x: &[f64]| [((1.0 + c) * x[0] + c * k * x[1]) / det, (-c * k * x[0] + (1.0 + c) * x[1]) / det];
        let w = report.witness.unwrap();
        let (fx, fxp) = (apply(&w.x), apply(&w.x_prime));
        let lhs = (fx[0] - fxp[0]).abs().max((fx[1] - fxp[1]).abs());
        let rhs = (w.x[0] - w.x_prime[0]).abs().max((w.x[1] - w.x_prime[1]).abs());
        assert!((lhs - w.lhs).abs() < 1e-12 && (rhs - w.rhs).abs() < 1e-12);
        assert!(lhs > rhs);

        // the hand-picked pair x = (1, 1), x' = 0 violates as well
        let f11 = apply(&[1.0, 1.0]);
        assert!(f11[0].abs().max(f11[1].abs()) > 1.0);
        // and at min_c the same operator is fine
        let ok = Resolvent::new(skewed(k), min_c(1.0, 2).unwrap()).unwrap();
        assert!(check_h3(&ok, &SampleConfig::new(500, 4)).unwrap().passed);
    }

    #[test]
    fn h4_examples() {
        let s = BlockStructure::even(3, 3).unwrap();
        let proj = BoxProjection::new(BoxSet::uniform(3, -1.0, 2.0).unwrap(), s.clone()).unwrap();
        assert!(check_h4(&proj, &SampleConfig::new(300, 2)).unwrap().passed);

        let twice = LinearMap::scaled_identity(2.0, s.clone());
        let r = check_h4(&twice, &SampleConfig::new(10, 2)).unwrap();
        assert!(!r.passed);
        // by hand at x = e_1, x' = 0: ||2 e_1||^2 = 4 > <2 e_1, e_1> = 2
        let e1 = BlockVector::unit(s.clone(), 0);
        let fe = twice.apply(&e1).unwrap();
        assert_eq!(euclidean_norm(&fe).powi(2), 4.0);
        assert_eq!(inner_product(&fe, &e1).unwrap(), 2.0);
    }

    #[test]
    fn linear_h4_examples() {
        let r = check_linear_h4(&DMatrix::identity(3, 3), 100, 1).unwrap();
        assert!(r.passed);
        assert!(r.worst_violation.abs() < 1e-15);

        assert!(check_linear_h4(&(DMatrix::identity(3, 3) * 0.5), 100, 1).unwrap().passed);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0]));
        assert!(check_linear_h4(&d, 100, 1).unwrap().passed);

        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let r = check_linear_h4(&rot, 100, 1).unwrap();
        assert!(!r.passed);
        let sym = r.conditions.iter().find(|c| c.name == "symmetric").unwrap();
        assert!(!sym.passed);
        assert_eq!(sym.value, 2.0);

        // expansive: fails nonexpansiveness
        let r = check_linear_h4(&(DMatrix::identity(2, 2) * 1.5), 10, 1).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn modulus_estimates() {
        let p = Problem::affine_monotone(DMatrix::identity(3, 3) * 3.0, DVector::zeros(3)).unwrap();
        assert!((estimate_modulus(&p, 100, 1).unwrap() - 3.0).abs() < 1e-12);

        let q = Problem::quadratic_min(DMatrix::identity(4, 4), DVector::zeros(4), None).unwrap();
        assert!((estimate_modulus(&q, 100, 1).unwrap() - 1.0).abs() < 1e-12);

        let saddle = Problem::saddle_quadratic(SaddleParams {
            p: DMatrix::identity(2, 2) * 2.0,
            r: DMatrix::identity(3, 3) * 5.0,
            k: DMatrix::from_fn(3, 2, |i, j| (i as f64 + 1.0) * (j as f64 - 2.0) * 7.0),
            p_lin: DVector::zeros(2),
            q_lin: DVector::zeros(3),
        })
        .unwrap();
        assert_eq!(saddle.modulus(), 2.0);
        assert!(estimate_modulus(&saddle, 500, 3).unwrap() >= 2.0 - 1e-8);
        assert!(estimate_modulus(&saddle, 1, 3).is_err());
    }

    #[test]
    fn trace_stats_for_scalar_jacobi() {
        let p = Problem::affine_monotone(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 2.0)).unwrap();
        let f = Resolvent::new(p.clone(), 1.0).unwrap();
        let cfg = RunConfig::new(1e-12, 1000).unwrap().reference(p.vector(vec![2.0]).unwrap());
        let r = run_simulated(&f, p.zeros(), &Schedule::jacobi(1).unwrap(), &cfg).unwrap();
        let stats = analyze_trace(&r.trace).unwrap();
        assert_eq!(stats.z_nonincreasing, Some(true));
        assert!((stats.rate.unwrap() - 0.5f64.ln()).abs() < 1e-9);
        // residual halves each step: decade k is reached at p = ceil(k log2 10)
        for hit in &stats.decades {
            assert_eq!(hit.p, (hit.decade as f64 * 10f64.log2()).ceil() as usize);
        }
    }

    #[test]
    fn trace_stats_flags_constant_trace() {
        let trace = Trace {
            records: vec![TraceRecord { p: 0, residual_inf: 0.0, z_p: Some(0.0), err_inf: Some(0.0), wall_ns: 0 }],
        };
        let stats = analyze_trace(&trace).unwrap();
        assert!(stats.rate.is_none());
        assert!(stats.rate_note.is_some());
        assert_eq!(stats.z_nonincreasing, Some(true));
        assert!(analyze_trace(&Trace::default()).is_err());
    }

    #[test]
    fn trace_stats_counts_z_increase() {
        let rec = |p, z| TraceRecord { p, residual_inf: 1.0, z_p: Some(z), err_inf: None, wall_ns: 0 };
        let trace = Trace { records: vec![rec(0, 1.0), rec(1, 0.5), rec(2, 0.7), rec(3, 0.2)] };
        let stats = analyze_trace(&trace).unwrap();
        assert_eq!(stats.z_nonincreasing, Some(false));
        assert_eq!(stats.z_violations, 1);
    }
}
