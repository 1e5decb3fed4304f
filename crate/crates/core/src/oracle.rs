//! Reference solutions and solution certificates.
//!
//! Deliberately shares no numerics with the resolvent: dense systems use the
//! hand-written elimination below, box problems use a proximal-point outer
//! loop with extragradient inner steps and a free-set polish.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::block_space::BlockVector;
use crate::error::{Error, Result};
use crate::operators::{BoxSet, Problem, ProblemKind, SaddleParams};

/// Largest dimension `solve_direct` accepts.
pub const MAX_DIM: usize = 500;

/// Natural residual a reference solution must reach.
pub const CERT_TOL: f64 = 1e-10;

type Rows = Vec<Vec<f64>>;

fn rows_of(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Rows, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        if a[piv][col].abs() <= 1e-14 * scale {
            return Err(Error::Numeric(format!("singular system at column {col}")));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for i in col + 1..n {
            let f = a[i][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[i][k] -= f * a[col][k];
            }
            b[i] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Ok(x)
}

/// `(M, r, box)` with `T(x) = Mx - r (+ N_box)`, rebuilt from the problem
/// data rather than taken from the assembled operator.
fn affine_data(kind: &ProblemKind) -> (Rows, Vec<f64>, Option<BoxSet>) {
    match kind {
        ProblemKind::AffineMonotone { a, b } => (rows_of(a), b.iter().copied().collect(), None),
        ProblemKind::QuadraticMin { q, linear, bounds } => {
            (rows_of(q), linear.iter().copied().collect(), bounds.clone())
        }
        ProblemKind::BoxVi { a, b, bounds } => (rows_of(a), b.iter().copied().collect(), Some(bounds.clone())),
        ProblemKind::SaddleQuadratic(sp) => {
            let (n, m) = (sp.n(), sp.m());
            let mut rows = vec![vec![0.0; n + m]; n + m];
            for i in 0..n {
                for j in 0..n {
                    rows[i][j] = sp.p[(i, j)];
                }
                for j in 0..m {
                    rows[i][n + j] = sp.k[(j, i)];
                }
            }
            for i in 0..m {
                for j in 0..n {
                    rows[n + i][j] = -sp.k[(i, j)];
                }
                for j in 0..m {
                    rows[n + i][n + j] = sp.r[(i, j)];
                }
            }
            let r = sp.p_lin.iter().chain(sp.q_lin.iter()).map(|v| -v).collect();
            (rows, r, None)
        }
    }
}

fn natural_residual(m: &[Vec<f64>], r: &[f64], bounds: &BoxSet, x: &[f64]) -> f64 {
    let g = matvec(m, x);
    (0..x.len())
        .map(|j| {
            let d = x[j] - bounds.clamp_coord(j, x[j] - (g[j] - r[j]));
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Solve `0 in T(x)` to a natural residual of at most `CERT_TOL`.
pub fn solve_direct(problem: &Problem) -> Result<BlockVector> {
    let n = problem.dim();
    if n > MAX_DIM {
        return Err(Error::param("dim", format!("direct oracle supports n <= {MAX_DIM}, got {n}")));
    }
    let (m, r, bounds) = affine_data(problem.kind());
    let x = match &bounds {
        None => {
            let x = gauss_solve(m.clone(), r.clone())?;
            let g = matvec(&m, &x);
            let res = g.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = 1.0 + r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if res > CERT_TOL * scale {
                return Err(Error::Convergence { context: "direct solve", iterations: 1, residual: res });
            }
            x
        }
        Some(b) => solve_box(&m, &r, b, problem.modulus())?,
    };
    problem.vector(x)
}

fn solve_box(m: &[Vec<f64>], r: &[f64], bounds: &BoxSet, modulus: f64) -> Result<Vec<f64>> {
    let n = r.len();
    // proximal point: x <- argsol of 0 in (I + cT)(y) - x, strongly monotone with modulus 1 + c a
    let c = 10.0 / modulus.max(1e-12);
    let sys: Rows = (0..n)
        .map(|i| (0..n).map(|j| c * m[i][j] + if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let frob = sys.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let tau = 0.5 / frob;

    let mut x = bounds.project(&vec![0.0; n]);
    let mut y = x.clone();
    for _ in 0..2000 {
        let rhs: Vec<f64> = (0..n).map(|j| x[j] + c * r[j]).collect();
        let scale = 1.0 + rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for _ in 0..100_000 {
            let g = matvec(&sys, &y);
            let half: Vec<f64> = (0..n).map(|j| bounds.clamp_coord(j, y[j] - tau * (g[j] - rhs[j]))).collect();
            let gh = matvec(&sys, &half);
            let next: Vec<f64> = (0..n).map(|j| bounds.clamp_coord(j, y[j] - tau * (gh[j] - rhs[j]))).collect();
            let step = next.iter().zip(&y).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
            y = next;
            if step <= 1e-15 * scale {
                break;
            }
        }
        let delta = y.iter().zip(&x).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        x.clone_from(&y);
        if delta <= 1e-13 * (1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
            break;
        }
        if let Some(p) = polish(m, r, bounds, &x) {
            if natural_residual(m, r, bounds, &p) <= CERT_TOL {
                x = p;
                break;
            }
        }
    }
    if let Some(p) = polish(m, r, bounds, &x) {
        if natural_residual(m, r, bounds, &p) <= natural_residual(m, r, bounds, &x) {
            x = p;
        }
    }
    let res = natural_residual(m, r, bounds, &x);
    if res > CERT_TOL {
        return Err(Error::Convergence { context: "box oracle", iterations: 0, residual: res });
    }
    Ok(x)
}

/// Re-solve exactly with the coordinates that sit on a bound (and are pushed
/// against it) held fixed.
fn polish(m: &[Vec<f64>], r: &[f64], bounds: &BoxSet, x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len();
    let g = matvec(m, x);
    let (lo, hi) = (bounds.lower(), bounds.upper());
    let fixed: Vec<bool> = (0..n)
        .map(|j| (x[j] == lo[j] && g[j] - r[j] >= 0.0) || (x[j] == hi[j] && g[j] - r[j] <= 0.0) || lo[j] == hi[j])
        .collect();
    let free: Vec<usize> = (0..n).filter(|&j| !fixed[j]).collect();
    let mut out = x.to_vec();
    if free.is_empty() {
        return Some(out);
    }
    let a: Rows = free.iter().map(|&i| free.iter().map(|&j| m[i][j]).collect()).collect();
    let b: Vec<f64> = free
        .iter()
        .map(|&i| r[i] - (0..n).filter(|&j| fixed[j]).map(|j| m[i][j] * x[j]).sum::<f64>())
        .collect();
    let sol = gauss_solve(a, b).ok()?;
    for (k, &j) in free.iter().enumerate() {
        out[j] = sol[k];
    }
    bounds.contains(&out).then_some(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleVerdict {
    pub passed: bool,
    /// `true` when no probe was actually evaluated.
    pub vacuous: bool,
    pub probes: usize,
    /// Largest amount by which a probe beat `L(x*, y*)` in the wrong direction.
    pub worst_violation: f64,
}

const PROBE_STEPS: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];

/// Probe `L(x*, y) <= L(x*, y*) <= L(x, y*)` along random directions with
/// step sizes cycling through `1e-3 .. 1` and both signs.
pub fn saddle_check(params: &SaddleParams, x: &[f64], y: &[f64], probes: usize, seed: u64) -> Result<SaddleVerdict> {
    if x.len() != params.n() {
        return Err(Error::Dimension { expected: params.n(), got: x.len() });
    }
    if y.len() != params.m() {
        return Err(Error::Dimension { expected: params.m(), got: y.len() });
    }
    let l_star = params.lagrangian(x, y);
    let slack = 1e-9 * (1.0 + l_star.abs());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let unit = |len: usize, rng: &mut ChaCha8Rng| {
        let d: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        d.into_iter().map(|v| v / norm).collect::<Vec<f64>>()
    };
    for k in 0..probes {
        let delta = PROBE_STEPS[k % PROBE_STEPS.len()];
        let dx = unit(x.len(), &mut rng);
        let dy = unit(y.len(), &mut rng);
        for sign in [1.0, -1.0] {
            let xs: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + sign * delta * d).collect();
            let ys: Vec<f64> = y.iter().zip(&dy).map(|(a, d)| a + sign * delta * d).collect();
            worst = worst.max(params.lagrangian(x, &ys) - l_star);
            worst = worst.max(l_star - params.lagrangian(&xs, y));
        }
    }
    Ok(SaddleVerdict {
        passed: probes == 0 || worst <= slack,
        vacuous: probes == 0,
        probes,
        worst_violation: if probes == 0 { 0.0 } else { worst },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViVerdict {
    pub passed: bool,
    /// Most negative `<Ax - b, y - x>` found.
    pub worst: f64,
    pub checked: usize,
    /// Vertices were enumerated rather than sampled.
    pub exhaustive: bool,
}

const VI_TOL: f64 = -1e-9;
const VERTEX_LIMIT: usize = 12;
const VI_SAMPLES: usize = 1000;

/// Check `<Ax - b, y - x> >= 0` over the box. The map is linear in `y`, so the
/// vertices suffice; they are enumerated for `n <= 12` and sampled otherwise.
pub fn vi_check(a: &DMatrix<f64>, b: &DVector<f64>, bounds: &BoxSet, x: &[f64]) -> Result<ViVerdict> {
    let n = x.len();
    if a.nrows() != n || a.ncols() != n || b.len() != n || bounds.dim() != n {
        return Err(Error::Dimension { expected: n, got: a.nrows() });
    }
    if !bounds.contains(x) {
        return Err(Error::Domain("candidate lies outside the box".into()));
    }
    let g: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)] * x[j]).sum::<f64>() - b[i])
        .collect();
    let eval = |pick_upper: &dyn Fn(usize) -> bool| -> f64 {
        (0..n)
            .map(|j| {
                let y = if pick_upper(j) { bounds.upper()[j] } else { bounds.lower()[j] };
                g[j] * (y - x[j])
            })
            .sum()
    };
    let mut worst = f64::INFINITY;
    let (checked, exhaustive) = if n <= VERTEX_LIMIT {
        let count = 1usize << n;
        for mask in 0..count {
            worst = worst.min(eval(&|j| mask >> j & 1 == 1));
        }
        (count, true)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..VI_SAMPLES {
            let bits: Vec<bool> = (0..n).map(|_| rand::Rng::random(&mut rng)).collect();
            worst = worst.min(eval(&|j| bits[j]));
        }
        (VI_SAMPLES, false)
    };
    Ok(ViVerdict {
        passed: worst >= VI_TOL,
        worst,
        checked,
        exhaustive,
    })
}
