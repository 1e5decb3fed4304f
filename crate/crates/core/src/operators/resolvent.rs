use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::maps::FixedPointMap;
use super::sets::BoxSet;
use super::Problem;
use crate::block_space::{BlockStructure, BlockVector};
use crate::error::{Error, Result};
use crate::linalg;

/// Lower bound applied by [`auto_c`], so that a single block does not give `c = 0`.
pub const C_FLOOR: f64 = 1e-3;

pub const DEFAULT_INNER_TOL: f64 = 1e-12;

/// Smallest `c` for which `F = (I + cT)^{-1}` is nonexpansive in the uniform
/// norm over `alpha` blocks: `(sqrt(alpha) - 1) / a`.
pub fn min_c(a: f64, alpha: usize) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::param("a", format!("modulus must be positive, got {a}")));
    }
    if alpha == 0 {
        return Err(Error::param("alpha", "need at least one block"));
    }
    Ok(((alpha as f64).sqrt() - 1.0) / a)
}

/// `max(min_c(a, alpha), C_FLOOR)`.
pub fn auto_c(a: f64, alpha: usize) -> Result<f64> {
    Ok(min_c(a, alpha)?.max(C_FLOOR))
}

#[derive(Debug, Clone)]
enum Kernel {
    /// `(I + cM) y = x + c r`.
    Linear(LU<f64, Dyn, Dyn>),
    /// Diagonal `M` with a box: `y_j = clamp((x_j + c r_j) / (1 + c M_jj))`.
    Clamp { denom: Vec<f64> },
    /// Box with coupled `M`: projected iteration on `G(y) = (I + cM) y - (x + c r)`,
    /// finished by an exact solve on the detected free set.
    Projected { system: DMatrix<f64>, step: f64 },
}

/// The resolvent `F = (I + cT)^{-1}` of a catalog operator.
#[derive(Debug, Clone)]
pub struct Resolvent {
    problem: Problem,
    c: f64,
    inner_tol: f64,
    inner_max_iter: usize,
    kernel: Kernel,
}

impl Resolvent {
    pub fn new(problem: Problem, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::param("c", format!("must be positive and finite, got {c}")));
        }
        let n = problem.dim();
        let system = DMatrix::identity(n, n) + problem.matrix() * c;
        let kernel = match problem.bounds() {
            None => {
                let lu = system.lu();
                if !lu.is_invertible() {
                    return Err(Error::Numeric("I + cT is singular".into()));
                }
                Kernel::Linear(lu)
            }
            Some(_) if linalg::is_diagonal(problem.matrix()) => Kernel::Clamp {
                denom: (0..n).map(|j| system[(j, j)]).collect(),
            },
            Some(_) => {
                let step = if problem.is_symmetric() {
                    // projected gradient on a strongly convex quadratic: 1/L
                    1.0 / (1.0 + c * problem.symmetric_max_eigenvalue())
                } else {
                    // projection method on a strongly monotone affine map: mu/L^2
                    let mu = 1.0 + c * problem.modulus();
                    let lip = linalg::spectral_norm(&system);
                    mu / (lip * lip)
                };
                Kernel::Projected { system, step }
            }
        };
        Ok(Self {
            problem,
            c,
            inner_tol: DEFAULT_INNER_TOL,
            inner_max_iter: 100 * n,
            kernel,
        })
    }

    /// Resolvent with `c = auto_c(a, alpha)`.
    pub fn auto(problem: Problem) -> Result<Self> {
        let c = auto_c(problem.modulus(), problem.num_blocks())?;
        Self::new(problem, c)
    }

    /// Inner solver tolerance (relative to `1 + ||x + c r||_max`) and iteration cap.
    pub fn with_inner(mut self, tol: f64, max_iter: usize) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::param("inner_tol", format!("must be positive, got {tol}")));
        }
        if max_iter == 0 {
            return Err(Error::param("inner_max_iter", "must be at least 1"));
        }
        self.inner_tol = tol;
        self.inner_max_iter = max_iter;
        Ok(self)
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn inner_tol(&self) -> f64 {
        self.inner_tol
    }

    pub fn inner_max_iter(&self) -> usize {
        self.inner_max_iter
    }

    /// `beta = 1 / (1 + a c)`, the Euclidean Lipschitz constant of `F`.
    pub fn contraction_factor(&self) -> f64 {
        1.0 / (1.0 + self.problem.modulus() * self.c)
    }

    /// `min_c` for this problem's modulus and block count.
    pub fn min_c(&self) -> f64 {
        min_c(self.problem.modulus(), self.problem.num_blocks()).expect("validated problem")
    }

    /// The unique `y` with `x in y + cT(y)`.
    pub fn eval(&self, x: &BlockVector) -> Result<BlockVector> {
        x.check_structure(self.problem.structure())?;
        let rhs = DVector::from_column_slice(x.as_slice()) + self.problem.offset() * self.c;
        let y = match &self.kernel {
            Kernel::Linear(lu) => lu
                .solve(&rhs)
                .ok_or_else(|| Error::Numeric("I + cT is singular".into()))?,
            Kernel::Clamp { denom } => {
                let bounds = self.problem.bounds().expect("clamp kernel has a box");
                DVector::from_fn(rhs.len(), |j, _| bounds.clamp_coord(j, rhs[j] / denom[j]))
            }
            Kernel::Projected { system, step } => {
                let bounds = self.problem.bounds().expect("projected kernel has a box");
                self.solve_projected(system, *step, bounds, &rhs)?
            }
        };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("resolvent produced a non-finite value".into()));
        }
        BlockVector::from_vec(self.problem.shared_structure().clone(), y.as_slice().to_vec())
    }

    fn solve_projected(
        &self,
        system: &DMatrix<f64>,
        step: f64,
        bounds: &BoxSet,
        rhs: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let n = rhs.len();
        let tol = self.inner_tol * (1.0 + rhs.amax());
        let mut y = DVector::from_fn(n, |j, _| bounds.clamp_coord(j, rhs[j] / system[(j, j)]));
        let mut last_pattern: Option<Vec<bool>> = None;
        let mut residual = f64::INFINITY;
        for _ in 0..self.inner_max_iter {
            let g = system * &y - rhs;
            residual = natural_residual(bounds, &y, &g);
            if residual <= tol {
                return Ok(y);
            }
            let next = DVector::from_fn(n, |j, _| bounds.clamp_coord(j, y[j] - step * g[j]));
            let pattern: Vec<bool> = (0..n)
                .map(|j| next[j] == bounds.lower()[j] || next[j] == bounds.upper()[j])
                .collect();
            if last_pattern.as_ref() != Some(&pattern) {
                if let Some(z) = solve_on_free_set(system, rhs, &next, &pattern, bounds) {
                    let gz = system * &z - rhs;
                    if natural_residual(bounds, &z, &gz) <= tol {
                        return Ok(z);
                    }
                }
                last_pattern = Some(pattern);
            }
            y = next;
        }
        Err(Error::Convergence {
            context: "resolvent inner solve",
            iterations: self.inner_max_iter,
            residual,
        })
    }
}

fn natural_residual(bounds: &BoxSet, y: &DVector<f64>, g: &DVector<f64>) -> f64 {
    (0..y.len())
        .map(|j| {
            let d = y[j] - bounds.clamp_coord(j, y[j] - g[j]);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Hold the active coordinates of `guess` at their bounds and solve the
/// remaining equations exactly.
fn solve_on_free_set(
    system: &DMatrix<f64>,
    rhs: &DVector<f64>,
    guess: &DVector<f64>,
    active: &[bool],
    bounds: &BoxSet,
) -> Option<DVector<f64>> {
    let free: Vec<usize> = (0..active.len()).filter(|&j| !active[j]).collect();
    let mut z = guess.clone();
    if free.is_empty() {
        return Some(z);
    }
    let k = free.len();
    let sub = DMatrix::from_fn(k, k, |a, b| system[(free[a], free[b])]);
    let sub_rhs = DVector::from_fn(k, |a, _| {
        let i = free[a];
        rhs[i]
            - (0..active.len())
                .filter(|&j| active[j])
                .map(|j| system[(i, j)] * guess[j])
                .sum::<f64>()
    });
    let sol = sub.lu().solve(&sub_rhs)?;
    for (a, &i) in free.iter().enumerate() {
        z[i] = bounds.clamp_coord(i, sol[a]);
    }
    Some(z)
}

impl FixedPointMap for Resolvent {
    fn structure(&self) -> &BlockStructure {
        self.problem.structure()
    }

    fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        self.eval(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block_space::{euclidean_norm, inner_product, uniform_norm, BlockStructure};
    use crate::operators::SaddleParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_affine(a: f64, b: f64) -> Problem {
        Problem::affine_monotone(DMatrix::from_element(1, 1, a), DVector::from_element(1, b)).unwrap()
    }

    #[test]
    fn min_c_examples() {
        assert_eq!(min_c(3.7, 1).unwrap(), 0.0);
        assert_eq!(min_c(1.0, 4).unwrap(), 1.0);
        assert_eq!(min_c(0.5, 9).unwrap(), 4.0);
        assert!(min_c(0.0, 4).is_err());
        assert!(min_c(-1.0, 4).is_err());
        assert!(min_c(1.0, 0).is_err());
        assert_eq!(auto_c(2.0, 1).unwrap(), C_FLOOR);
        assert_eq!(auto_c(1.0, 4).unwrap(), 1.0);
    }

    #[test]
    fn contraction_factor_examples() {
        let r = Resolvent::new(scalar_affine(1.0, 0.0), 1.0).unwrap();
        assert_eq!(r.contraction_factor(), 0.5);
        let r = Resolvent::new(scalar_affine(2.0, 0.0), 3.0).unwrap();
        assert!((r.contraction_factor() - 1.0 / 7.0).abs() < 1e-16);
        let r = Resolvent::new(scalar_affine(1.0, 0.0), 1e-12).unwrap();
        assert!(r.contraction_factor() > 1.0 - 1e-11);
    }

    #[test]
    fn rejects_nonpositive_c() {
        assert!(Resolvent::new(scalar_affine(1.0, 0.0), 0.0).is_err());
        assert!(Resolvent::new(scalar_affine(1.0, 0.0), -1.0).is_err());
        assert!(Resolvent::new(scalar_affine(1.0, 0.0), f64::NAN).is_err());
    }

    #[test]
    fn affine_examples() {
        let p = Problem::affine_monotone(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        let r = Resolvent::new(p.clone(), 2.0).unwrap();
        assert_eq!(r.eval(&p.zeros()).unwrap().as_slice(), &[0.0; 3]);
        let x = p.vector(vec![3.0, -6.0, 9.0]).unwrap();
        let y = r.eval(&x).unwrap();
        for (a, b) in y.as_slice().iter().zip([1.0, -2.0, 3.0]) {
            assert!((a - b).abs() < 1e-15);
        }

        // y = (x + c b) / (1 + c a) with a=1, b=2, c=1, x=0
        let p = scalar_affine(1.0, 2.0);
        let r = Resolvent::new(p.clone(), 1.0).unwrap();
        assert_eq!(r.eval(&p.zeros()).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn box_vi_diagonal_clamps() {
        let p = Problem::box_vi(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 10.0),
            BoxSet::uniform(1, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let r = Resolvent::new(p.clone(), 1.0).unwrap();
        assert_eq!(r.eval(&p.zeros()).unwrap().as_slice(), &[1.0]);
        // brute force: y in [0,1] minimizing |x - y - c(Ay - b) - n| over normal cone
        // selections; on a grid, the inclusion 0 in y + (y - 10) + N(y) holds only at 1
        let inclusion_gap = |y: f64| {
            let g = y + (y - 10.0);
            if y == 1.0 {
                g.max(0.0) // N = [0, inf) at the upper face
            } else if y == 0.0 {
                (-g).max(0.0)
            } else {
                g.abs()
            }
        };
        let best = (0..=1000)
            .map(|k| k as f64 / 1000.0)
            .min_by(|a, b| inclusion_gap(*a).partial_cmp(&inclusion_gap(*b)).unwrap())
            .unwrap();
        assert_eq!(best, 1.0);
    }

    #[test]
    fn fixed_coordinate_when_bounds_meet() {
        let p = Problem::box_vi(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![5.0, 5.0]),
            BoxSet::new(vec![0.25, -1.0], vec![0.25, 1.0]).unwrap(),
        )
        .unwrap();
        let r = Resolvent::new(p.clone(), 1.0).unwrap();
        let y = r.eval(&p.vector(vec![100.0, 0.0]).unwrap()).unwrap();
        assert_eq!(y.as_slice()[0], 0.25);
    }

    fn coupled_box_vi(seed: u64, n: usize, symmetric: bool) -> Problem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut a = &g * g.transpose() + DMatrix::identity(n, n);
        if !symmetric {
            let s = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.5..1.5));
            a += &s - s.transpose();
        }
        let b = DVector::from_fn(n, |_, _| rng.random_range(-6.0..6.0));
        let bounds = BoxSet::uniform(n, -1.0, 1.0).unwrap();
        if symmetric {
            Problem::quadratic_min(a, b, Some(bounds)).unwrap()
        } else {
            Problem::box_vi(a, b, bounds).unwrap()
        }
    }

    #[test]
    fn projected_kernel_satisfies_inclusion() {
        for (seed, symmetric) in [(1, true), (2, false), (3, false), (4, true)] {
            let p = coupled_box_vi(seed, 6, symmetric);
            let r = Resolvent::new(p.clone(), 0.7).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..20 {
                let x = p.vector((0..6).map(|_| rng.random_range(-4.0..4.0)).collect()).unwrap();
                let y = r.eval(&x).unwrap();
                // x - y in cT(y): the natural residual of G(z) = z + c(Mz - r) - x vanishes
                let bounds = p.bounds().unwrap();
                let g = p.single_valued(y.as_slice());
                for j in 0..6 {
                    let gj = y.as_slice()[j] + 0.7 * g[j] - x.as_slice()[j];
                    let d = y.as_slice()[j] - bounds.clamp_coord(j, y.as_slice()[j] - gj);
                    assert!(d.abs() < 1e-11, "seed {seed} coord {j}: {d:e}");
                }
            }
        }
    }

    #[test]
    fn inner_solver_reports_nonconvergence() {
        let p = coupled_box_vi(9, 6, false);
        let r = Resolvent::new(p.clone(), 50.0).unwrap().with_inner(1e-300, 1).unwrap();
        let x = p.vector(vec![3.0; 6]).unwrap();
        match r.eval(&x) {
            Err(Error::Convergence { iterations, residual, .. }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 0.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    fn catalog() -> Vec<Problem> {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let spd = |rng: &mut ChaCha8Rng, n: usize| {
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            &g * g.transpose() + DMatrix::identity(n, n) * 0.3
        };
        let s = BlockStructure::even(6, 3).unwrap();
        let skew = {
            let g = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
            &g - g.transpose()
        };
        let affine = Problem::affine_monotone(
            spd(&mut rng, 6) + skew,
            DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0)),
        )
        .unwrap();
        let quad = Problem::quadratic_min(
            spd(&mut rng, 6),
            DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0)),
            None,
        )
        .unwrap();
        let saddle = Problem::saddle_quadratic(SaddleParams {
            p: spd(&mut rng, 3),
            r: spd(&mut rng, 3),
            k: DMatrix::from_fn(3, 3, |_, _| rng.random_range(-2.0..2.0)),
            p_lin: DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)),
            q_lin: DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)),
        })
        .unwrap();
        vec![
            affine,
            quad,
            saddle,
            coupled_box_vi(5, 6, false),
            coupled_box_vi(6, 6, true),
        ]
        .into_iter()
        .map(|p| p.with_blocks(s.clone()).unwrap())
        .collect()
    }

    #[test]
    fn resolvent_properties_on_catalog() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in catalog() {
            for c in [0.05, p.modulus().recip() * (3f64.sqrt() - 1.0), 4.0] {
                let r = Resolvent::new(p.clone(), c).unwrap();
                let beta = r.contraction_factor();
                let max_norm_ok = c >= r.min_c();
                for _ in 0..200 {
                    let x = p.vector((0..6).map(|_| rng.random_range(-10.0..10.0)).collect()).unwrap();
                    let xp = p.vector((0..6).map(|_| rng.random_range(-10.0..10.0)).collect()).unwrap();
                    let (fx, fxp) = (r.eval(&x).unwrap(), r.eval(&xp).unwrap());
                    let df = fx.sub(&fxp).unwrap();
                    let dx = x.sub(&xp).unwrap();
                    // firm nonexpansiveness
                    let lhs = euclidean_norm(&df).powi(2);
                    let rhs = inner_product(&df, &dx).unwrap();
                    assert!(lhs <= rhs + 1e-10 * (1.0 + lhs + rhs.abs()), "{}: h4", p.kind().name());
                    // contraction
                    assert!(euclidean_norm(&df) <= beta * euclidean_norm(&dx) + 1e-10);
                    if max_norm_ok {
                        assert!(uniform_norm(&df) <= uniform_norm(&dx) + 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn fixed_points_are_solutions() {
        // closed form: Q diagonal, q given, no box -> x* = Q^{-1} q
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0]));
        let lin = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let p = Problem::quadratic_min(q, lin, None).unwrap();
        let r = Resolvent::new(p.clone(), 1.5).unwrap();
        let star = p.vector(vec![1.0, 1.0, 0.5]).unwrap();
        let tol = p.solution_residual(&star).unwrap();
        assert!(tol <= 1e-15);
        let fp = euclidean_norm(&r.eval(&star).unwrap().sub(&star).unwrap());
        assert!(fp <= 1e-15 + tol * (1.0 + 1.5 * p.operator_norm()));

        // conversely a non-solution is not fixed
        let off = p.vector(vec![1.0, 1.0, 0.0]).unwrap();
        assert!(p.solution_residual(&off).unwrap() > 0.1);
        assert!(euclidean_norm(&r.eval(&off).unwrap().sub(&off).unwrap()) > 0.01);
    }
}
