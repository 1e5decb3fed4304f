//! Randomized end-to-end properties over generated catalog instances.

use asyncprox::block_space::uniform_distance;
use asyncprox::diagnostics::{check_h3, check_h4, estimate_modulus, SampleConfig};
use asyncprox::engine::{run_simulated, RunConfig};
use asyncprox::operators::{min_c, BoxSet, FixedPointMap, Problem, ProblemKind, Resolvent, SaddleParams};
use asyncprox::oracle::{solve_direct, vi_check};
use asyncprox::{euclidean_norm, inner_product, BlockStructure, Schedule};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Variant {
    Affine,
    Quadratic,
    QuadraticBox,
    Saddle,
    BoxVi,
}

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![
        Just(Variant::Affine),
        Just(Variant::Quadratic),
        Just(Variant::QuadraticBox),
        Just(Variant::Saddle),
        Just(Variant::BoxVi),
    ]
}

/// Deterministic pseudo-random entries in [-1, 1] from a seed.
fn entries(seed: u64, count: usize) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..count)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}

fn dominant(n: usize, seed: u64) -> DMatrix<f64> {
    DMatrix::from_vec(n, n, entries(seed, n * n)) + DMatrix::identity(n, n) * (n as f64 + 0.5)
}

fn spd(n: usize, seed: u64) -> DMatrix<f64> {
    let g = DMatrix::from_vec(n, n, entries(seed, n * n));
    g.transpose() * g + DMatrix::identity(n, n)
}

fn build(v: &Variant, n: usize, alpha: usize, seed: u64) -> Problem {
    let rhs = DVector::from_vec(entries(seed ^ 0xabc, n)) * 3.0;
    let bounds = BoxSet::uniform(n, -0.5, 0.5).unwrap();
    let p = match v {
        Variant::Affine => Problem::affine_monotone(dominant(n, seed), rhs),
        Variant::Quadratic => Problem::quadratic_min(spd(n, seed), rhs, None),
        Variant::QuadraticBox => Problem::quadratic_min(spd(n, seed), rhs * 4.0, Some(bounds)),
        Variant::BoxVi => Problem::box_vi(dominant(n, seed), rhs * 4.0, bounds),
        Variant::Saddle => {
            let nx = n / 2;
            let my = n - nx;
            Problem::saddle_quadratic(SaddleParams {
                p: spd(nx, seed),
                r: spd(my, seed ^ 1),
                k: DMatrix::from_vec(my, nx, entries(seed ^ 2, my * nx)) * 2.0,
                p_lin: DVector::from_vec(entries(seed ^ 3, nx)),
                q_lin: DVector::from_vec(entries(seed ^ 4, my)),
            })
        }
    }
    .unwrap();
    p.with_blocks(BlockStructure::even(n, alpha).unwrap()).unwrap()
}

fn instance() -> impl Strategy<Value = Problem> {
    (variant(), 2usize..=8, 1usize..=4, any::<u64>()).prop_map(|(v, n, alpha, seed)| build(&v, n, alpha.min(n), seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn resolvent_hypotheses(p in instance(), log_c in -3.0f64..1.0, seed in any::<u64>()) {
        let c = 10f64.powf(log_c);
        let f = Resolvent::new(p.clone(), c).unwrap();
        let cfg = SampleConfig::new(40, seed).radius(5.0);
        prop_assert!(check_h4(&f, &cfg).unwrap().passed);
        // Euclidean contraction by beta
        for (x, y) in cfg.pairs(p.structure()).unwrap() {
            let lhs = euclidean_norm(&f.apply(&x).unwrap().sub(&f.apply(&y).unwrap()).unwrap());
            let rhs = f.contraction_factor() * euclidean_norm(&x.sub(&y).unwrap());
            prop_assert!(lhs <= rhs + 1e-10, "{} > {}", lhs, rhs);
        }
        let at_threshold = Resolvent::new(p.clone(), min_c(p.modulus(), p.num_blocks()).unwrap().max(1e-3)).unwrap();
        prop_assert!(check_h3(&at_threshold, &cfg).unwrap().passed);
    }

    #[test]
    fn engine_agrees_with_oracle(
        p in instance(),
        s_bound in 0usize..5,
        k in 1usize..12,
        seed in any::<u64>(),
    ) {
        let u = solve_direct(&p).unwrap();
        prop_assert!(p.solution_residual(&u).unwrap() <= 1e-9);
        let f = Resolvent::auto(p.clone()).unwrap();
        let tol = 1e-10;
        let cfg = RunConfig::new(tol, 50_000).unwrap().reference(u.clone());
        let sched = Schedule::random_bounded_delay(p.num_blocks(), s_bound, k, seed).unwrap();
        let r = run_simulated(&f, p.zeros(), &sched, &cfg).unwrap();
        prop_assert!(r.converged);
        let err = uniform_distance(&r.x_final, &u).unwrap();
        // a-posteriori bound from the stopping residual, always valid
        let alpha = p.num_blocks() as f64;
        prop_assert!(err <= alpha.sqrt() * tol / (1.0 - f.contraction_factor()) * (1.0 + 1e-6) + 1e-14, "error {}", err);
        // with at least two blocks auto c sits at the threshold, where that bound is below 10 tol
        if p.num_blocks() >= 2 && f.c() == min_c(p.modulus(), p.num_blocks()).unwrap() {
            prop_assert!(err <= 10.0 * tol, "error {}", err);
        }

        let zs: Vec<f64> = r.trace.records.iter().map(|t| t.z_p.unwrap()).collect();
        let slack = 1e-12 * (1.0 + zs[0]);
        prop_assert!(zs.windows(2).all(|w| w[1] <= w[0] + slack));
    }

    #[test]
    fn fixed_points_are_solutions(p in instance(), log_c in -2.0f64..1.0) {
        let u = solve_direct(&p).unwrap();
        let f = Resolvent::new(p.clone(), 10f64.powf(log_c)).unwrap();
        let fu = f.apply(&u).unwrap();
        let scale = 1.0 + f.c() * p.operator_norm();
        prop_assert!(euclidean_norm(&fu.sub(&u).unwrap()) <= 1e-9 * scale);
        // and a fixed point found by iteration solves the problem
        let r = run_simulated(&f, p.zeros(), &Schedule::jacobi(p.num_blocks()).unwrap(), &RunConfig::new(1e-12, 200_000).unwrap()).unwrap();
        prop_assert!(r.converged);
        prop_assert!(p.solution_residual(&r.x_final).unwrap() <= 1e-9 * scale);
    }

    #[test]
    fn box_solutions_satisfy_the_vi(p in instance()) {
        let u = solve_direct(&p).unwrap();
        let (a, b, bounds) = match p.kind() {
            ProblemKind::BoxVi { a, b, bounds } => (a, b, bounds),
            ProblemKind::QuadraticMin { q, linear, bounds: Some(bounds) } => (q, linear, bounds),
            _ => return Ok(()),
        };
        prop_assert!(vi_check(a, b, bounds, u.as_slice()).unwrap().passed);
    }

    #[test]
    fn sampled_modulus_never_beats_the_bound(p in instance(), seed in any::<u64>()) {
        let est = estimate_modulus(&p, 200, seed).unwrap();
        prop_assert!(est >= p.modulus() - 1e-8, "{} < {}", est, p.modulus());
    }

    #[test]
    fn strong_monotonicity_on_samples(p in instance(), seed in any::<u64>()) {
        let cfg = SampleConfig::new(30, seed).radius(3.0);
        for (x, y) in cfg.pairs(p.structure()).unwrap() {
            let (x, y) = match p.bounds() {
                Some(b) => (p.vector(b.project(x.as_slice())).unwrap(), p.vector(b.project(y.as_slice())).unwrap()),
                None => (x, y),
            };
            let tx = p.apply_t(&x).unwrap().value;
            let ty = p.apply_t(&y).unwrap().value;
            let d = x.sub(&y).unwrap();
            let lhs = inner_product(&tx.sub(&ty).unwrap(), &d).unwrap();
            prop_assert!(lhs >= p.modulus() * euclidean_norm(&d).powi(2) - 1e-10 * (1.0 + lhs.abs()));
        }
    }
}
