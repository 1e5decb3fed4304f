//! Regenerates `demos/*.toml`: n = 8 instances split into 4 blocks, each with
//! its reference solution computed by the direct oracle.
//!
//!     cargo run -p asyncprox-cli --example make_demos

use asyncprox::oracle::solve_direct;
use asyncprox::ScheduleKind;
use asyncprox_cli::demo_dir;
use asyncprox_cli::spec::{
    BlockSpec, MatrixSource, OutputSpec, ParallelSpec, ProblemSpec, ProblemType, RunSpec, ScheduleSpec, SolverSpec,
};

fn mat(n: usize, f: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| f(i, j)).collect()).collect()
}

fn tridiag(i: usize, j: usize, d: f64, off: f64) -> f64 {
    match i.abs_diff(j) {
        0 => d,
        1 => off,
        _ => 0.0,
    }
}

/// `3I + tridiag(0.5) + skew`, symmetric part well conditioned.
fn nonsymmetric(n: usize) -> Vec<Vec<f64>> {
    mat(n, |i, j| {
        let skew = if i.abs_diff(j) <= 2 { 0.3 * (j as f64 - i as f64) } else { 0.0 };
        tridiag(i, j, 3.0, 0.5) + skew
    })
}

fn empty(kind: ProblemType) -> ProblemSpec {
    ProblemSpec {
        kind,
        a: None,
        b: None,
        q: None,
        linear: None,
        p: None,
        r: None,
        k: None,
        p_lin: None,
        q_lin: None,
        lower: None,
        upper: None,
        blocks: Some(BlockSpec::Count(4)),
        modulus: None,
        solution: None,
        x0: None,
    }
}

fn spec(problem: ProblemSpec) -> RunSpec {
    RunSpec {
        problem,
        schedule: ScheduleSpec {
            kind: ScheduleKind::RandomBoundedDelay,
            s_bound: 3,
            sync_period: 10,
            seed: 1,
        },
        solver: SolverSpec::default(),
        parallel: ParallelSpec::default(),
        output: OutputSpec::default(),
        base_dir: None,
    }
}

fn main() -> anyhow::Result<()> {
    let n = 8;
    let mut demos = Vec::new();

    let mut p = empty(ProblemType::AffineMonotone);
    p.a = Some(MatrixSource::Rows(nonsymmetric(n)));
    p.b = Some(vec![1.0, -1.0, 2.0, 0.0, 0.5, -2.0, 1.0, 3.0]);
    demos.push(("affine", p));

    let mut p = empty(ProblemType::QuadraticMin);
    p.q = Some(MatrixSource::Rows(mat(n, |i, j| {
        tridiag(i, j, 4.0, -1.0) + if i.abs_diff(j) == 2 { 0.5 } else { 0.0 }
    })));
    p.linear = Some(vec![1.0, 2.0, -1.0, 0.5, 3.0, -2.0, 0.0, 1.5]);
    demos.push(("quadratic", p.clone()));

    p.lower = Some(vec![0.0; n]);
    p.upper = Some(vec![0.5; n]);
    demos.push(("quadratic_box", p));

    let m = 4;
    let mut p = empty(ProblemType::SaddleQuadratic);
    p.p = Some(MatrixSource::Rows(mat(m, |i, j| tridiag(i, j, 2.0, 0.3))));
    p.r = Some(MatrixSource::Rows(mat(m, |i, j| tridiag(i, j, 1.5, 0.2))));
    p.k = Some(MatrixSource::Rows(mat(m, |i, j| 0.5 * (((i + 2 * j) % 5) as f64 - 2.0))));
    p.p_lin = Some(vec![1.0, -0.5, 0.25, 2.0]);
    p.q_lin = Some(vec![-1.0, 0.5, 1.5, 0.0]);
    demos.push(("saddle", p));

    let mut p = empty(ProblemType::BoxVi);
    p.a = Some(MatrixSource::Rows(nonsymmetric(n)));
    p.b = Some(vec![6.0, -4.0, 1.0, 0.0, 5.0, -6.0, 2.0, 9.0]);
    p.lower = Some(vec![-1.0; n]);
    p.upper = Some(vec![1.0; n]);
    demos.push(("box_vi", p));

    let dir = demo_dir();
    std::fs::create_dir_all(&dir)?;
    for (name, problem) in demos {
        let mut s = spec(problem);
        let u = solve_direct(&s.problem()?)?;
        s.problem.solution = Some(u.into_vec());
        let path = dir.join(format!("{name}.toml"));
        std::fs::write(&path, s.to_toml()?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
