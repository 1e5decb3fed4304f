//! Strongly monotone operators `T` and their resolvents `F = (I + cT)^{-1}`.
//!
//! Every catalog variant has an affine single-valued part `T(x) = Mx - r`,
//! optionally plus the normal cone of a box:
//!
//! | variant           | `M`               | `r`         | box      |
//! |-------------------|-------------------|-------------|----------|
//! | `AffineMonotone`  | `A`               | `b`         | no       |
//! | `QuadraticMin`    | `Q`               | `q`         | optional |
//! | `SaddleQuadratic` | `[P K^T; -K R]`   | `(-p, -q)`  | no       |
//! | `BoxVi`           | `A`               | `b`         | yes      |
//!
//! The strong monotonicity modulus `a` is the smallest eigenvalue of the
//! symmetric part of `M`.

mod maps;
mod resolvent;
mod sets;

pub use maps::{BallProjection, BoxProjection, FixedPointMap, LinearMap};
pub use resolvent::{auto_c, min_c, Resolvent, C_FLOOR, DEFAULT_INNER_TOL};
pub use sets::{Ball, BoxSet, Face};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::block_space::{BlockStructure, BlockVector};
use crate::error::{Error, Result};
use crate::linalg;

/// Symmetry tolerance for matrices that must be symmetric positive definite.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Parameters of `L(x,y) = 1/2 x'Px + y'Kx - 1/2 y'Ry + p'x - q'y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleParams {
    pub p: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub p_lin: DVector<f64>,
    pub q_lin: DVector<f64>,
}

impl SaddleParams {
    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    pub fn lagrangian(&self, x: &[f64], y: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        let y = DVector::from_column_slice(y);
        0.5 * x.dot(&(&self.p * &x)) + y.dot(&(&self.k * &x)) - 0.5 * y.dot(&(&self.r * &y))
            + self.p_lin.dot(&x)
            - self.q_lin.dot(&y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemKind {
    /// `T(x) = Ax - b` with `A + A'` positive definite.
    AffineMonotone { a: DMatrix<f64>, b: DVector<f64> },
    /// `T = grad f (+ N_C)` for `f(x) = 1/2 x'Qx - q'x`, `Q` SPD.
    QuadraticMin {
        q: DMatrix<f64>,
        linear: DVector<f64>,
        bounds: Option<BoxSet>,
    },
    /// `T_L(x,y) = (Px + K'y + p, Ry - Kx + q)`, i.e. `(d_x L, -d_y L)`.
    SaddleQuadratic(SaddleParams),
    /// `T = A(.) - b + N_C` with `C` a box.
    BoxVi {
        a: DMatrix<f64>,
        b: DVector<f64>,
        bounds: BoxSet,
    },
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::AffineMonotone { .. } => "affine_monotone",
            ProblemKind::QuadraticMin { .. } => "quadratic_min",
            ProblemKind::SaddleQuadratic(_) => "saddle_quadratic",
            ProblemKind::BoxVi { .. } => "box_vi",
        }
    }
}

/// Value of `T` at a point: the single-valued part plus, for constrained
/// variants, the face activity that determines the normal cone.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorValue {
    pub value: BlockVector,
    pub faces: Option<Vec<Face>>,
}

/// A maximal strongly monotone operator from the catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    kind: ProblemKind,
    structure: Arc<BlockStructure>,
    modulus: f64,
    sym_min: f64,
    sym_max: f64,
    op_norm: f64,
    symmetric: bool,
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
    bounds: Option<BoxSet>,
}

impl Problem {
    pub fn affine_monotone(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = linalg::check_square("A", &a)?;
        linalg::check_len("b", &b, n)?;
        Self::assemble(ProblemKind::AffineMonotone { a: a.clone(), b: b.clone() }, a, b, None)
    }

    pub fn quadratic_min(
        q: DMatrix<f64>,
        linear: DVector<f64>,
        bounds: Option<BoxSet>,
    ) -> Result<Self> {
        let n = linalg::check_square("Q", &q)?;
        linalg::check_len("q", &linear, n)?;
        check_spd("Q", &q)?;
        if let Some(b) = &bounds {
            check_box_dim(b, n)?;
        }
        Self::assemble(
            ProblemKind::QuadraticMin {
                q: q.clone(),
                linear: linear.clone(),
                bounds: bounds.clone(),
            },
            q,
            linear,
            bounds,
        )
    }

    pub fn saddle_quadratic(params: SaddleParams) -> Result<Self> {
        let n = linalg::check_square("P", &params.p)?;
        let m = linalg::check_square("R", &params.r)?;
        check_spd("P", &params.p)?;
        check_spd("R", &params.r)?;
        if params.k.nrows() != m || params.k.ncols() != n {
            return Err(Error::param(
                "K",
                format!("expected {m}x{n}, got {}x{}", params.k.nrows(), params.k.ncols()),
            ));
        }
        linalg::check_len("p", &params.p_lin, n)?;
        linalg::check_len("q", &params.q_lin, m)?;

        let mut matrix = DMatrix::zeros(n + m, n + m);
        matrix.view_mut((0, 0), (n, n)).copy_from(&params.p);
        matrix.view_mut((0, n), (n, m)).copy_from(&params.k.transpose());
        matrix.view_mut((n, 0), (m, n)).copy_from(&(-&params.k));
        matrix.view_mut((n, n), (m, m)).copy_from(&params.r);
        let mut offset = DVector::zeros(n + m);
        offset.rows_mut(0, n).copy_from(&(-&params.p_lin));
        offset.rows_mut(n, m).copy_from(&(-&params.q_lin));
        Self::assemble(ProblemKind::SaddleQuadratic(params), matrix, offset, None)
    }

    pub fn box_vi(a: DMatrix<f64>, b: DVector<f64>, bounds: BoxSet) -> Result<Self> {
        let n = linalg::check_square("A", &a)?;
        linalg::check_len("b", &b, n)?;
        check_box_dim(&bounds, n)?;
        Self::assemble(
            ProblemKind::BoxVi {
                a: a.clone(),
                b: b.clone(),
                bounds: bounds.clone(),
            },
            a,
            b,
            Some(bounds),
        )
    }

    fn assemble(
        kind: ProblemKind,
        matrix: DMatrix<f64>,
        offset: DVector<f64>,
        bounds: Option<BoxSet>,
    ) -> Result<Self> {
        linalg::check_finite("matrix", matrix.as_slice())?;
        linalg::check_finite("vector", offset.as_slice())?;
        let n = matrix.nrows();
        let (sym_min, sym_max) = linalg::symmetric_extremes(&linalg::symmetric_part(&matrix));
        if !(sym_min > 0.0) {
            return Err(Error::param(
                "matrix",
                format!(
                    "operator is not strongly monotone: smallest eigenvalue of the symmetric part is {sym_min:e}"
                ),
            ));
        }
        let symmetric = linalg::asymmetry(&matrix) == 0.0;
        let op_norm = linalg::spectral_norm(&matrix);
        Ok(Self {
            kind,
            structure: Arc::new(BlockStructure::single(n)?),
            modulus: sym_min,
            sym_min,
            sym_max,
            op_norm,
            symmetric,
            matrix,
            offset,
            bounds,
        })
    }

    /// Use `structure` as the block decomposition (must cover the full dimension).
    pub fn with_blocks(mut self, structure: BlockStructure) -> Result<Self> {
        if structure.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: structure.dim(),
            });
        }
        self.structure = Arc::new(structure);
        Ok(self)
    }

    /// Override the modulus. It must be positive and cannot exceed the
    /// eigenvalue bound, otherwise it is not a valid modulus.
    pub fn with_modulus(mut self, a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::param("modulus", format!("must be positive, got {a}")));
        }
        if a > self.sym_min * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::param(
                "modulus",
                format!("{a} exceeds the smallest eigenvalue of the symmetric part ({})", self.sym_min),
            ));
        }
        self.modulus = a;
        Ok(self)
    }

    pub fn kind(&self) -> &ProblemKind {
        &self.kind
    }

    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    pub(crate) fn shared_structure(&self) -> &Arc<BlockStructure> {
        &self.structure
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_blocks(&self) -> usize {
        self.structure.num_blocks()
    }

    /// Strong monotonicity modulus `a`.
    pub fn modulus(&self) -> f64 {
        self.modulus
    }

    /// Largest eigenvalue of the symmetric part of `M`.
    pub fn symmetric_max_eigenvalue(&self) -> f64 {
        self.sym_max
    }

    pub fn operator_norm(&self) -> f64 {
        self.op_norm
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// `M` in `T(x) = Mx - r`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `r` in `T(x) = Mx - r`.
    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn bounds(&self) -> Option<&BoxSet> {
        self.bounds.as_ref()
    }

    /// `Mx - r` on a raw slice.
    pub fn single_valued(&self, x: &[f64]) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(x) - &self.offset
    }

    pub fn zeros(&self) -> BlockVector {
        BlockVector::zeros(self.structure.clone())
    }

    pub fn vector(&self, data: Vec<f64>) -> Result<BlockVector> {
        BlockVector::from_vec(self.structure.clone(), data)
    }

    /// Evaluate `T(x)`. Constrained variants are only defined on the box.
    pub fn apply_t(&self, x: &BlockVector) -> Result<OperatorValue> {
        x.check_structure(&self.structure)?;
        let faces = match &self.bounds {
            Some(b) => {
                if !b.contains(x.as_slice()) {
                    return Err(Error::Domain("T(x) is empty outside the box".into()));
                }
                Some(b.faces(x.as_slice()))
            }
            None => None,
        };
        let value = self.vector(self.single_valued(x.as_slice()).as_slice().to_vec())?;
        Ok(OperatorValue { value, faces })
    }

    /// Certificate for `0 in T(x)`: `||Mx - r||` without a box, the natural-map
    /// residual `||x - P_C(x - (Mx - r))||` with one. Zero iff `x` solves.
    pub fn solution_residual(&self, x: &BlockVector) -> Result<f64> {
        x.check_structure(&self.structure)?;
        let g = self.single_valued(x.as_slice());
        let r = match &self.bounds {
            None => g.norm(),
            Some(b) => x
                .as_slice()
                .iter()
                .zip(g.iter())
                .enumerate()
                .map(|(j, (&xj, &gj))| {
                    let d = xj - b.clamp_coord(j, xj - gj);
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
        };
        Ok(r)
    }
}

fn check_spd(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    let asym = linalg::asymmetry(m);
    if asym > SYMMETRY_TOL * (1.0 + linalg::max_abs(m)) {
        return Err(Error::param(name, format!("not symmetric (max |m - m'| = {asym:e})")));
    }
    let (lo, _) = linalg::symmetric_extremes(&linalg::symmetric_part(m));
    if !(lo > 0.0) {
        return Err(Error::param(name, format!("not positive definite (smallest eigenvalue {lo:e})")));
    }
    Ok(())
}

fn check_box_dim(b: &BoxSet, n: usize) -> Result<()> {
    if b.dim() != n {
        return Err(Error::param("box", format!("expected {n} bounds, got {}", b.dim())));
    }
    Ok(())
}
