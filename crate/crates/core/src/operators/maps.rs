use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::sets::{Ball, BoxSet};
use crate::block_space::{BlockStructure, BlockVector};
use crate::error::{Error, Result};

/// A map `F: R^n -> R^n` over a fixed block structure, the object iterated by
/// the engines and probed by the diagnostics.
pub trait FixedPointMap: Send + Sync {
    fn structure(&self) -> &BlockStructure;

    fn apply(&self, x: &BlockVector) -> Result<BlockVector>;

    /// Write blocks `blocks` of `F(x)` into `out`, leaving the others untouched.
    fn apply_blocks(&self, x: &BlockVector, blocks: &[usize], out: &mut BlockVector) -> Result<()> {
        let fx = self.apply(x)?;
        for &i in blocks {
            out.set_block(i, fx.block(i));
        }
        Ok(())
    }
}

/// `x -> Ax` for a dense square matrix.
#[derive(Debug, Clone)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
    structure: Arc<BlockStructure>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>, structure: BlockStructure) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() != structure.dim() {
            return Err(Error::Dimension {
                expected: structure.dim(),
                got: matrix.nrows(),
            });
        }
        Ok(Self {
            matrix,
            structure: Arc::new(structure),
        })
    }

    /// `x -> t x`.
    pub fn scaled_identity(t: f64, structure: BlockStructure) -> Self {
        let n = structure.dim();
        Self {
            matrix: DMatrix::identity(n, n) * t,
            structure: Arc::new(structure),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl FixedPointMap for LinearMap {
    fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        x.check_structure(&self.structure)?;
        let y = &self.matrix * DVector::from_column_slice(x.as_slice());
        BlockVector::from_vec(self.structure.clone(), y.as_slice().to_vec())
    }
}

/// Metric projection onto a box.
#[derive(Debug, Clone)]
pub struct BoxProjection {
    set: BoxSet,
    structure: Arc<BlockStructure>,
}

impl BoxProjection {
    pub fn new(set: BoxSet, structure: BlockStructure) -> Result<Self> {
        if set.dim() != structure.dim() {
            return Err(Error::Dimension {
                expected: structure.dim(),
                got: set.dim(),
            });
        }
        Ok(Self {
            set,
            structure: Arc::new(structure),
        })
    }
}

impl FixedPointMap for BoxProjection {
    fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        x.check_structure(&self.structure)?;
        BlockVector::from_vec(self.structure.clone(), self.set.project(x.as_slice()))
    }
}

/// Metric projection onto a Euclidean ball.
#[derive(Debug, Clone)]
pub struct BallProjection {
    set: Ball,
    structure: Arc<BlockStructure>,
}

impl BallProjection {
    pub fn new(set: Ball, structure: BlockStructure) -> Result<Self> {
        if set.dim() != structure.dim() {
            return Err(Error::Dimension {
                expected: structure.dim(),
                got: set.dim(),
            });
        }
        Ok(Self {
            set,
            structure: Arc::new(structure),
        })
    }
}

impl FixedPointMap for BallProjection {
    fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        x.check_structure(&self.structure)?;
        BlockVector::from_vec(self.structure.clone(), self.set.project(x.as_slice()))
    }
}
