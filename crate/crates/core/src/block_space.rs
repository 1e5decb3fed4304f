//! Block decomposition of `R^n = R^{n_1} x ... x R^{n_alpha}`.
//!
//! Blocks are addressed `0..alpha`. A [`BlockVector`] keeps one contiguous
//! buffer and reads/writes blocks as slices, which is what the engines need for
//! block-granular replacement.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sizes `n_1..n_alpha` of the blocks plus their offsets in the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockStructure {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockStructure {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::param("sizes", "at least one block is required"));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::param("sizes", format!("block {i} has size 0")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &s in &sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(Self { sizes, offsets })
    }

    /// `alpha` blocks of (almost) equal size covering `n` coordinates. The
    /// first `n % alpha` blocks get one extra coordinate.
    pub fn even(n: usize, alpha: usize) -> Result<Self> {
        if alpha == 0 || alpha > n {
            return Err(Error::param(
                "alpha",
                format!("need 1 <= alpha <= n, got alpha={alpha}, n={n}"),
            ));
        }
        let base = n / alpha;
        let extra = n % alpha;
        Self::new((0..alpha).map(|i| base + usize::from(i < extra)).collect())
    }

    /// A single block of size `n`.
    pub fn single(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    /// Number of blocks (`alpha`).
    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    /// Total dimension `n`.
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn block_size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    /// Coordinate range of block `i` in the flat buffer.
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Index of the block that owns coordinate `j`.
    pub fn block_of(&self, j: usize) -> usize {
        match self.offsets.binary_search(&j) {
            Ok(i) => i.min(self.sizes.len() - 1),
            Err(i) => i - 1,
        }
    }
}

impl TryFrom<Vec<usize>> for BlockStructure {
    type Error = Error;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Self::new(sizes)
    }
}

impl From<BlockStructure> for Vec<usize> {
    fn from(s: BlockStructure) -> Self {
        s.sizes
    }
}

/// A vector of `R^n` together with its block structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBlockVector", into = "RawBlockVector")]
pub struct BlockVector {
    structure: Arc<BlockStructure>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBlockVector {
    sizes: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawBlockVector> for BlockVector {
    type Error = Error;

    fn try_from(raw: RawBlockVector) -> Result<Self> {
        BlockVector::from_vec(BlockStructure::new(raw.sizes)?, raw.data)
    }
}

impl From<BlockVector> for RawBlockVector {
    fn from(v: BlockVector) -> Self {
        RawBlockVector {
            sizes: v.structure.sizes().to_vec(),
            data: v.data,
        }
    }
}

impl BlockVector {
    pub fn zeros(structure: impl Into<Arc<BlockStructure>>) -> Self {
        let structure = structure.into();
        let data = vec![0.0; structure.dim()];
        Self { structure, data }
    }

    pub fn from_vec(structure: impl Into<Arc<BlockStructure>>, data: Vec<f64>) -> Result<Self> {
        let structure = structure.into();
        if data.len() != structure.dim() {
            return Err(Error::Dimension {
                expected: structure.dim(),
                got: data.len(),
            });
        }
        Ok(Self { structure, data })
    }

    /// The `k`-th standard basis vector.
    pub fn unit(structure: impl Into<Arc<BlockStructure>>, k: usize) -> Self {
        let mut v = Self::zeros(structure);
        v.data[k] = 1.0;
        v
    }

    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[self.structure.range(i)]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.structure.range(i);
        &mut self.data[r]
    }

    /// Replace block `i` with `values`.
    pub fn set_block(&mut self, i: usize, values: &[f64]) {
        self.block_mut(i).copy_from_slice(values);
    }

    /// Same data, different structure over the same dimension.
    pub fn with_structure(self, structure: impl Into<Arc<BlockStructure>>) -> Result<Self> {
        Self::from_vec(structure, self.data)
    }

    pub fn check_same_structure(&self, other: &BlockVector) -> Result<()> {
        if self.structure == other.structure {
            Ok(())
        } else {
            Err(Error::Structure(format!(
                "{:?} vs {:?}",
                self.structure.sizes(),
                other.structure.sizes()
            )))
        }
    }

    pub fn check_structure(&self, structure: &BlockStructure) -> Result<()> {
        if *self.structure == *structure {
            Ok(())
        } else {
            Err(Error::Structure(format!(
                "{:?} vs {:?}",
                self.structure.sizes(),
                structure.sizes()
            )))
        }
    }

    /// `self - other`, coordinatewise.
    pub fn sub(&self, other: &BlockVector) -> Result<BlockVector> {
        self.check_same_structure(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(BlockVector {
            structure: self.structure.clone(),
            data,
        })
    }

    pub fn block_norm(&self, i: usize) -> f64 {
        self.block(i).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `<x, y> = sum_i <x_i, y_i>_i`.
pub fn inner_product(x: &BlockVector, y: &BlockVector) -> Result<f64> {
    x.check_same_structure(y)?;
    Ok(dot(&x.data, &y.data))
}

/// `||x|| = (sum_i ||x_i||^2)^(1/2)`.
pub fn euclidean_norm(x: &BlockVector) -> f64 {
    dot(&x.data, &x.data).sqrt()
}

/// `||x||_inf = max_i ||x_i||_i`, the largest per-block Euclidean norm.
pub fn uniform_norm(x: &BlockVector) -> f64 {
    (0..x.structure.num_blocks())
        .map(|i| x.block_norm(i))
        .fold(0.0, f64::max)
}

/// Uniform norm of `x - y` without allocating.
pub fn uniform_distance(x: &BlockVector, y: &BlockVector) -> Result<f64> {
    x.check_same_structure(y)?;
    let s = &x.structure;
    let mut worst: f64 = 0.0;
    for i in 0..s.num_blocks() {
        let r = s.range(i);
        let sq: f64 = x.data[r.clone()]
            .iter()
            .zip(&y.data[r])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        worst = worst.max(sq.sqrt());
    }
    Ok(worst)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s21() -> BlockStructure {
        BlockStructure::new(vec![2, 1]).unwrap()
    }

    fn bv(s: &BlockStructure, v: &[f64]) -> BlockVector {
        BlockVector::from_vec(s.clone(), v.to_vec()).unwrap()
    }

    #[test]
    fn structure_validation() {
        assert!(BlockStructure::new(vec![]).is_err());
        assert!(BlockStructure::new(vec![2, 0]).is_err());
        let s = BlockStructure::new(vec![2, 3, 1]).unwrap();
        assert_eq!(s.num_blocks(), 3);
        assert_eq!(s.dim(), 6);
        assert_eq!(s.range(1), 2..5);
        assert_eq!(s.block_of(0), 0);
        assert_eq!(s.block_of(2), 1);
        assert_eq!(s.block_of(4), 1);
        assert_eq!(s.block_of(5), 2);
    }

    #[test]
    fn even_split() {
        let s = BlockStructure::even(8, 4).unwrap();
        assert_eq!(s.sizes(), &[2, 2, 2, 2]);
        let s = BlockStructure::even(7, 3).unwrap();
        assert_eq!(s.sizes(), &[3, 2, 2]);
        assert!(BlockStructure::even(3, 4).is_err());
        assert!(BlockStructure::even(3, 0).is_err());
    }

    #[test]
    fn length_must_match() {
        let err = BlockVector::from_vec(s21(), vec![1.0, 2.0]).unwrap_err();
        assert_eq!(err, Error::Dimension { expected: 3, got: 2 });
    }

    #[test]
    fn inner_product_examples() {
        let s = s21();
        let zero = BlockVector::zeros(s.clone());
        let y = bv(&s, &[4.0, 5.0, 6.0]);
        assert_eq!(inner_product(&zero, &y).unwrap(), 0.0);
        let e1 = BlockVector::unit(s.clone(), 0);
        assert_eq!(inner_product(&e1, &e1).unwrap(), 1.0);
        let x = bv(&s, &[1.0, 2.0, 3.0]);
        assert_eq!(inner_product(&x, &y).unwrap(), 32.0);
    }

    #[test]
    fn inner_product_structure_mismatch() {
        let x = bv(&s21(), &[1.0, 2.0, 3.0]);
        let other = BlockStructure::new(vec![1, 2]).unwrap();
        let y = bv(&other, &[1.0, 2.0, 3.0]);
        assert!(matches!(inner_product(&x, &y), Err(Error::Structure(_))));
    }

    #[test]
    fn norm_examples() {
        let s = s21();
        assert_eq!(euclidean_norm(&BlockVector::zeros(s.clone())), 0.0);
        assert_eq!(euclidean_norm(&BlockVector::unit(s.clone(), 2)), 1.0);
        assert_eq!(euclidean_norm(&bv(&s, &[3.0, 4.0, 12.0])), 13.0);

        assert_eq!(uniform_norm(&BlockVector::zeros(s.clone())), 0.0);
        assert_eq!(uniform_norm(&bv(&s, &[3.0, 4.0, 1.0])), 5.0);

        let one = BlockStructure::single(3).unwrap();
        let x = bv(&one, &[1.0, -2.0, 2.0]);
        assert_eq!(uniform_norm(&x), euclidean_norm(&x));
    }

    #[test]
    fn serde_shape() {
        let x = bv(&s21(), &[1.0, 2.0, 3.0]);
        let json = serde_json::to_string(&x).unwrap();
        assert_eq!(json, r#"{"sizes":[2,1],"data":[1.0,2.0,3.0]}"#);
        let back: BlockVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, x);
        assert!(serde_json::from_str::<BlockVector>(r#"{"sizes":[2,1],"data":[1.0]}"#).is_err());
    }

    fn vec_and_sizes() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        prop::collection::vec(1usize..4, 1..5).prop_flat_map(|sizes| {
            let n: usize = sizes.iter().sum();
            let v = || prop::collection::vec(-100.0f64..100.0, n);
            (Just(sizes), v(), v(), v())
        })
    }

    proptest! {
        #[test]
        fn norm_equivalence((sizes, a, _, _) in vec_and_sizes()) {
            let s = BlockStructure::new(sizes).unwrap();
            let alpha = s.num_blocks() as f64;
            let x = bv(&s, &a);
            let u = uniform_norm(&x);
            let e = euclidean_norm(&x);
            prop_assert!(u <= e * (1.0 + 1e-12) + 1e-300);
            prop_assert!(e <= alpha.sqrt() * u * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn cauchy_schwarz((sizes, a, b, _) in vec_and_sizes()) {
            let s = BlockStructure::new(sizes).unwrap();
            let (x, y) = (bv(&s, &a), bv(&s, &b));
            let ip = inner_product(&x, &y).unwrap().abs();
            prop_assert!(ip <= euclidean_norm(&x) * euclidean_norm(&y) * (1.0 + 1e-12));
        }

        #[test]
        fn homogeneity_and_triangle((sizes, a, b, _) in vec_and_sizes(), t in -5.0f64..5.0) {
            let s = BlockStructure::new(sizes).unwrap();
            let (x, y) = (bv(&s, &a), bv(&s, &b));
            let scaled = bv(&s, &a.iter().map(|v| t * v).collect::<Vec<_>>());
            let sum = bv(&s, &a.iter().zip(&b).map(|(p, q)| p + q).collect::<Vec<_>>());
            for norm in [euclidean_norm, uniform_norm] {
                let lhs = norm(&scaled);
                let rhs = t.abs() * norm(&x);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
                prop_assert!(norm(&sum) <= (norm(&x) + norm(&y)) * (1.0 + 1e-12));
            }
        }
    }
}
