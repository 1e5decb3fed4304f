//! Closed convex sets with explicit metric projections: boxes and Euclidean balls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-coordinate bounds `lo_j <= x_j <= hi_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for BoxSet {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        BoxSet::new(raw.lower, raw.upper)
    }
}

impl From<BoxSet> for RawBox {
    fn from(b: BoxSet) -> Self {
        RawBox {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

/// Where a coordinate sits relative to its bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    Free,
    AtLower,
    AtUpper,
    /// `lo == hi`, the coordinate cannot move.
    Fixed,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::param(
                "box",
                format!("{} lower bounds vs {} upper bounds", lower.len(), upper.len()),
            ));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::param("box", format!("bounds of coordinate {j} must be finite")));
            }
            if lo > hi {
                return Err(Error::param("box", format!("coordinate {j}: lower {lo} > upper {hi}")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^n`.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn clamp_coord(&self, j: usize, v: f64) -> f64 {
        v.max(self.lower[j]).min(self.upper[j])
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(j, &v)| self.clamp_coord(j, v)).collect()
    }

    pub fn project_in_place(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = self.clamp_coord(j, *v);
        }
    }

    /// Face activity of a point that lies in the box.
    pub fn faces(&self, x: &[f64]) -> Vec<Face> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| {
                let (lo, hi) = (self.lower[j], self.upper[j]);
                if lo == hi {
                    Face::Fixed
                } else if v == lo {
                    Face::AtLower
                } else if v == hi {
                    Face::AtUpper
                } else {
                    Face::Free
                }
            })
            .collect()
    }
}

/// Closed Euclidean ball `{x : ||x - center|| <= radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    center: Vec<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::param("radius", format!("must be finite and >= 0, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let dist = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist <= self.radius {
            return x.to_vec();
        }
        let t = self.radius / dist;
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| c + t * (a - c))
            .collect()
    }
}
