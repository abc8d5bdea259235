//! Discrete `L²` norms, plain and weighted by `⟨x⟩^s`.

use serde::{Deserialize, Serialize};

use super::field::FieldOnGrid;
use super::grid::japanese_bracket;
use crate::error::{Error, Result};

/// Weight exponent `s` of `‖⟨x⟩^s φ‖_{L²}`; typically `s = -1/2 - ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormSpec {
    pub s: f64,
    pub epsilon: f64,
}

impl WeightedNormSpec {
    pub fn new(s: f64, epsilon: f64) -> Result<Self> {
        if !s.is_finite() || !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weighted norm needs finite s and epsilon > 0 (s = {s}, epsilon = {epsilon})"
            )));
        }
        Ok(WeightedNormSpec { s, epsilon })
    }

    /// The outgoing-radiation space exponent `s = -1/2 - ε`.
    pub fn radiating(epsilon: f64) -> Result<Self> {
        WeightedNormSpec::new(-0.5 - epsilon, epsilon)
    }
}

/// `(Σ ⟨x_j⟩^{2s} |φ(x_j)|² h³)^{1/2}`.
pub fn weighted_norm(field: &FieldOnGrid, spec: &WeightedNormSpec) -> f64 {
    let grid = field.grid();
    let sum: f64 = grid
        .points()
        .zip(field.values())
        .map(|(x, v)| japanese_bracket(x).powf(2.0 * spec.s) * v.norm_sqr())
        .sum();
    (sum * grid.voxel_volume()).sqrt()
}

/// Discrete `L²` norm over the voxels where `mask` is set.
///
/// # Panics
///
/// If `mask` does not have one entry per voxel.
pub fn l2_norm_on_support(field: &FieldOnGrid, mask: &[bool]) -> f64 {
    assert_eq!(mask.len(), field.values().len(), "mask length does not match grid");
    let sum: f64 = field
        .values()
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v.norm_sqr())
        .sum();
    (sum * field.grid().voxel_volume()).sqrt()
}
