//! Real- and complex-valued volumetric fields on a [`GridSpec`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Real,
    Complex,
}

/// One complex sample per voxel, tagged real when the imaginary parts are
/// identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOnGrid {
    grid: GridSpec,
    values: Vec<Complex64>,
    kind: FieldKind,
}

impl FieldOnGrid {
    pub fn zeros(grid: GridSpec, kind: FieldKind) -> Self {
        FieldOnGrid {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            kind,
        }
    }

    pub fn from_real(grid: GridSpec, values: &[f64]) -> Result<Self> {
        check_len(&grid, values.len())?;
        Ok(FieldOnGrid {
            grid,
            values: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            kind: FieldKind::Real,
        })
    }

    pub fn from_complex(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        check_len(&grid, values.len())?;
        Ok(FieldOnGrid {
            grid,
            values,
            kind: FieldKind::Complex,
        })
    }

    /// Samples `f` at every voxel midpoint.
    pub fn from_fn_real(grid: GridSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        FieldOnGrid {
            grid,
            values: grid.points().map(|x| Complex64::new(f(x), 0.0)).collect(),
            kind: FieldKind::Real,
        }
    }

    pub fn from_fn_complex(grid: GridSpec, f: impl Fn([f64; 3]) -> Complex64) -> Self {
        FieldOnGrid {
            grid,
            values: grid.points().map(f).collect(),
            kind: FieldKind::Complex,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn imag_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.im).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn ensure_same_grid(&self, other: &GridSpec) -> Result<()> {
        if self.grid.same_shape(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "field grid {:?} vs {:?}",
                self.grid.dims(),
                other.dims()
            )))
        }
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: Complex64, other: &FieldOnGrid) -> Result<FieldOnGrid> {
        other.ensure_same_grid(&self.grid)?;
        let kind = if self.kind == FieldKind::Real && other.kind == FieldKind::Real && alpha.im == 0.0 {
            FieldKind::Real
        } else {
            FieldKind::Complex
        };
        Ok(FieldOnGrid {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + alpha * b)
                .collect(),
            kind,
        })
    }

    pub fn scaled(&self, alpha: Complex64) -> FieldOnGrid {
        FieldOnGrid {
            grid: self.grid,
            values: self.values.iter().map(|v| v * alpha).collect(),
            kind: if alpha.im == 0.0 { self.kind } else { FieldKind::Complex },
        }
    }

    /// Plain discrete L² norm over the whole box.
    pub fn l2_norm(&self) -> f64 {
        let h3 = self.grid.voxel_volume();
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * h3).sqrt()
    }
}

fn check_len(grid: &GridSpec, len: usize) -> Result<()> {
    if len == grid.len() {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "{len} values for a grid of {} voxels",
            grid.len()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_fields_have_zero_imaginary_part() {
        let g = GridSpec::cube(1.0, 4).unwrap();
        let f = FieldOnGrid::from_fn_real(g, |x| x[0] + 2.0 * x[2]);
        assert_eq!(f.kind(), FieldKind::Real);
        assert!(f.imag_parts().iter().all(|&v| v == 0.0));
        assert_eq!(f.values().len(), 64);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let g = GridSpec::cube(1.0, 4).unwrap();
        assert!(FieldOnGrid::from_real(g, &[0.0; 10]).is_err());
    }
}
