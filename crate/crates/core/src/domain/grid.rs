//! Regular voxel grids over the computational box.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Minimum voxels per axis.
pub const MIN_VOXELS: usize = 4;

/// Zero-padding (in voxels, per face) that separates the domain `D` from the
/// edge of the grid box.
pub const DOMAIN_PADDING: usize = 2;

/// Axis-aligned box `[origin, origin + extent]` split into `n` voxels per axis.
///
/// Samples live at voxel midpoints. Storage order everywhere in the crate is
/// x-fastest: `index = i + n0 * (j + n1 * k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpecRaw", into = "GridSpecRaw")]
pub struct GridSpec {
    origin: [f64; 3],
    extent: [f64; 3],
    n: [usize; 3],
}

#[derive(Serialize, Deserialize)]
struct GridSpecRaw {
    origin: [f64; 3],
    extent: [f64; 3],
    n: [usize; 3],
}

impl TryFrom<GridSpecRaw> for GridSpec {
    type Error = Error;

    fn try_from(raw: GridSpecRaw) -> Result<Self> {
        GridSpec::new(raw.origin, raw.extent, raw.n)
    }
}

impl From<GridSpec> for GridSpecRaw {
    fn from(g: GridSpec) -> Self {
        GridSpecRaw {
            origin: g.origin,
            extent: g.extent,
            n: g.n,
        }
    }
}

impl GridSpec {
    pub fn new(origin: [f64; 3], extent: [f64; 3], n: [usize; 3]) -> Result<Self> {
        for axis in 0..3 {
            if !origin[axis].is_finite() || !extent[axis].is_finite() {
                return Err(Error::InvalidGrid(format!("axis {axis} is not finite")));
            }
            if extent[axis] <= 0.0 {
                return Err(Error::InvalidGrid(format!(
                    "extent along axis {axis} must be positive, got {}",
                    extent[axis]
                )));
            }
            if n[axis] < MIN_VOXELS {
                return Err(Error::InvalidGrid(format!(
                    "need at least {MIN_VOXELS} voxels along axis {axis}, got {}",
                    n[axis]
                )));
            }
            let hi = origin[axis] + extent[axis];
            if origin[axis] > 0.0 || hi < 0.0 {
                return Err(Error::InvalidGrid(format!(
                    "box [{}, {hi}] along axis {axis} does not contain the origin",
                    origin[axis]
                )));
            }
        }
        Ok(GridSpec { origin, extent, n })
    }

    /// Cube `[-half_width, half_width]^3` with `n` voxels per axis.
    pub fn cube(half_width: f64, n: usize) -> Result<Self> {
        GridSpec::new([-half_width; 3], [2.0 * half_width; 3], [n; 3])
    }

    /// Cube with `n` voxels of edge `h` per axis, placed so that the origin is
    /// a voxel centre when `n` is odd and a voxel corner when `n` is even.
    pub fn cube_with_spacing(h: f64, n: usize) -> Result<Self> {
        GridSpec::cube(0.5 * h * n as f64, n)
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn extent(&self) -> [f64; 3] {
        self.extent
    }

    pub fn dims(&self) -> [usize; 3] {
        self.n
    }

    pub fn spacing(&self) -> [f64; 3] {
        [
            self.extent[0] / self.n[0] as f64,
            self.extent[1] / self.n[1] as f64,
            self.extent[2] / self.n[2] as f64,
        ]
    }

    /// Largest voxel edge length.
    pub fn max_spacing(&self) -> f64 {
        let h = self.spacing();
        h[0].max(h[1]).max(h[2])
    }

    pub fn voxel_volume(&self) -> f64 {
        let h = self.spacing();
        h[0] * h[1] * h[2]
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let rest = idx / self.n[0];
        [i, rest % self.n[1], rest / self.n[1]]
    }

    /// Midpoint of voxel `(i, j, k)`.
    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = self.spacing();
        [
            self.origin[0] + (i as f64 + 0.5) * h[0],
            self.origin[1] + (j as f64 + 0.5) * h[1],
            self.origin[2] + (k as f64 + 0.5) * h[2],
        ]
    }

    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.coords(idx);
        self.center(i, j, k)
    }

    /// Voxel-centre coordinates along one axis.
    pub fn axis_centers(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing()[axis];
        (0..self.n[axis])
            .map(|i| self.origin[axis] + (i as f64 + 0.5) * h)
            .collect()
    }

    /// Iterator over all voxel centres in storage order.
    pub fn points(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.len()).map(move |idx| self.point(idx))
    }

    /// Voxels at least `padding` voxels away from every face of the box.
    pub fn interior_mask(&self, padding: usize) -> Vec<bool> {
        let [n0, n1, n2] = self.n;
        let inside = |c: usize, n: usize| c >= padding && c + padding < n;
        let mut mask = vec![false; self.len()];
        for k in 0..n2 {
            for j in 0..n1 {
                for i in 0..n0 {
                    mask[self.index(i, j, k)] = inside(i, n0) && inside(j, n1) && inside(k, n2);
                }
            }
        }
        mask
    }

    /// The computational domain `D`: the grid box minus the mandatory padding.
    pub fn domain_mask(&self) -> Vec<bool> {
        self.interior_mask(DOMAIN_PADDING)
    }

    /// Index of the voxel containing `x`, if any.
    pub fn locate(&self, x: [f64; 3]) -> Option<usize> {
        let h = self.spacing();
        let mut c = [0usize; 3];
        for axis in 0..3 {
            let t = (x[axis] - self.origin[axis]) / h[axis];
            if !(0.0..self.n[axis] as f64).contains(&t) {
                return None;
            }
            c[axis] = t as usize;
        }
        Some(self.index(c[0], c[1], c[2]))
    }

    /// Stable digest of the grid geometry.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        self.feed(&mut hasher);
        hex::encode(hasher.finalize())
    }

    pub(crate) fn feed(&self, hasher: &mut Sha256) {
        for v in self.origin.iter().chain(self.extent.iter()) {
            hasher.update(v.to_le_bytes());
        }
        for n in self.n {
            hasher.update((n as u64).to_le_bytes());
        }
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self == other
    }
}

/// `⟨x⟩ = (1 + |x|²)^{1/2}`.
#[inline]
pub fn japanese_bracket(x: [f64; 3]) -> f64 {
    (1.0 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

#[inline]
pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
pub(crate) fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_degenerate_boxes() {
        assert!(GridSpec::new([-1.0; 3], [2.0; 3], [3, 8, 8]).is_err());
        assert!(GridSpec::new([-1.0; 3], [0.0, 2.0, 2.0], [8; 3]).is_err());
        // box that misses the origin
        assert!(GridSpec::new([0.5, -1.0, -1.0], [1.0, 2.0, 2.0], [8; 3]).is_err());
        assert!(GridSpec::new([f64::NAN, -1.0, -1.0], [2.0; 3], [8; 3]).is_err());
    }

    #[test]
    fn index_round_trip_and_centres() {
        let g = GridSpec::new([-1.0, -2.0, -0.5], [2.0, 4.0, 1.0], [4, 5, 6]).unwrap();
        for idx in 0..g.len() {
            let [i, j, k] = g.coords(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
        let h = g.spacing();
        assert_eq!(h, [0.5, 0.8, 1.0 / 6.0]);
        let c = g.center(0, 0, 0);
        assert!((c[0] + 0.75).abs() < 1e-15);
        assert!((c[1] + 1.6).abs() < 1e-15);
        assert_eq!(g.locate(c), Some(0));
        assert!((g.voxel_volume() - 0.5 * 0.8 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn domain_mask_excludes_padding() {
        let g = GridSpec::cube(1.0, 8).unwrap();
        let mask = g.domain_mask();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 4 * 4 * 4);
        assert!(!mask[g.index(1, 4, 4)]);
        assert!(mask[g.index(2, 2, 5)]);
    }

    #[test]
    fn serde_validates() {
        let bad = r#"{"origin":[0.5,0,0],"extent":[1,1,1],"n":[8,8,8]}"#;
        assert!(serde_json::from_str::<GridSpec>(bad).is_err());
        let g = GridSpec::cube(0.5, 6).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<GridSpec>(&s).unwrap(), g);
    }
}
