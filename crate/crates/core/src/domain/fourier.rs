//! Fourier transform with the unitary convention
//! `φ̂(ξ) = (2π)^{-3/2} ∫ e^{-i x·ξ} φ(x) dx`, discretised by the voxel
//! midpoint rule.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::field::FieldOnGrid;
use super::grid::GridSpec;
use crate::error::{Error, Result};
use crate::fft3::{signed_index, Fft3};

/// `(2π)^{-3/2}`.
pub const FOURIER_NORM: f64 = 0.063_493_635_934_240_97;

/// Per-axis factors `e^{sign·i·p_a·x_a}` at the voxel centres, so that a plane
/// wave over the grid is the product of three one-dimensional tables.
#[derive(Debug, Clone)]
pub struct PlaneWave {
    axes: [Vec<Complex64>; 3],
}

impl PlaneWave {
    /// `e^{-i p·x}` sampled on `grid`.
    pub fn outgoing(grid: &GridSpec, p: [f64; 3]) -> Self {
        PlaneWave::with_sign(grid, p, -1.0)
    }

    /// `e^{+i p·x}` sampled on `grid`.
    pub fn incoming(grid: &GridSpec, p: [f64; 3]) -> Self {
        PlaneWave::with_sign(grid, p, 1.0)
    }

    fn with_sign(grid: &GridSpec, p: [f64; 3], sign: f64) -> Self {
        let axes = [0, 1, 2].map(|a| {
            grid.axis_centers(a)
                .into_iter()
                .map(|x| Complex64::from_polar(1.0, sign * p[a] * x))
                .collect()
        });
        PlaneWave { axes }
    }

    #[inline]
    pub fn at(&self, c: [usize; 3]) -> Complex64 {
        self.axes[0][c[0]] * self.axes[1][c[1]] * self.axes[2][c[2]]
    }

    /// Full plane wave in storage order.
    pub fn to_vec(&self) -> Vec<Complex64> {
        let (n0, n1, n2) = (self.axes[0].len(), self.axes[1].len(), self.axes[2].len());
        let mut out = Vec::with_capacity(n0 * n1 * n2);
        for z in &self.axes[2] {
            for y in &self.axes[1] {
                let yz = y * z;
                out.extend(self.axes[0].iter().map(|x| x * yz));
            }
        }
        out
    }

    /// `Σ_j wave(x_j) · values_j` (no quadrature weight).
    pub fn sum(&self, values: &[Complex64]) -> Complex64 {
        let n0 = self.axes[0].len();
        let n1 = self.axes[1].len();
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, z) in self.axes[2].iter().enumerate() {
            for (j, y) in self.axes[1].iter().enumerate() {
                let base = n0 * (j + n1 * k);
                let row = &values[base..base + n0];
                let mut line = Complex64::new(0.0, 0.0);
                for (v, x) in row.iter().zip(&self.axes[0]) {
                    line += v * x;
                }
                acc += line * (y * z);
            }
        }
        acc
    }

    /// `Σ_j wave(x_j) · values_j` for a real-valued field.
    pub fn sum_real(&self, values: &[f64]) -> Complex64 {
        let n0 = self.axes[0].len();
        let n1 = self.axes[1].len();
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, z) in self.axes[2].iter().enumerate() {
            for (j, y) in self.axes[1].iter().enumerate() {
                let base = n0 * (j + n1 * k);
                let row = &values[base..base + n0];
                let mut line = Complex64::new(0.0, 0.0);
                for (v, x) in row.iter().zip(&self.axes[0]) {
                    line += x * *v;
                }
                acc += line * (y * z);
            }
        }
        acc
    }

    /// Same as [`PlaneWave::sum`] restricted to the listed voxel indices.
    pub fn sum_sparse(&self, grid: &GridSpec, indices: &[usize], values: &[Complex64]) -> Complex64 {
        indices
            .iter()
            .zip(values)
            .map(|(&idx, v)| self.at(grid.coords(idx)) * v)
            .sum()
    }
}

fn check_frequency(p: [f64; 3]) -> Result<()> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("frequency {p:?}")))
    }
}

/// Midpoint-rule value of `φ̂(p)`.
pub fn fourier_transform_hat(field: &FieldOnGrid, p: [f64; 3]) -> Result<Complex64> {
    check_frequency(p)?;
    let grid = field.grid();
    let wave = PlaneWave::outgoing(grid, p);
    Ok(wave.sum(field.values()) * (grid.voxel_volume() * FOURIER_NORM))
}

/// `φ̂(p)` for a real voxel array on `grid`.
pub fn fourier_transform_real(grid: &GridSpec, values: &[f64], p: [f64; 3]) -> Result<Complex64> {
    check_frequency(p)?;
    if values.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} values on a {}-voxel grid",
            values.len(),
            grid.len()
        )));
    }
    let wave = PlaneWave::outgoing(grid, p);
    Ok(wave.sum_real(values) * (grid.voxel_volume() * FOURIER_NORM))
}

/// DFT-compatible frequency lattice of a grid: `p_m = 2π m / L` along each
/// axis, in FFT storage order.
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    grid: GridSpec,
    axes: [Vec<f64>; 3],
}

impl FrequencyGrid {
    pub fn new(grid: GridSpec) -> Self {
        let dims = grid.dims();
        let extent = grid.extent();
        let axes = [0, 1, 2].map(|a| {
            let dp = 2.0 * PI / extent[a];
            (0..dims[a])
                .map(|m| signed_index(m, dims[a]) as f64 * dp)
                .collect()
        });
        FrequencyGrid { grid, axes }
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    /// Volume of one frequency cell, `Π 2π/L_a`.
    pub fn cell_volume(&self) -> f64 {
        let e = self.grid.extent();
        (2.0 * PI).powi(3) / (e[0] * e[1] * e[2])
    }

    pub fn frequency(&self, idx: usize) -> [f64; 3] {
        let [a, b, c] = self.grid.coords(idx);
        [self.axes[0][a], self.axes[1][b], self.axes[2][c]]
    }

    /// Storage index of the lattice point `-p` for the point at `idx`, when it
    /// exists (the most negative Nyquist index of an even axis has no mirror).
    pub fn mirror(&self, idx: usize) -> Option<usize> {
        let dims = self.grid.dims();
        let c = self.grid.coords(idx);
        let mut out = [0usize; 3];
        for a in 0..3 {
            let n = dims[a];
            if n % 2 == 0 && c[a] == n / 2 {
                return None;
            }
            out[a] = (n - c[a]) % n;
        }
        Some(self.grid.index(out[0], out[1], out[2]))
    }

    /// `φ̂` on every lattice point via FFT.
    pub fn forward(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut buf = values.to_vec();
        Fft3::new(self.grid.dims()).forward(&mut buf);
        let c0 = self.first_center();
        let scale = self.grid.voxel_volume() * FOURIER_NORM;
        for (idx, v) in buf.iter_mut().enumerate() {
            let p = self.frequency(idx);
            let shift = -(p[0] * c0[0] + p[1] * c0[1] + p[2] * c0[2]);
            *v *= Complex64::from_polar(scale, shift);
        }
        buf
    }

    /// Inverse of [`FrequencyGrid::forward`]: the Riemann sum of
    /// `(2π)^{-3/2} ∫ e^{i x·p} φ̂(p) dp` over the lattice, evaluated at the voxel
    /// centres.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let c0 = self.first_center();
        let scale = self.cell_volume() * FOURIER_NORM;
        let mut buf: Vec<Complex64> = spectrum
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                let p = self.frequency(idx);
                let shift = p[0] * c0[0] + p[1] * c0[1] + p[2] * c0[2];
                v * Complex64::from_polar(scale, shift)
            })
            .collect();
        Fft3::new(self.grid.dims()).inverse(&mut buf);
        buf
    }

    fn first_center(&self) -> [f64; 3] {
        self.grid.center(0, 0, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::FieldKind;

    #[test]
    fn norm_constant() {
        assert!((FOURIER_NORM - (2.0 * PI).powf(-1.5)).abs() < 1e-17);
    }

    #[test]
    fn zero_field_has_zero_transform() {
        let g = GridSpec::cube(1.0, 6).unwrap();
        let f = FieldOnGrid::zeros(g, FieldKind::Real);
        for p in [[0.0; 3], [1.0, -2.0, 0.5], [30.0, 0.0, 0.0]] {
            assert_eq!(fourier_transform_hat(&f, p).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn rejects_non_finite_frequency() {
        let g = GridSpec::cube(1.0, 4).unwrap();
        let f = FieldOnGrid::zeros(g, FieldKind::Real);
        assert!(fourier_transform_hat(&f, [f64::NAN, 0.0, 0.0]).is_err());
        assert!(fourier_transform_hat(&f, [0.0, f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn even_real_field_has_real_transform() {
        let g = GridSpec::cube(1.0, 10).unwrap();
        let f = FieldOnGrid::from_fn_real(g, |x| (-(x[0] * x[0] + 2.0 * x[1] * x[1] + x[2] * x[2])).exp());
        for p in [[0.3, 1.1, -2.0], [4.0, 0.0, 1.0]] {
            let v = fourier_transform_hat(&f, p).unwrap();
            assert!(v.im.abs() < 1e-14 * v.norm().max(1.0), "{v}");
        }
    }

    #[test]
    fn conjugate_symmetry_for_real_fields() {
        let g = GridSpec::new([-0.7, -1.0, -0.4], [1.9, 2.0, 1.5], [7, 6, 5]).unwrap();
        let f = FieldOnGrid::from_fn_real(g, |x| x[0] - x[1] * x[2] + 0.3);
        let p = [1.3, -0.4, 2.2];
        let a = fourier_transform_hat(&f, p).unwrap();
        let b = fourier_transform_hat(&f, [-p[0], -p[1], -p[2]]).unwrap();
        assert!((a - b.conj()).norm() < 1e-14);
    }

    #[test]
    fn lattice_forward_matches_pointwise_and_inverts() {
        let g = GridSpec::new([-0.6, -0.5, -0.55], [1.2, 1.1, 1.0], [6, 5, 4]).unwrap();
        let f = FieldOnGrid::from_fn_real(g, |x| (3.0 * x[0]).sin() + x[1] * x[1] - x[2]);
        let lattice = FrequencyGrid::new(g);
        let spec = lattice.forward(f.values());
        for idx in [0, 7, 33, 119] {
            let direct = fourier_transform_hat(&f, lattice.frequency(idx)).unwrap();
            assert!((direct - spec[idx]).norm() < 1e-13);
        }
        let back = lattice.inverse(&spec);
        for (a, b) in back.iter().zip(f.values()) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
