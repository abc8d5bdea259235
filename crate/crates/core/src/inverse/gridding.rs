//! Polar frequency samples and their inversion to a real field on a grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{norm3, FieldOnGrid, FrequencyGrid, GridSpec};
use crate::error::{Error, Result};

/// Angular neighbours blended by inverse-distance weighting.
const IDW_NEIGHBOURS: usize = 4;

/// Fewer directions than this draws a coverage warning.
pub const MIN_DIRECTIONS: usize = 16;

/// `n` nearly uniform unit vectors (Fibonacci lattice).
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// A polar sampling pattern `p = r·x̂` over radii × directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    radii: Vec<f64>,
    directions: Vec<[f64; 3]>,
}

impl PolarGrid {
    pub fn new(radii: Vec<f64>, directions: Vec<[f64; 3]>) -> Result<Self> {
        if radii.is_empty() || directions.is_empty() {
            return Err(Error::InvalidArgument("polar grid needs radii and directions".into()));
        }
        if radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("radii must be finite, nonnegative and increasing".into()));
        }
        for d in &directions {
            if (norm3(*d) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("direction {d:?} is not a unit vector")));
            }
        }
        Ok(PolarGrid { radii, directions })
    }

    /// `n_radii` radii evenly spaced in `(0, p_max]` and a Fibonacci
    /// direction set.
    pub fn uniform(p_max: f64, n_radii: usize, n_directions: usize) -> Result<Self> {
        let radii = (1..=n_radii).map(|i| p_max * i as f64 / n_radii as f64).collect();
        PolarGrid::new(radii, fibonacci_sphere(n_directions))
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn directions(&self) -> &[[f64; 3]] {
        &self.directions
    }

    pub fn p_max(&self) -> f64 {
        *self.radii.last().expect("nonempty radii")
    }

    pub fn len(&self) -> usize {
        self.radii.len() * self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Frequency of sample `(radius i, direction j)`.
    pub fn point(&self, i: usize, j: usize) -> [f64; 3] {
        let d = self.directions[j];
        [self.radii[i] * d[0], self.radii[i] * d[1], self.radii[i] * d[2]]
    }

    /// All sample frequencies, radius-major.
    pub fn points(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.radii.len() {
            for j in 0..self.directions.len() {
                out.push(self.point(i, j));
            }
        }
        out
    }
}

/// Complex values on a [`PolarGrid`], radius-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarSamples {
    grid: PolarGrid,
    values: Vec<Complex64>,
}

impl PolarSamples {
    pub fn new(grid: PolarGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} polar samples",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite("polar samples".into()));
        }
        Ok(PolarSamples { grid, values })
    }

    pub fn from_fn(grid: PolarGrid, f: impl Fn([f64; 3]) -> Complex64) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        PolarSamples { grid, values }
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// `(p, value)` pairs.
    pub fn pairs(&self) -> Vec<([f64; 3], Complex64)> {
        self.grid.points().into_iter().zip(self.values.iter().copied()).collect()
    }

    /// Adds the mirrored samples `value(-p) = conj(value(p))`.
    fn symmetrized(&self) -> (Vec<[f64; 3]>, Vec<Vec<Complex64>>) {
        let nd = self.grid.directions.len();
        let mut dirs = self.grid.directions.clone();
        dirs.extend(self.grid.directions.iter().map(|d| [-d[0], -d[1], -d[2]]));
        let shells = (0..self.grid.radii.len())
            .map(|i| {
                let row = &self.values[i * nd..(i + 1) * nd];
                row.iter().copied().chain(row.iter().map(|v| v.conj())).collect()
            })
            .collect();
        (dirs, shells)
    }
}

/// Blends the values at the nearest directions to `u`.
fn angular_weights(dirs: &[[f64; 3]], u: [f64; 3]) -> Vec<(usize, f64)> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(IDW_NEIGHBOURS + 1);
    for (j, d) in dirs.iter().enumerate() {
        let chord2 = (d[0] - u[0]).powi(2) + (d[1] - u[1]).powi(2) + (d[2] - u[2]).powi(2);
        if best.len() < IDW_NEIGHBOURS || chord2 < best[best.len() - 1].0 {
            let pos = best.partition_point(|(c, _)| *c <= chord2);
            best.insert(pos, (chord2, j));
            best.truncate(IDW_NEIGHBOURS);
        }
    }
    if best[0].0 < 1e-24 {
        return vec![(best[0].1, 1.0)];
    }
    let total: f64 = best.iter().map(|(c, _)| 1.0 / c).sum();
    best.iter().map(|(c, j)| (*j, 1.0 / c / total)).collect()
}

/// Interpolated value at frequency `q`: linear in radius (constant below the
/// first radius, zero beyond the last) and inverse-distance weighted in
/// direction.
fn interpolate(radii: &[f64], dirs: &[[f64; 3]], shells: &[Vec<Complex64>], q: [f64; 3]) -> Complex64 {
    let r = norm3(q);
    let p_max = radii[radii.len() - 1];
    if r > p_max * (1.0 + 1e-12) {
        return Complex64::new(0.0, 0.0);
    }
    let u = if r > 0.0 { [q[0] / r, q[1] / r, q[2] / r] } else { [0.0, 0.0, 1.0] };
    let ang = angular_weights(dirs, u);
    let shell_value = |i: usize| ang.iter().map(|&(j, w)| shells[i][j] * w).sum::<Complex64>();
    if r <= radii[0] {
        return shell_value(0);
    }
    let i = radii.partition_point(|&x| x < r).min(radii.len() - 1);
    let (r0, r1) = (radii[i - 1], radii[i]);
    let t = ((r - r0) / (r1 - r0)).clamp(0.0, 1.0);
    shell_value(i - 1) * (1.0 - t) + shell_value(i) * t
}

/// Outcome of [`invert_polar`].
#[derive(Debug, Clone)]
pub struct GriddedInversion {
    pub field: FieldOnGrid,
    pub warnings: Vec<String>,
}

/// Conjugate-symmetrizes the samples, interpolates them onto the DFT
/// frequency lattice of `target`, enforces Hermitian symmetry there and
/// inverts with the `(2π)^{-3/2}` convention. The result is real.
pub fn invert_polar(samples: &PolarSamples, target: &GridSpec) -> Result<GriddedInversion> {
    let p_max = samples.grid.p_max();
    let h = target.max_spacing();
    if p_max * h > PI * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "p_max = {p_max} exceeds the grid Nyquist frequency {}",
            PI / h
        )));
    }
    let mut warnings = Vec::new();
    if samples.grid.directions.len() < MIN_DIRECTIONS {
        warnings.push(format!(
            "only {} directions (at least {MIN_DIRECTIONS} recommended); angular coverage is sparse",
            samples.grid.directions.len()
        ));
    }
    let (dirs, shells) = samples.symmetrized();
    let lattice = FrequencyGrid::new(*target);
    let mut spectrum: Vec<Complex64> = (0..target.len())
        .map(|idx| interpolate(&samples.grid.radii, &dirs, &shells, lattice.frequency(idx)))
        .collect();
    let raw = spectrum.clone();
    for (idx, v) in spectrum.iter_mut().enumerate() {
        *v = match lattice.mirror(idx) {
            Some(m) => (raw[idx] + raw[m].conj()) * 0.5,
            None => Complex64::new(0.0, 0.0),
        };
    }
    let values: Vec<f64> = lattice.inverse(&spectrum).into_iter().map(|v| v.re).collect();
    Ok(GriddedInversion { field: FieldOnGrid::from_real(*target, &values)?, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{fourier_transform_real, Phantom};

    #[test]
    fn fibonacci_directions_are_unit_and_balanced() {
        let d = fibonacci_sphere(64);
        let mut s = [0.0; 3];
        for v in &d {
            assert!((norm3(*v) - 1.0).abs() < 1e-14);
            for a in 0..3 {
                s[a] += v[a];
            }
        }
        assert!(norm3(s) < 1.0);
    }

    #[test]
    fn zero_samples_give_zero_field() {
        let grid = PolarGrid::uniform(10.0, 8, 32).unwrap();
        let s = PolarSamples::new(grid.clone(), vec![Complex64::new(0.0, 0.0); grid.len()]).unwrap();
        let g = GridSpec::cube(1.0, 16).unwrap();
        let out = invert_polar(&s, &g).unwrap();
        assert!(out.field.values().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn rejects_frequencies_beyond_nyquist_and_warns_on_sparse_directions() {
        let g = GridSpec::cube(1.0, 16).unwrap();
        let too_far = PolarGrid::uniform(40.0, 8, 32).unwrap();
        let s = PolarSamples::new(too_far.clone(), vec![Complex64::new(1.0, 0.0); too_far.len()]).unwrap();
        assert!(invert_polar(&s, &g).is_err());
        let sparse = PolarGrid::uniform(10.0, 4, 8).unwrap();
        let s = PolarSamples::new(sparse.clone(), vec![Complex64::new(0.0, 0.0); sparse.len()]).unwrap();
        assert_eq!(invert_polar(&s, &g).unwrap().warnings.len(), 1);
    }

    #[test]
    fn smooth_phantom_is_recovered_from_its_transform() {
        let g = GridSpec::cube(1.0, 32).unwrap();
        let truth = Phantom::Bump { center: [0.1, -0.05, 0.0], radius: 0.6, amplitude: 1.0 }.sample(&g);
        let pol = PolarGrid::uniform(PI / g.max_spacing(), 32, 64).unwrap();
        let samples = PolarSamples::from_fn(pol, |p| fourier_transform_real(&g, &truth, p).unwrap());
        let out = invert_polar(&samples, &g).unwrap();
        let rec = out.field.real_parts();
        assert!(out.field.values().iter().all(|v| v.im == 0.0));
        let num: f64 = rec.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = truth.iter().map(|b| b * b).sum();
        let err = (num / den).sqrt();
        assert!(err < 0.05, "relative error {err}");
    }
}
