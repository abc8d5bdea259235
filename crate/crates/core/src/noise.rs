//! Discrete Gaussian white noise: i.i.d. `N(0, h³)` voxel masses drawn from a
//! counter-based stream keyed by `(seed, voxel index)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{FieldOnGrid, GridSpec};
use crate::error::{Error, Result};
use crate::greens::ResolventOperator;

/// 32-bit words of the ChaCha stream consumed by each voxel.
const WORDS_PER_VOXEL: u128 = 4;

#[inline]
fn unit_open(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// One standard normal variate from two 64-bit draws (cosine branch of
/// Box–Muller).
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let u1 = unit_open(rng.next_u64());
    let u2 = unit_open(rng.next_u64());
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// The standard normal of voxel `index` under `seed`, independent of every
/// other voxel's draw.
pub fn voxel_normal(seed: u64, index: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(WORDS_PER_VOXEL * index as u128);
    standard_normal(&mut rng)
}

/// One realization `W` of the noise: `W_j ~ N(0, h³)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    grid: GridSpec,
    seed: u64,
    values: Vec<f64>,
}

impl NoiseRealization {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Draws the realization for `seed`. Voxel `j` always reads the same stream
/// position, so the result is independent of evaluation order.
pub fn draw_noise(grid: &GridSpec, seed: u64) -> NoiseRealization {
    let scale = grid.voxel_volume().sqrt();
    // Sequential reads visit stream positions 4j in order.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len()).map(|_| scale * standard_normal(&mut rng)).collect();
    NoiseRealization { grid: *grid, seed, values }
}

fn check_grid(noise: &NoiseRealization, grid: &GridSpec) -> Result<()> {
    if noise.grid == *grid {
        Ok(())
    } else {
        Err(Error::GridMismatch("noise realization and field live on different grids".into()))
    }
}

/// `⟨Ḃ, φ⟩ = Σ_j φ(x_j) W_j`.
pub fn pair(noise: &NoiseRealization, phi: &FieldOnGrid) -> Result<Complex64> {
    check_grid(noise, phi.grid())?;
    Ok(phi.values().iter().zip(&noise.values).map(|(p, &w)| p * w).sum())
}

/// `Σ_j φ_j W_j` for raw voxel values.
pub fn pair_values(noise: &NoiseRealization, phi: &[Complex64]) -> Complex64 {
    phi.iter().zip(&noise.values).map(|(p, &w)| p * w).sum()
}

/// `σW / h³`, the voxel density whose resolvent is `R_k(σḂ)`.
pub fn noise_density(sigma: &[f64], noise: &NoiseRealization) -> Vec<Complex64> {
    let inv = 1.0 / noise.grid.voxel_volume();
    sigma
        .iter()
        .zip(&noise.values)
        .map(|(&s, &w)| Complex64::new(s * w * inv, 0.0))
        .collect()
}

/// `x ↦ Σ_j Φ_k(x - y_j) σ(y_j) W_j`.
pub fn resolvent_of_noise(r: &ResolventOperator, sigma: &[f64], noise: &NoiseRealization) -> Result<FieldOnGrid> {
    check_grid(noise, r.grid())?;
    if sigma.len() != noise.grid.len() {
        return Err(Error::GridMismatch(format!("sigma has {} values", sigma.len())));
    }
    FieldOnGrid::from_complex(*r.grid(), r.apply_values(&noise_density(sigma, noise)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::{ResolventMethod, WaveNumber};

    #[test]
    fn deterministic_and_counter_based() {
        let g = GridSpec::cube(1.0, 6).unwrap();
        let a = draw_noise(&g, 42);
        assert_eq!(a, draw_noise(&g, 42));
        assert_ne!(a.values(), draw_noise(&g, 43).values());
        let scale = g.voxel_volume().sqrt();
        for j in [0, 1, 77, g.len() - 1] {
            assert_eq!(a.values()[j], scale * voxel_normal(42, j));
        }
    }

    #[test]
    fn moments_within_three_standard_errors() {
        let g = GridSpec::cube(1.0, 40).unwrap();
        let w = draw_noise(&g, 5);
        let n = w.values().len() as f64;
        let vol = g.voxel_volume();
        let mean = w.values().iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * (vol / n).sqrt());
        let var = w.values().iter().map(|v| v * v).sum::<f64>() / n;
        assert!((var - vol).abs() < 3.0 * vol * (2.0 / n).sqrt());
    }

    #[test]
    fn pair_is_linear_and_vanishes_on_zero() {
        let g = GridSpec::cube(1.0, 6).unwrap();
        let w = draw_noise(&g, 1);
        let zero = FieldOnGrid::zeros(g, crate::domain::FieldKind::Real);
        assert_eq!(pair(&w, &zero).unwrap(), Complex64::new(0.0, 0.0));
        let a = FieldOnGrid::from_fn_real(g, |x| x[0]);
        let b = FieldOnGrid::from_fn_complex(g, |x| Complex64::new(x[1], x[2]));
        let alpha = Complex64::new(0.3, -2.0);
        let combo = b.axpy(alpha, &a).unwrap();
        let lhs = pair(&w, &combo).unwrap();
        let rhs = pair(&w, &b).unwrap() + alpha * pair(&w, &a).unwrap();
        assert!((lhs - rhs).norm() < 1e-13);
        let other = GridSpec::cube(1.0, 5).unwrap();
        assert!(pair(&w, &FieldOnGrid::zeros(other, crate::domain::FieldKind::Real)).is_err());
    }

    #[test]
    fn resolvent_of_noise_is_linear_in_sigma() {
        let g = GridSpec::cube(1.0, 8).unwrap();
        let r = ResolventOperator::new(g, WaveNumber::new(3.0).unwrap(), ResolventMethod::FastConvolution);
        let w = draw_noise(&g, 9);
        let zero = resolvent_of_noise(&r, &vec![0.0; g.len()], &w).unwrap();
        assert!(zero.values().iter().all(|v| v.norm() == 0.0));
        let s: Vec<f64> = g.points().map(|x| (x[0] * x[0] + x[1]).exp()).collect();
        let s2: Vec<f64> = s.iter().map(|v| 2.5 * v).collect();
        let a = resolvent_of_noise(&r, &s, &w).unwrap();
        let b = resolvent_of_noise(&r, &s2, &w).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x * 2.5 - y).norm() < 1e-12 * (1.0 + y.norm()));
        }
    }
}
