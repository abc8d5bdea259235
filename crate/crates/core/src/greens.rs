//! The outgoing Helmholtz fundamental solution and the volume resolvent
//! `R_k φ = ∫ Φ_k(· - y) φ(y) dy` on a voxel grid.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{FieldOnGrid, GridSpec};
use crate::error::{Error, Result};
use crate::fft3::Fft3;
use crate::noise::standard_normal;

/// Wave number `k = √E > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct WaveNumber(f64);

impl WaveNumber {
    pub fn new(k: f64) -> Result<Self> {
        if k.is_finite() && k > 0.0 {
            Ok(WaveNumber(k))
        } else {
            Err(Error::InvalidArgument(format!("wave number must be positive and finite, got {k}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for WaveNumber {
    type Error = Error;
    fn try_from(k: f64) -> Result<Self> {
        WaveNumber::new(k)
    }
}

impl From<WaveNumber> for f64 {
    fn from(k: WaveNumber) -> f64 {
        k.0
    }
}

impl fmt::Display for WaveNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `Φ_k(r) = e^{ikr} / (4πr)`. Accepts `k = 0` (the Laplace kernel).
pub fn green_eval(k: f64, r: f64) -> Result<Complex64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Green's function needs a positive distance, got {r}"
        )));
    }
    if !(k.is_finite() && k >= 0.0) {
        return Err(Error::InvalidArgument(format!("wave number must be finite and >= 0, got {k}")));
    }
    Ok(green_unchecked(k, r))
}

#[inline]
fn green_unchecked(k: f64, r: f64) -> Complex64 {
    Complex64::from_polar(1.0 / (4.0 * PI * r), k * r)
}

/// `∫_{|y|<a} Φ_k(y) dy = (e^{ika}(1 - ika) - 1) / k²`, with its Taylor
/// series near `ka = 0`.
pub fn ball_integral(k: f64, a: f64) -> Complex64 {
    let x = Complex64::new(0.0, k * a);
    if (k * a).abs() < 1e-3 {
        // a² Σ_{n≥2} (n-1)/n! (ika)^{n-2}
        let mut term = Complex64::new(1.0, 0.0);
        let mut fact = 2.0;
        let mut sum = Complex64::new(0.0, 0.0);
        for n in 2..10 {
            sum += term * ((n - 1) as f64 / fact);
            term *= x;
            fact *= (n + 1) as f64;
        }
        sum * (a * a)
    } else {
        (x.exp() * (Complex64::new(1.0, 0.0) - x) - 1.0) / (k * k)
    }
}

/// Mean of `Φ_k(0, ·)` over the ball whose volume equals `voxel_volume`.
pub fn self_cell_average(k: f64, voxel_volume: f64) -> Complex64 {
    let a = (3.0 * voxel_volume / (4.0 * PI)).cbrt();
    ball_integral(k, a) / voxel_volume
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResolventMethod {
    DirectSum,
    #[default]
    FastConvolution,
}

/// Convolution with `h³·G` on an `n₀×n₁×n₂` block of voxels with the given
/// spacing. Used for whole grids and for sub-box windows of them.
pub(crate) struct ConvolutionKernel {
    dims: [usize; 3],
    method: ResolventMethod,
    /// `h³·G` indexed by absolute voxel offsets, x-fastest.
    offsets: Vec<Complex64>,
    /// FFT of the doubled-grid circulant embedding of `offsets`.
    spectrum: Option<Vec<Complex64>>,
    fft: Option<Fft3>,
}

impl ConvolutionKernel {
    pub(crate) fn new(dims: [usize; 3], spacing: [f64; 3], k: f64, method: ResolventMethod) -> Self {
        let [n0, n1, n2] = dims;
        let h = spacing;
        let vol = h[0] * h[1] * h[2];
        let mut offsets = Vec::with_capacity(n0 * n1 * n2);
        for c in 0..n2 {
            for b in 0..n1 {
                for a in 0..n0 {
                    let v = if a == 0 && b == 0 && c == 0 {
                        self_cell_average(k, vol)
                    } else {
                        let d = [a as f64 * h[0], b as f64 * h[1], c as f64 * h[2]];
                        green_unchecked(k, (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
                    };
                    offsets.push(v * vol);
                }
            }
        }
        let mut kernel = ConvolutionKernel { dims, method, offsets, spectrum: None, fft: None };
        if method == ResolventMethod::FastConvolution {
            kernel.build_spectrum();
        }
        kernel
    }

    fn build_spectrum(&mut self) {
        let [n0, n1, n2] = self.dims;
        let big = [2 * n0, 2 * n1, 2 * n2];
        // Offset m on a doubled axis: m for m < n, m - 2n above n, unused at n.
        let fold = |m: usize, n: usize| -> Option<usize> {
            match m.cmp(&n) {
                std::cmp::Ordering::Less => Some(m),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some(2 * n - m),
            }
        };
        let mut table = vec![Complex64::new(0.0, 0.0); big[0] * big[1] * big[2]];
        for c in 0..big[2] {
            let Some(fc) = fold(c, n2) else { continue };
            for b in 0..big[1] {
                let Some(fb) = fold(b, n1) else { continue };
                for a in 0..big[0] {
                    let Some(fa) = fold(a, n0) else { continue };
                    table[a + big[0] * (b + big[1] * c)] = self.offsets[fa + n0 * (fb + n1 * fc)];
                }
            }
        }
        let fft = Fft3::new(big);
        fft.forward(&mut table);
        let scale = 1.0 / table.len() as f64;
        for v in &mut table {
            *v *= scale;
        }
        self.spectrum = Some(table);
        self.fft = Some(fft);
    }

    pub(crate) fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    fn offset(&self, a: [usize; 3], b: [usize; 3]) -> Complex64 {
        let [n0, n1, _] = self.dims;
        let d = [a[0].abs_diff(b[0]), a[1].abs_diff(b[1]), a[2].abs_diff(b[2])];
        self.offsets[d[0] + n0 * (d[1] + n1 * d[2])]
    }

    fn coords(&self, idx: usize) -> [usize; 3] {
        let [n0, n1, _] = self.dims;
        [idx % n0, (idx / n0) % n1, idx / (n0 * n1)]
    }

    pub(crate) fn apply(&self, values: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.len(), "resolvent input has the wrong length");
        match self.method {
            ResolventMethod::DirectSum => self.apply_direct(values),
            ResolventMethod::FastConvolution => self.apply_fft(values),
        }
    }

    fn apply_direct(&self, values: &[Complex64]) -> Vec<Complex64> {
        let sources: Vec<([usize; 3], Complex64)> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != Complex64::new(0.0, 0.0))
            .map(|(j, v)| (self.coords(j), *v))
            .collect();
        (0..self.len())
            .map(|i| {
                let a = self.coords(i);
                let mut acc = Complex64::new(0.0, 0.0);
                for (b, v) in &sources {
                    acc += self.offset(a, *b) * v;
                }
                acc
            })
            .collect()
    }

    fn apply_fft(&self, values: &[Complex64]) -> Vec<Complex64> {
        let spectrum = self.spectrum.as_ref().expect("spectrum built for fast convolution");
        let fft = self.fft.as_ref().expect("plan built for fast convolution");
        let [n0, n1, n2] = self.dims;
        let (b0, b1) = (2 * n0, 2 * n1);
        let mut buf = vec![Complex64::new(0.0, 0.0); spectrum.len()];
        for c in 0..n2 {
            for b in 0..n1 {
                let src = n0 * (b + n1 * c);
                let dst = b0 * (b + b1 * c);
                buf[dst..dst + n0].copy_from_slice(&values[src..src + n0]);
            }
        }
        fft.forward(&mut buf);
        for (v, s) in buf.iter_mut().zip(spectrum) {
            *v *= s;
        }
        fft.inverse(&mut buf);
        let mut out = Vec::with_capacity(values.len());
        for c in 0..n2 {
            for b in 0..n1 {
                let src = b0 * (b + b1 * c);
                out.extend_from_slice(&buf[src..src + n0]);
            }
        }
        out
    }
}

/// Discrete `R_k`: `(Rφ)(x_i) = Σ_j G(x_i - x_j) φ(x_j) h³` with point values
/// of `Φ_k` off the diagonal and the equal-volume-ball average on it.
pub struct ResolventOperator {
    grid: GridSpec,
    k: WaveNumber,
    kernel: ConvolutionKernel,
}

impl fmt::Debug for ResolventOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResolventOperator")
            .field("grid", &self.grid)
            .field("k", &self.k)
            .field("method", &self.kernel.method)
            .finish()
    }
}

impl ResolventOperator {
    pub fn new(grid: GridSpec, k: WaveNumber, method: ResolventMethod) -> Self {
        let kernel = ConvolutionKernel::new(grid.dims(), grid.spacing(), k.get(), method);
        ResolventOperator { grid, k, kernel }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn k(&self) -> WaveNumber {
        self.k
    }

    pub fn method(&self) -> ResolventMethod {
        self.kernel.method
    }

    /// `h³ G(x_i - x_j)` for voxel indices `i`, `j`.
    pub fn weight(&self, i: usize, j: usize) -> Complex64 {
        self.kernel.offset(self.grid.coords(i), self.grid.coords(j))
    }

    pub fn apply(&self, field: &FieldOnGrid) -> Result<FieldOnGrid> {
        field.ensure_same_grid(&self.grid)?;
        FieldOnGrid::from_complex(self.grid, self.apply_values(field.values()))
    }

    /// [`ResolventOperator::apply`] on raw voxel values.
    ///
    /// # Panics
    ///
    /// If `values` does not have one entry per voxel.
    pub fn apply_values(&self, values: &[Complex64]) -> Vec<Complex64> {
        self.kernel.apply(values)
    }

    /// `conj(R conj(φ))`, the Hilbert-space adjoint of `R`.
    pub fn apply_adjoint_values(&self, values: &[Complex64]) -> Vec<Complex64> {
        let conj: Vec<Complex64> = values.iter().map(|v| v.conj()).collect();
        let mut out = self.apply_values(&conj);
        for v in &mut out {
            *v = v.conj();
        }
        out
    }
}

/// Power-iteration estimate of `‖R_k V‖` on `L²(D)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub k: f64,
    pub norm_estimate: f64,
    pub iterations: usize,
    pub converged: bool,
}

const POWER_ITERATIONS: usize = 60;
const POWER_TOL: f64 = 1e-5;

/// Estimates the operator norm of `φ ↦ R(Vφ)` restricted to the domain `D`
/// (the grid box minus its padding) by power iteration on `AᴴA`, started from
/// `trials` seeded random vectors. The largest estimate is reported.
pub fn estimate_contraction(r: &ResolventOperator, potential: &[f64], trials: usize, seed: u64) -> ContractionReport {
    let grid = r.grid();
    assert_eq!(potential.len(), grid.len(), "potential has the wrong length");
    let k = r.k().get();
    let domain = grid.domain_mask();
    let active: Vec<bool> = potential.iter().zip(&domain).map(|(&v, &d)| d && v != 0.0).collect();
    if !active.iter().any(|&a| a) {
        return ContractionReport { k, norm_estimate: 0.0, iterations: 0, converged: true };
    }
    let apply_a = |x: &[Complex64]| -> Vec<Complex64> {
        let vx: Vec<Complex64> = x.iter().zip(potential).map(|(v, &p)| v * p).collect();
        let mut y = r.apply_values(&vx);
        for (v, &d) in y.iter_mut().zip(&domain) {
            if !d {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        y
    };
    let apply_ah = |y: &[Complex64]| -> Vec<Complex64> {
        let z = r.apply_adjoint_values(y);
        z.iter().zip(potential).zip(&active).map(|((v, &p), &a)| if a { v * p } else { Complex64::new(0.0, 0.0) }).collect()
    };
    let norm = |x: &[Complex64]| x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();

    let mut best = 0.0f64;
    let mut iterations = 0;
    for t in 0..trials.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let mut x: Vec<Complex64> = active
            .iter()
            .map(|&a| {
                let re = standard_normal(&mut rng);
                let im = standard_normal(&mut rng);
                if a { Complex64::new(re, im) } else { Complex64::new(0.0, 0.0) }
            })
            .collect();
        let n0 = norm(&x);
        x.iter_mut().for_each(|v| *v /= n0);
        let mut estimate = 0.0;
        for _ in 0..POWER_ITERATIONS {
            iterations += 1;
            let y = apply_a(&x);
            let gain = norm(&y);
            if gain == 0.0 {
                estimate = 0.0;
                break;
            }
            let z = apply_ah(&y);
            let nz = norm(&z);
            let next = (nz).sqrt();
            x = z.into_iter().map(|v| v / nz).collect();
            let converged = (next - estimate).abs() <= POWER_TOL * next;
            estimate = next.max(gain);
            if converged {
                break;
            }
        }
        best = best.max(estimate);
    }
    ContractionReport { k, norm_estimate: best, iterations, converged: best < 1.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FieldKind, Phantom};

    fn radial_quadrature(k: f64, a: f64) -> Complex64 {
        // ∫_0^a e^{ikr} r dr by composite Gauss-Legendre (5 points, 200 panels).
        let nodes = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
        let weights = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];
        let panels = 200;
        let w = a / panels as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * w;
            for (x, wt) in nodes.iter().zip(weights) {
                let r = mid + 0.5 * w * x;
                acc += Complex64::from_polar(r, k * r) * (0.5 * w * wt);
            }
        }
        acc
    }

    #[test]
    fn green_values() {
        assert!((green_eval(0.0, 1.0).unwrap().re - 0.079_577_471_545_947_67).abs() < 1e-15);
        let g = green_eval(PI, 1.0).unwrap();
        assert!((g.re + 1.0 / (4.0 * PI)).abs() < 1e-15 && g.im.abs() < 1e-15);
        for (k, r) in [(3.0, 0.2), (17.0, 2.5), (0.1, 9.0)] {
            assert!((green_eval(k, r).unwrap().norm() - 1.0 / (4.0 * PI * r)).abs() < 1e-15);
        }
        assert!(green_eval(1.0, 0.0).is_err());
        assert!(green_eval(1.0, -1.0).is_err());
    }

    #[test]
    fn ball_integral_matches_radial_quadrature() {
        for (k, a) in [(1.0, 0.1), (5.0, 0.3), (40.0, 0.05), (1e-5, 0.2), (2.0, 1e-4)] {
            let exact = radial_quadrature(k, a);
            let closed = ball_integral(k, a);
            assert!((closed - exact).norm() < 1e-10 * exact.norm().max(1e-12), "k={k} a={a}");
        }
    }

    #[test]
    fn self_average_small_k() {
        let vol = 1e-3;
        let a = (3.0 * vol / (4.0 * PI)).cbrt();
        let v = self_cell_average(1e-9, vol);
        assert!(v.im.abs() < 1e-8 * v.re);
        assert!((v.re - a * a / 2.0 / vol).abs() < 1e-9 * v.re);
        let v1 = self_cell_average(1.0, 4.0 / 3.0 * PI * 1e-3);
        assert!((v1 * (4.0 / 3.0 * PI * 1e-3) - radial_quadrature(1.0, 0.1)).norm() < 1e-10);
    }

    #[test]
    fn kernel_is_reciprocal() {
        let g = GridSpec::cube(1.0, 6).unwrap();
        let r = ResolventOperator::new(g, WaveNumber::new(3.0).unwrap(), ResolventMethod::DirectSum);
        for (i, j) in [(0, 215), (17, 100), (42, 42)] {
            assert_eq!(r.weight(i, j), r.weight(j, i));
        }
    }

    #[test]
    fn methods_agree_on_random_input() {
        let g = GridSpec::new([-0.8, -1.0, -0.7], [1.7, 2.0, 1.5], [9, 8, 7]).unwrap();
        let k = WaveNumber::new(4.5).unwrap();
        let direct = ResolventOperator::new(g, k, ResolventMethod::DirectSum);
        let fast = ResolventOperator::new(g, k, ResolventMethod::FastConvolution);
        let vals: Vec<Complex64> = (0..g.len())
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let a = direct.apply_values(&vals);
        let b = fast.apply_values(&vals);
        let scale = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        assert!(diff < 1e-12 * scale, "{diff}");
    }

    #[test]
    fn zero_in_zero_out() {
        let g = GridSpec::cube(1.0, 8).unwrap();
        let r = ResolventOperator::new(g, WaveNumber::new(2.0).unwrap(), ResolventMethod::FastConvolution);
        let out = r.apply(&FieldOnGrid::zeros(g, FieldKind::Complex)).unwrap();
        assert!(out.values().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
        let other = GridSpec::cube(1.0, 6).unwrap();
        assert!(r.apply(&FieldOnGrid::zeros(other, FieldKind::Real)).is_err());
    }

    #[test]
    fn adjoint_identity() {
        let g = GridSpec::cube(1.0, 6).unwrap();
        let r = ResolventOperator::new(g, WaveNumber::new(2.5).unwrap(), ResolventMethod::FastConvolution);
        let x: Vec<Complex64> = (0..g.len()).map(|i| Complex64::new((i as f64).sin(), 0.3)).collect();
        let y: Vec<Complex64> = (0..g.len()).map(|i| Complex64::new(0.1, (i as f64 * 0.7).cos())).collect();
        let rx = r.apply_values(&x);
        let rhy = r.apply_adjoint_values(&y);
        let lhs: Complex64 = rx.iter().zip(&y).map(|(a, b)| a * b.conj()).sum();
        let rhs: Complex64 = x.iter().zip(&rhy).map(|(a, b)| a * b.conj()).sum();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm());
    }

    #[test]
    fn contraction_zero_potential() {
        let g = GridSpec::cube(1.0, 8).unwrap();
        let r = ResolventOperator::new(g, WaveNumber::new(2.0).unwrap(), ResolventMethod::FastConvolution);
        let rep = estimate_contraction(&r, &vec![0.0; g.len()], 1, 0);
        assert_eq!(rep.norm_estimate, 0.0);
        assert!(rep.converged);
    }

    fn dense_norm(r: &ResolventOperator, v: &[f64]) -> f64 {
        let g = r.grid();
        let dom = g.domain_mask();
        let idx: Vec<usize> = (0..g.len()).filter(|&i| dom[i]).collect();
        let n = idx.len();
        let m = nalgebra::DMatrix::<Complex64>::from_fn(n, n, |a, b| r.weight(idx[a], idx[b]) * v[idx[b]]);
        m.singular_values()[0]
    }

    #[test]
    fn contraction_matches_dense_norm_and_decays() {
        let g = GridSpec::cube(1.0, 8).unwrap();
        let v = Phantom::ball(0.6, 3.0).sample(&g);
        let mut prev = None;
        for k in [4.0, 8.0] {
            let r = ResolventOperator::new(g, WaveNumber::new(k).unwrap(), ResolventMethod::FastConvolution);
            let rep = estimate_contraction(&r, &v, 2, 7);
            let exact = dense_norm(&r, &v);
            assert!((rep.norm_estimate - exact).abs() < 1e-2 * exact, "k={k}: {} vs {exact}", rep.norm_estimate);
            assert!(rep.norm_estimate >= 0.0);
            assert_eq!(rep.converged, rep.norm_estimate < 1.0);
            if let Some(p) = prev {
                let ratio: f64 = exact / p;
                assert!((0.35..=0.7).contains(&ratio), "ratio {ratio} at k={k}");
            }
            prev = Some(exact);
        }
    }
}
