//! Lowest Dirichlet eigenpairs of the 7-point operator `−Δ_h − V` on a
//! voxel mask.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::domain::{FieldOnGrid, GridSpec};
use crate::error::{Error, Result};

const RESIDUAL_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 300;
const PCG_TOL: f64 = 1e-12;
const PCG_MAX: usize = 500;
const EXTRA_VECTORS: usize = 8;

/// A Dirichlet eigenpair with `v` normalized in discrete `L²(D)`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    pub v: FieldOnGrid,
}

/// Sine transform of type I along one axis of a box, via a length
/// `2(m+1)` FFT.
struct Dst1 {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Dst1 {
    fn new(m: usize, planner: &mut FftPlanner<f64>) -> Self {
        Dst1 { m, fft: planner.plan_fft_forward(2 * (m + 1)) }
    }

    /// `S_j = Σ_{i=1}^{m} x_i sin(π i j/(m+1))`, in place.
    fn apply(&self, line: &mut [f64], buf: &mut [Complex64]) {
        let m = self.m;
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for i in 0..m {
            buf[i + 1] = Complex64::new(line[i], 0.0);
            buf[2 * m + 1 - i] = Complex64::new(-line[i], 0.0);
        }
        self.fft.process(buf);
        for j in 0..m {
            line[j] = -0.5 * buf[j + 1].im;
        }
    }
}

/// Exact inverse of the Dirichlet 7-point Laplacian on a box.
struct BoxPoisson {
    lo: [usize; 3],
    m: [usize; 3],
    dst: [Dst1; 3],
    inv_eig: Vec<f64>,
    lowest: f64,
}

fn axis_eigs(m: usize, h: f64) -> Vec<f64> {
    (1..=m).map(|j| (2.0 - 2.0 * (PI * j as f64 / (m + 1) as f64).cos()) / (h * h)).collect()
}

impl BoxPoisson {
    fn new(lo: [usize; 3], hi: [usize; 3], spacing: [f64; 3]) -> Self {
        let m = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
        let mut planner = FftPlanner::new();
        let dst = [Dst1::new(m[0], &mut planner), Dst1::new(m[1], &mut planner), Dst1::new(m[2], &mut planner)];
        let e: Vec<Vec<f64>> = (0..3).map(|a| axis_eigs(m[a], spacing[a])).collect();
        let mut inv_eig = Vec::with_capacity(m[0] * m[1] * m[2]);
        for a in &e[0] {
            for b in &e[1] {
                for c in &e[2] {
                    inv_eig.push(1.0 / (a + b + c));
                }
            }
        }
        let lowest = e[0][0] + e[1][0] + e[2][0];
        BoxPoisson { lo, m, dst, inv_eig, lowest }
    }

    fn transform(&self, data: &mut [f64]) {
        let [m0, m1, m2] = self.m;
        for axis in 0..3 {
            let len = self.m[axis];
            let mut line = vec![0.0; len];
            let mut buf = vec![Complex64::new(0.0, 0.0); 2 * (len + 1)];
            let (outer_a, outer_b, stride) = match axis {
                0 => (m1, m2, m1 * m2),
                1 => (m0, m2, m2),
                _ => (m0, m1, 1),
            };
            for a in 0..outer_a {
                for b in 0..outer_b {
                    let base = match axis {
                        0 => a * m2 + b,
                        1 => a * m1 * m2 + b,
                        _ => (a * m1 + b) * m2,
                    };
                    for (t, l) in line.iter_mut().enumerate() {
                        *l = data[base + t * stride];
                    }
                    self.dst[axis].apply(&mut line, &mut buf);
                    for (t, l) in line.iter().enumerate() {
                        data[base + t * stride] = *l;
                    }
                }
            }
        }
    }

    /// Solves on the box for a full-grid right-hand side, result restricted
    /// to `mask`.
    fn solve(&self, grid: &GridSpec, mask: &[bool], rhs: &[f64]) -> Vec<f64> {
        let [m0, m1, m2] = self.m;
        let mut data = vec![0.0; m0 * m1 * m2];
        for i in 0..m0 {
            for j in 0..m1 {
                for k in 0..m2 {
                    data[(i * m1 + j) * m2 + k] = rhs[grid.index(self.lo[0] + i, self.lo[1] + j, self.lo[2] + k)];
                }
            }
        }
        self.transform(&mut data);
        let norm = 8.0 / ((m0 + 1) * (m1 + 1) * (m2 + 1)) as f64;
        for (d, w) in data.iter_mut().zip(&self.inv_eig) {
            *d *= w * norm;
        }
        self.transform(&mut data);
        let mut out = vec![0.0; grid.len()];
        for i in 0..m0 {
            for j in 0..m1 {
                for k in 0..m2 {
                    let idx = grid.index(self.lo[0] + i, self.lo[1] + j, self.lo[2] + k);
                    if mask[idx] {
                        out[idx] = data[(i * m1 + j) * m2 + k];
                    }
                }
            }
        }
        out
    }
}

struct MaskedOperator<'a> {
    grid: GridSpec,
    mask: &'a [bool],
    potential: &'a [f64],
    inv_h2: [f64; 3],
    precond: BoxPoisson,
}

impl MaskedOperator<'_> {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let [n0, n1, n2] = g.dims();
        let mut y = vec![0.0; x.len()];
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let idx = g.index(i, j, k);
                    if !self.mask[idx] {
                        continue;
                    }
                    let c = x[idx];
                    let nb = |ii: isize, jj: isize, kk: isize| -> f64 {
                        let (a, b, d) = (i as isize + ii, j as isize + jj, k as isize + kk);
                        if a < 0 || b < 0 || d < 0 || a >= n0 as isize || b >= n1 as isize || d >= n2 as isize {
                            return 0.0;
                        }
                        let t = g.index(a as usize, b as usize, d as usize);
                        if self.mask[t] {
                            x[t]
                        } else {
                            0.0
                        }
                    };
                    y[idx] = (2.0 * c - nb(-1, 0, 0) - nb(1, 0, 0)) * self.inv_h2[0]
                        + (2.0 * c - nb(0, -1, 0) - nb(0, 1, 0)) * self.inv_h2[1]
                        + (2.0 * c - nb(0, 0, -1) - nb(0, 0, 1)) * self.inv_h2[2]
                        - self.potential[idx] * c;
                }
            }
        }
        y
    }

    /// Preconditioned conjugate gradients for `A x = b`.
    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let bn = dot(b, b).sqrt();
        let mut x = vec![0.0; b.len()];
        if bn == 0.0 {
            return Ok(x);
        }
        let mut r = b.to_vec();
        let mut z = self.precond.solve(&self.grid, self.mask, &r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..PCG_MAX {
            let ap = self.apply(&p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::SmallnessGate {
                    v_inf: sup(self.potential),
                    threshold: self.precond.lowest,
                    reason: "discrete operator is not positive definite on the domain".into(),
                });
            }
            let alpha = rz / pap;
            axpy(&mut x, alpha, &p);
            axpy(&mut r, -alpha, &ap);
            if dot(&r, &r).sqrt() <= PCG_TOL * bn {
                return Ok(x);
            }
            z = self.precond.solve(&self.grid, self.mask, &r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        Ok(x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn orthonormalize(vs: &mut Vec<Vec<f64>>) {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for mut v in vs.drain(..) {
        for _ in 0..2 {
            for q in &out {
                let c = dot(q, &v);
                axpy(&mut v, -c, q);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-300 {
            v.iter_mut().for_each(|x| *x /= n);
            out.push(v);
        }
    }
    *vs = out;
}

/// Lowest `count` eigenpairs of `−Δ_h − V` with zero Dirichlet data outside
/// `mask`, in increasing order.
pub fn dirichlet_eigenpairs(potential: &[f64], grid: &GridSpec, mask: &[bool], count: usize) -> Result<Vec<EigenPair>> {
    if count == 0 {
        return Err(Error::InvalidArgument("eigenpair count must be at least 1".into()));
    }
    if potential.len() != grid.len() || mask.len() != grid.len() {
        return Err(Error::GridMismatch("potential and mask must match the grid".into()));
    }
    let interior: Vec<usize> = (0..grid.len()).filter(|&i| mask[i]).collect();
    if interior.len() < count {
        return Err(Error::InvalidArgument(format!("mask has {} voxels, fewer than {count} eigenpairs", interior.len())));
    }
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for &i in &interior {
        let c = grid.coords(i);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let h = grid.spacing();
    let precond = BoxPoisson::new(lo, hi, h);
    let v_inf = sup(potential);
    if v_inf >= precond.lowest {
        return Err(Error::SmallnessGate {
            v_inf,
            threshold: precond.lowest,
            reason: "potential exceeds the lowest Dirichlet Laplacian eigenvalue of the domain box".into(),
        });
    }
    let op = MaskedOperator { grid: *grid, mask, potential, inv_h2: [1.0 / (h[0] * h[0]), 1.0 / (h[1] * h[1]), 1.0 / (h[2] * h[2])], precond };

    let block = (count + EXTRA_VECTORS).min(interior.len());
    let mut q = initial_block(&op, block);
    orthonormalize(&mut q);
    let mut worst = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let mut z = q.par_iter().map(|v| op.solve(v)).collect::<Result<Vec<_>>>()?;
        orthonormalize(&mut z);
        let az: Vec<Vec<f64>> = z.par_iter().map(|v| op.apply(v)).collect();
        let m = z.len();
        let hmat = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&z[i], &az[j]) + dot(&z[j], &az[i])));
        let eig = SymmetricEigen::new(hmat);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let combine = |basis: &[Vec<f64>], col: usize| {
            let mut out = vec![0.0; grid.len()];
            for (r, b) in basis.iter().enumerate() {
                axpy(&mut out, eig.eigenvectors[(r, col)], b);
            }
            out
        };
        let new_q: Vec<Vec<f64>> = order.iter().map(|&c| combine(&z, c)).collect();
        let new_aq: Vec<Vec<f64>> = order.iter().take(count).map(|&c| combine(&az, c)).collect();
        let thetas: Vec<f64> = order.iter().map(|&c| eig.eigenvalues[c]).collect();
        worst = 0.0;
        for i in 0..count {
            let mut r = new_aq[i].clone();
            axpy(&mut r, -thetas[i], &new_q[i]);
            worst = f64::max(worst, dot(&r, &r).sqrt() / (thetas[i].abs() * dot(&new_q[i], &new_q[i]).sqrt()));
        }
        q = new_q;
        if worst <= RESIDUAL_TOL {
            if thetas[0] <= 0.0 {
                return Err(Error::SmallnessGate {
                    v_inf,
                    threshold: op.precond.lowest,
                    reason: format!("lowest eigenvalue {} is not positive", thetas[0]),
                });
            }
            let scale = 1.0 / grid.voxel_volume().sqrt();
            return q
                .into_iter()
                .take(count)
                .zip(thetas)
                .map(|(v, lambda)| {
                    let vals: Vec<f64> = v.iter().map(|x| x * scale).collect();
                    Ok(EigenPair { lambda, v: FieldOnGrid::from_real(*grid, &vals)? })
                })
                .collect();
        }
    }
    Err(Error::EigenNotConverged { iterations: MAX_SWEEPS, residual: worst })
}

/// Lowest box sine modes restricted to the mask, plus a deterministic
/// perturbation so that non-box masks still span a generic subspace.
fn initial_block(op: &MaskedOperator<'_>, block: usize) -> Vec<Vec<f64>> {
    let g = &op.grid;
    let m = op.precond.m;
    let lo = op.precond.lo;
    let h = g.spacing();
    let e: Vec<Vec<f64>> = (0..3).map(|a| axis_eigs(m[a], h[a])).collect();
    let mut modes: Vec<(f64, [usize; 3])> = Vec::new();
    let cap = (block + 2).min(m[0]).max(1);
    for a in 1..=cap.min(m[0]) {
        for b in 1..=(block + 2).min(m[1]) {
            for c in 1..=(block + 2).min(m[2]) {
                modes.push((e[0][a - 1] + e[1][b - 1] + e[2][c - 1], [a, b, c]));
            }
        }
    }
    modes.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    modes
        .iter()
        .take(block)
        .enumerate()
        .map(|(t, (_, jm))| {
            let mut v = vec![0.0; g.len()];
            for (idx, slot) in v.iter_mut().enumerate() {
                if !op.mask[idx] {
                    continue;
                }
                let c = g.coords(idx);
                let mut s = 1.0;
                for a in 0..3 {
                    let i = (c[a] - lo[a] + 1) as f64;
                    s *= (PI * jm[a] as f64 * i / (m[a] + 1) as f64).sin();
                }
                let wobble = 1e-3 * (((idx * 7919 + t * 104729) % 1000) as f64 / 1000.0 - 0.5);
                *slot = s + wobble;
            }
            v
        })
        .collect()
}

/// `⟨f1 − f2, v_m⟩_{L²(D)}` for each eigenpair.
pub fn eigen_residual_check(f1: &FieldOnGrid, f2: &FieldOnGrid, pairs: &[EigenPair]) -> Result<Vec<f64>> {
    f1.ensure_same_grid(f2.grid())?;
    let vol = f1.grid().voxel_volume();
    let diff: Vec<f64> = f1.values().iter().zip(f2.values()).map(|(a, b)| (a - b).re).collect();
    pairs
        .iter()
        .map(|p| {
            p.v.ensure_same_grid(f1.grid())?;
            Ok(diff.iter().zip(p.v.values()).map(|(d, v)| d * v.re).sum::<f64>() * vol)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dst_matches_its_definition() {
        let mut planner = FftPlanner::new();
        let d = Dst1::new(5, &mut planner);
        let x = [0.3, -1.0, 2.0, 0.5, 0.7];
        let mut line = x.to_vec();
        let mut buf = vec![Complex64::new(0.0, 0.0); 12];
        d.apply(&mut line, &mut buf);
        for j in 1..=5 {
            let s: f64 = (1..=5).map(|i| x[i - 1] * (PI * (i * j) as f64 / 6.0).sin()).sum();
            assert!((line[j - 1] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn box_poisson_inverts_the_stencil() {
        let g = GridSpec::new([0.0; 3], [1.0, 1.2, 0.9], [9, 10, 8]).unwrap();
        let mask = g.interior_mask(2);
        let zero = vec![0.0; g.len()];
        let h = g.spacing();
        let (lo, hi) = ([2, 2, 2], [6, 7, 5]);
        let op = MaskedOperator { grid: g, mask: &mask, potential: &zero, inv_h2: [1.0 / (h[0] * h[0]), 1.0 / (h[1] * h[1]), 1.0 / (h[2] * h[2])], precond: BoxPoisson::new(lo, hi, h) };
        let b: Vec<f64> = (0..g.len()).map(|i| if mask[i] { ((i * 37) % 11) as f64 - 5.0 } else { 0.0 }).collect();
        let x = op.precond.solve(&g, &mask, &b);
        let ax = op.apply(&x);
        for i in 0..g.len() {
            assert!((ax[i] - b[i]).abs() < 1e-9 * 1e3, "{} vs {}", ax[i], b[i]);
        }
    }

    #[test]
    fn unit_cube_lowest_mode_is_near_three_pi_squared() {
        let g = GridSpec::cube_with_spacing(1.0 / 33.0, 36).unwrap();
        let mask = g.domain_mask();
        let pairs = dirichlet_eigenpairs(&vec![0.0; g.len()], &g, &mask, 4).unwrap();
        let exact = 3.0 * PI * PI;
        assert!((pairs[0].lambda - exact).abs() / exact < 0.02, "{}", pairs[0].lambda);
        // Next three modes are degenerate at 6π².
        for p in &pairs[1..] {
            assert!((p.lambda / pairs[0].lambda - 2.0).abs() < 0.01);
        }
    }

    #[test]
    fn pairs_are_orthonormal_ordered_and_vanish_off_the_domain() {
        let g = GridSpec::cube(0.5, 14).unwrap();
        let mask = g.domain_mask();
        let v: Vec<f64> = g.points().map(|x| 5.0 * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) * 20.0).exp()).collect();
        let pairs = dirichlet_eigenpairs(&v, &g, &mask, 6).unwrap();
        let vol = g.voxel_volume();
        for (a, pa) in pairs.iter().enumerate() {
            for (b, pb) in pairs.iter().enumerate() {
                let ip: f64 = pa.v.values().iter().zip(pb.v.values()).map(|(x, y)| x.re * y.re).sum::<f64>() * vol;
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-8, "<{a},{b}> = {ip}");
            }
            for (i, x) in pa.v.values().iter().enumerate() {
                if !mask[i] {
                    assert_eq!(x.re, 0.0);
                }
            }
        }
        assert!(pairs.windows(2).all(|w| w[0].lambda <= w[1].lambda));
        let f = pairs[0].v.clone();
        let zero = FieldOnGrid::from_real(g, &vec![0.0; g.len()]).unwrap();
        let proj = eigen_residual_check(&f, &zero, &pairs).unwrap();
        assert!((proj[0] - 1.0).abs() < 1e-8);
        assert!(proj[1..].iter().all(|p| p.abs() < 1e-8));
        assert!(eigen_residual_check(&f, &f, &pairs).unwrap().iter().all(|p| *p == 0.0));
    }

    #[test]
    fn large_potential_is_refused() {
        let g = GridSpec::cube(0.5, 10).unwrap();
        let v = vec![1e4; g.len()];
        assert!(matches!(dirichlet_eigenpairs(&v, &g, &g.domain_mask(), 1), Err(Error::SmallnessGate { .. })));
    }
}
