//! Separable 3-D FFT on x-fastest complex arrays.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft3 {
    dims: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("dims", &self.dims).finish()
    }
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = dims.map(|n| planner.plan_fft_forward(n));
        let inverse = dims.map(|n| planner.plan_fft_inverse(n));
        Fft3 {
            dims,
            forward,
            inverse,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalised forward transform (`e^{-2πi jm/n}`).
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Unnormalised inverse transform (`e^{+2πi jm/n}`).
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [n0, n1, n2] = self.dims;
        assert_eq!(data.len(), n0 * n1 * n2, "buffer does not match FFT dims");
        let scratch_len = plans
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];

        // axis 0: rows are contiguous
        plans[0].process_with_scratch(data, &mut scratch);

        // axis 1: gather each plane's columns into contiguous lines
        let mut lines = vec![Complex64::new(0.0, 0.0); n0 * n1];
        for k in 0..n2 {
            let plane = &mut data[k * n0 * n1..(k + 1) * n0 * n1];
            for j in 0..n1 {
                for i in 0..n0 {
                    lines[i * n1 + j] = plane[i + n0 * j];
                }
            }
            plans[1].process_with_scratch(&mut lines, &mut scratch);
            for j in 0..n1 {
                for i in 0..n0 {
                    plane[i + n0 * j] = lines[i * n1 + j];
                }
            }
        }

        // axis 2: stride n0*n1
        let stride = n0 * n1;
        let mut lines = vec![Complex64::new(0.0, 0.0); n2 * n0];
        for j in 0..n1 {
            for k in 0..n2 {
                let row = &data[k * stride + j * n0..k * stride + j * n0 + n0];
                for (i, v) in row.iter().enumerate() {
                    lines[i * n2 + k] = *v;
                }
            }
            plans[2].process_with_scratch(&mut lines, &mut scratch);
            for k in 0..n2 {
                let row = &mut data[k * stride + j * n0..k * stride + j * n0 + n0];
                for (i, v) in row.iter_mut().enumerate() {
                    *v = lines[i * n2 + k];
                }
            }
        }
    }
}

/// Signed DFT index for position `m` of an `n`-point transform.
#[inline]
pub fn signed_index(m: usize, n: usize) -> i64 {
    if m < n.div_ceil(2) {
        m as i64
    } else {
        m as i64 - n as i64
    }
}
