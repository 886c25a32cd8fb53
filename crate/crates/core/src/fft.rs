//! Row-major n-dimensional FFT on cubic periodic grids, built from rustfft 1-D plans.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward and inverse transforms for an `n^d` grid. Neither direction is
/// normalized; callers divide by `n^d` where the convention needs it.
#[derive(Clone)]
pub struct FftNd {
    n: usize,
    d: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("n", &self.n).field("d", &self.d).finish()
    }
}

impl FftNd {
    pub fn new(n: usize, d: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            d,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inverse);
    }

    fn apply(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "buffer does not match grid size");
        let n = self.n;
        // last axis is contiguous
        plan.process(data);
        if self.d == 1 {
            return;
        }
        let mut line = vec![Complex64::default(); n];
        for axis in 0..self.d - 1 {
            let stride = n.pow((self.d - 1 - axis) as u32);
            let block = stride * n;
            for start in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (k, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + k * stride];
                    }
                    plan.process(&mut line);
                    for (k, value) in line.iter().enumerate() {
                        data[base + k * stride] = *value;
                    }
                }
            }
        }
    }
}

/// Signed frequency index of DFT bin `k` on an `n`-point axis.
pub fn signed_index(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Splits a flat row-major index into per-axis indices.
pub fn unravel(mut flat: usize, n: usize, d: usize, out: &mut [usize]) {
    for axis in (0..d).rev() {
        out[axis] = flat % n;
        flat /= n;
    }
}

/// Flat index of the point `-k` (mod n) on every axis.
pub fn negated_index(flat: usize, n: usize, d: usize) -> usize {
    let mut idx = [0usize; 3];
    unravel(flat, n, d, &mut idx[..d]);
    idx[..d]
        .iter()
        .fold(0, |acc, &k| acc * n + (n - k) % n)
}
