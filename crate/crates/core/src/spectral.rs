//! Diagonal Fourier multipliers on the periodic grid.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Signed frequency of DFT index `k` on `n` points.
pub fn signed_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Forward/inverse plan plus scratch for real fields.
pub struct Multiplier {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for Multiplier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Multiplier").field("n", &self.n).finish()
    }
}

impl Clone for Multiplier {
    fn clone(&self) -> Self {
        Self::new(self.n)
    }
}

impl Multiplier {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Self {
            n,
            fwd,
            inv,
            buf: vec![Complex64::new(0.0, 0.0); n],
            scratch: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// `values <- F^{-1}(symbol * F(values))` for a real even symbol.
    ///
    /// The first entry is subtracted before transforming and added back
    /// times `symbol[0]`, so constants pass through bit-exactly whenever
    /// `symbol[0] == 1`.
    pub fn apply(&mut self, values: &mut [f64], symbol: &[f64]) {
        assert_eq!(values.len(), self.n);
        assert_eq!(symbol.len(), self.n);
        let shift = values[0];
        if values.iter().all(|&v| v == shift) {
            let out = shift * symbol[0];
            values.iter_mut().for_each(|v| *v = out);
            return;
        }
        for (b, &v) in self.buf.iter_mut().zip(values.iter()) {
            *b = Complex64::new(v - shift, 0.0);
        }
        self.fwd
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        let norm = 1.0 / self.n as f64;
        for (b, &m) in self.buf.iter_mut().zip(symbol) {
            *b *= m * norm;
        }
        self.inv
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        let base = shift * symbol[0];
        for (v, b) in values.iter_mut().zip(&self.buf) {
            *v = base + b.re;
        }
    }
}
