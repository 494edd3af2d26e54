//! Thin wrapper over `rustfft` for real sequences on uniform periodic grids.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub(crate) struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Spectral({})", self.n)
    }
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Spectral {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// Signed frequency index of bin `m`, in `[-n/2, n/2)`.
    pub fn signed_index(&self, m: usize) -> i64 {
        let n = self.n as i64;
        let m = m as i64;
        if m < (n + 1) / 2 {
            m
        } else {
            m - n
        }
    }

    /// Angular wavenumber of bin `m` for grid spacing `h`.
    pub fn wavenumber(&self, m: usize, h: f64) -> f64 {
        2.0 * std::f64::consts::PI * self.signed_index(m) as f64 / (self.n as f64 * h)
    }

    pub fn is_nyquist(&self, m: usize) -> bool {
        self.n.is_multiple_of(2) && m == self.n / 2
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
    }

    /// Normalized inverse transform.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inv.process(buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|z| *z *= s);
    }
}
