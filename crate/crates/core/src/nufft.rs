//! Two-dimensional type-1 non-uniform FFT by Gaussian gridding.
//!
//! Computes `F(p, q) = Σ_k c_k exp(−i(2π p x_k / Lx + 2π q y_k / Ly))` for
//! `p ∈ [−Nx/2, Nx/2)`, `q ∈ [−Ny/2, Ny/2)`. Coordinates are taken modulo
//! the periods.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const OVERSAMPLE: usize = 2;
const SPREAD: usize = 10;

struct Dim {
    modes: usize,
    fine: usize,
    period: f64,
    tau: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl Dim {
    fn new(modes: usize, period: f64, planner: &mut FftPlanner<f64>) -> Self {
        let fine = (OVERSAMPLE * modes).max(2 * SPREAD + 2);
        let n = modes.max(1) as f64;
        let r = fine as f64 / n;
        let tau = PI * SPREAD as f64 / (n * n * r * (r - 0.5));
        Self {
            modes,
            fine,
            period,
            tau,
            fft: planner.plan_fft_forward(fine),
        }
    }

    /// Fine-grid start index and kernel weights for coordinate `x`.
    fn weights(&self, x: f64, out: &mut [f64; 2 * SPREAD]) -> i64 {
        let h = TAU / self.fine as f64;
        let theta = (TAU * x / self.period).rem_euclid(TAU);
        let m0 = (theta / h).floor() as i64;
        let start = m0 - SPREAD as i64 + 1;
        for (j, w) in out.iter_mut().enumerate() {
            let d = theta - (start + j as i64) as f64 * h;
            *w = (-d * d / (4.0 * self.tau)).exp();
        }
        start
    }

    /// Deconvolution factor for mode `p` including the `1/M` FFT scale.
    fn correction(&self, p: i64) -> f64 {
        let p = p as f64;
        (PI / self.tau).sqrt() * (p * p * self.tau).exp() / self.fine as f64
    }
}

/// Reusable plan for a fixed mode count and period.
pub(crate) struct Nufft2 {
    x: Dim,
    y: Dim,
}

impl Nufft2 {
    pub(crate) fn new(modes: (usize, usize), periods: (f64, f64)) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            x: Dim::new(modes.0, periods.0, &mut planner),
            y: Dim::new(modes.1, periods.1, &mut planner),
        }
    }

    /// Output is row-major `[p + Nx/2][q + Ny/2]`.
    pub(crate) fn type1(&self, xs: &[f64], ys: &[f64], cs: &[f64]) -> Vec<Complex64> {
        let (mx, my) = (self.x.fine, self.y.fine);
        let mut grid = vec![Complex64::new(0.0, 0.0); mx * my];
        let mut wx = [0.0; 2 * SPREAD];
        let mut wy = [0.0; 2 * SPREAD];
        let mut iy = [0usize; 2 * SPREAD];
        for k in 0..cs.len() {
            if cs[k] == 0.0 {
                continue;
            }
            let sx = self.x.weights(xs[k], &mut wx);
            let sy = self.y.weights(ys[k], &mut wy);
            for (j, slot) in iy.iter_mut().enumerate() {
                *slot = (sy + j as i64).rem_euclid(my as i64) as usize;
            }
            for (i, &a) in wx.iter().enumerate() {
                let row = (sx + i as i64).rem_euclid(mx as i64) as usize * my;
                let a = a * cs[k];
                for j in 0..2 * SPREAD {
                    grid[row + iy[j]].re += a * wy[j];
                }
            }
        }

        for row in grid.chunks_exact_mut(my) {
            self.y.fft.process(row);
        }
        let (nx, ny) = (self.x.modes, self.y.modes);
        let mut out = vec![Complex64::new(0.0, 0.0); nx * ny];
        let mut col = vec![Complex64::new(0.0, 0.0); mx];
        let half_x = (nx / 2) as i64;
        let half_y = (ny / 2) as i64;
        for qi in 0..ny {
            let q = qi as i64 - half_y;
            let qc = q.rem_euclid(my as i64) as usize;
            for (m, c) in col.iter_mut().enumerate() {
                *c = grid[m * my + qc];
            }
            self.x.fft.process(&mut col);
            let cy = self.y.correction(q);
            for pi in 0..nx {
                let p = pi as i64 - half_x;
                let pc = p.rem_euclid(mx as i64) as usize;
                out[pi * ny + qi] = col[pc] * (cy * self.x.correction(p));
            }
        }
        out
    }
}
