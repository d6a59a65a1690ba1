//! Unitary 2D discrete Fourier transform on single channel planes.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse plans for one `height × width` plane, scaled by
/// `1/sqrt(H·W)` in both directions so Parseval holds with constant 1.
#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn forward(&self, plane: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(plane.len(), self.height * self.width);
        let mut buf: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &*self.row_fwd, &*self.col_fwd);
        buf
    }

    /// Real part of the inverse transform.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spectrum, &*self.row_inv, &*self.col_inv);
        spectrum.into_iter().map(|z| z.re).collect()
    }

    fn transform(&self, buf: &mut [Complex64], rows: &dyn Fft<f64>, cols: &dyn Fft<f64>) {
        let (h, w) = (self.height, self.width);
        rows.process(buf);
        let mut t = transpose(buf, h, w);
        cols.process(&mut t);
        let back = transpose(&t, w, h);
        let scale = 1.0 / ((h * w) as f64).sqrt();
        for (dst, src) in buf.iter_mut().zip(back) {
            *dst = src * scale;
        }
    }
}

fn transpose(buf: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = buf[y * w + x];
        }
    }
    out
}

/// Signed DFT index in `fftfreq` order.
fn signed_index(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Radial frequency norm `‖ω‖` of every lattice cell, in radians per sample,
/// laid out like the output of [`Fft2::forward`].
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    height: usize,
    width: usize,
    norms: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(height: usize, width: usize) -> Self {
        let mut norms = Vec::with_capacity(height * width);
        for y in 0..height {
            let wy = 2.0 * PI * signed_index(y, height) as f64 / height as f64;
            for x in 0..width {
                let wx = 2.0 * PI * signed_index(x, width) as f64 / width as f64;
                norms.push(wy.hypot(wx));
            }
        }
        Self {
            height,
            width,
            norms,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Raw norms; the DC cell is 0.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Smallest nonzero lattice norm, `2π / max(H, W)`.
    pub fn min_nonzero(&self) -> f64 {
        2.0 * PI / self.height.max(self.width) as f64
    }

    pub fn max_norm(&self) -> f64 {
        self.norms.iter().copied().fold(0.0, f64::max)
    }

    /// Norm used where a strictly positive value is required: DC gets
    /// [`min_nonzero`](Self::min_nonzero).
    pub fn effective_norm(&self, index: usize) -> f64 {
        if index == 0 {
            self.min_nonzero()
        } else {
            self.norms[index]
        }
    }
}
