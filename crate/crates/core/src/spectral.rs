//! 2D FFTs and convolution with reflective (half-sample symmetric) borders.
//!
//! An `ny × nx` image mirrored across its borders is periodic with period
//! `2ny × 2nx`. Convolving that periodic extension with a kernel is a circular
//! convolution of the `2ny × 2nx` extension with the kernel wrapped onto the
//! same grid, so the operator is exact for kernels of any size. For the
//! symmetric kernels used here the transfer function is real and the operator
//! is self-adjoint.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Row-major 2D FFT of a fixed size.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform, normalised so `inverse(forward(x)) == x`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }

    fn run(&self, buf: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(buf.len(), self.rows * self.cols);
        row.process(buf);
        let mut t = transpose(buf, self.rows, self.cols);
        col.process(&mut t);
        let back = transpose(&t, self.cols, self.rows);
        buf.copy_from_slice(&back);
    }
}

fn transpose(buf: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); buf.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = buf[r * cols + c];
        }
    }
    out
}

/// Index into a length-`n` axis after half-sample symmetric reflection
/// (`… c b a | a b c … x y z | z y x …`), valid for any offset.
pub fn mirror_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Circular-convolution operator on the mirrored extension of an image.
#[derive(Clone)]
pub struct MirrorOperator {
    ny: usize,
    nx: usize,
    fft: Fft2,
    transfer: Vec<f64>,
}

impl MirrorOperator {
    /// Operator for an `ny × nx` image and an odd-sized, centred, symmetric kernel.
    pub fn new(ny: usize, nx: usize, kernel: ArrayView2<'_, f64>) -> Self {
        let (ey, ex) = (2 * ny, 2 * nx);
        let (ky, kx) = kernel.dim();
        let (cy, cx) = ((ky / 2) as isize, (kx / 2) as isize);
        let mut wrapped = vec![Complex64::new(0.0, 0.0); ey * ex];
        for ((r, c), &w) in kernel.indexed_iter() {
            let y = (r as isize - cy).rem_euclid(ey as isize) as usize;
            let x = (c as isize - cx).rem_euclid(ex as isize) as usize;
            wrapped[y * ex + x].re += w;
        }
        let fft = Fft2::new(ey, ex);
        fft.forward(&mut wrapped);
        let transfer = wrapped.iter().map(|v| v.re).collect();
        Self { ny, nx, fft, transfer }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    /// Real transfer function on the `2ny × 2nx` frequency grid (row-major).
    pub fn transfer(&self) -> &[f64] {
        &self.transfer
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// Spectrum of the mirrored extension of `image`.
    pub fn extended_spectrum(&self, image: ArrayView2<'_, f64>) -> Vec<Complex64> {
        let mut buf = mirror_extend(image);
        self.fft.forward(&mut buf);
        buf
    }

    /// Inverse-transforms an extended spectrum and crops the original domain.
    pub fn crop_inverse(&self, mut spectrum: Vec<Complex64>) -> Array2<f64> {
        self.fft.inverse(&mut spectrum);
        let ex = 2 * self.nx;
        Array2::from_shape_fn((self.ny, self.nx), |(r, c)| spectrum[r * ex + c].re)
    }

    /// Convolution with reflective borders.
    pub fn apply(&self, image: ArrayView2<'_, f64>) -> Array2<f64> {
        self.filter(image, |h| h)
    }

    /// Multiplies the spectrum of the mirrored image by `gain(H(ω))`.
    pub fn filter(&self, image: ArrayView2<'_, f64>, gain: impl Fn(f64) -> f64) -> Array2<f64> {
        assert_eq!(image.dim(), (self.ny, self.nx), "operator built for another size");
        let mut spec = self.extended_spectrum(image);
        for (v, &h) in spec.iter_mut().zip(&self.transfer) {
            *v *= gain(h);
        }
        self.crop_inverse(spec)
    }
}

/// Mirrors an `ny × nx` image into a `2ny × 2nx` complex buffer.
pub fn mirror_extend(image: ArrayView2<'_, f64>) -> Vec<Complex64> {
    let (ny, nx) = image.dim();
    let (ey, ex) = (2 * ny, 2 * nx);
    let mut out = Vec::with_capacity(ey * ex);
    for r in 0..ey {
        let sr = mirror_index(r as isize, ny);
        for c in 0..ex {
            let sc = mirror_index(c as isize, nx);
            out.push(Complex64::new(image[[sr, sc]], 0.0));
        }
    }
    out
}
