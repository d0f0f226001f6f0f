//! Non-blind deconvolution: Richardson–Lucy, Wiener and a hyper-Laplacian
//! prior solved by half-quadratic splitting. All solvers use the reflective
//! boundary model of [`crate::spectral::MirrorOperator`].

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beam::{BeamGeometry, Psf};
use crate::cube::HyperCube;
use crate::error::{validation, Error, Result};
use crate::forward::{band_psfs, stack_bands};
use crate::spectral::MirrorOperator;
use crate::subspace::{EigenImageSet, NoiseEstimate};

/// Denominator guard for the RL ratio and the Wiener filter.
pub const DIVISION_GUARD: f64 = 1e-12;

pub const DEFAULT_RL_ITERATIONS: usize = 20;
pub const DEFAULT_HL_OUTER_ITERATIONS: usize = 4;
pub const DEFAULT_HL_LAMBDA: f64 = 5e-4;
pub const DEFAULT_HL_ALPHA: f64 = 2.0 / 3.0;

/// Growth factor of the splitting weight between outer iterations.
const BETA_GROWTH: f64 = 4.0;
/// Resolution of the shrinkage lookup table.
const LUT_SIZE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DeblurMethod {
    RichardsonLucy {
        iterations: usize,
    },
    /// `nsr: None` picks `sigma² / var(image)` per image.
    Wiener {
        #[serde(default)]
        nsr: Option<f64>,
    },
    HyperLaplacian {
        lambda_reg: f64,
        alpha: f64,
        outer_iterations: usize,
    },
}

impl Default for DeblurMethod {
    fn default() -> Self {
        DeblurMethod::RichardsonLucy { iterations: DEFAULT_RL_ITERATIONS }
    }
}

impl DeblurMethod {
    pub fn hyper_laplacian_default() -> Self {
        DeblurMethod::HyperLaplacian {
            lambda_reg: DEFAULT_HL_LAMBDA,
            alpha: DEFAULT_HL_ALPHA,
            outer_iterations: DEFAULT_HL_OUTER_ITERATIONS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DeblurMethod::RichardsonLucy { iterations } if iterations < 1 => {
                Err(validation("Richardson-Lucy needs at least one iteration"))
            }
            DeblurMethod::Wiener { nsr: Some(nsr) } if !(nsr >= 0.0) || !nsr.is_finite() => {
                Err(validation(format!("Wiener nsr must be finite and non-negative, got {nsr}")))
            }
            DeblurMethod::HyperLaplacian { lambda_reg, alpha, outer_iterations } => {
                if !(lambda_reg > 0.0) || !lambda_reg.is_finite() {
                    return Err(validation(format!("lambda_reg must be positive, got {lambda_reg}")));
                }
                if !is_supported_alpha(alpha) {
                    return Err(validation(format!("alpha must be 1/2 or 2/3, got {alpha}")));
                }
                if outer_iterations < 1 {
                    return Err(validation("hyper-Laplacian needs at least one outer iteration"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn is_supported_alpha(alpha: f64) -> bool {
    (alpha - 0.5).abs() < 1e-9 || (alpha - 2.0 / 3.0).abs() < 1e-9
}

/// Richardson–Lucy deconvolution from `x₀ = y`. Inputs with negative values
/// are shifted to minimum 0 for the iteration and shifted back afterwards.
pub fn richardson_lucy(image: ArrayView2<'_, f64>, psf: &Psf, iterations: usize) -> Array2<f64> {
    let min = image.iter().copied().fold(f64::INFINITY, f64::min);
    if min < 0.0 {
        let shifted = image.mapv(|v| v - min);
        let mut out = rl_nonnegative(shifted.view(), psf, iterations);
        out.mapv_inplace(|v| v + min);
        return out;
    }
    rl_nonnegative(image, psf, iterations)
}

fn rl_nonnegative(y: ArrayView2<'_, f64>, psf: &Psf, iterations: usize) -> Array2<f64> {
    if psf.is_delta() || y.is_empty() {
        return y.to_owned();
    }
    let (ny, nx) = y.dim();
    // The kernel is symmetric, so the adjoint (flipped-kernel) blur is the same operator.
    let op = MirrorOperator::new(ny, nx, psf.kernel().view());
    let mut x = y.to_owned();
    for _ in 0..iterations {
        let mut ratio = op.apply(x.view());
        ndarray::Zip::from(&mut ratio)
            .and(&y)
            .for_each(|r, &yv| *r = yv / r.max(DIVISION_GUARD));
        let correction = op.apply(ratio.view());
        ndarray::Zip::from(&mut x)
            .and(&correction)
            .for_each(|xv, &c| *xv = (*xv * c).max(0.0));
    }
    x
}

/// Poisson log-likelihood (up to a constant) of `y` given the blurred estimate.
pub fn poisson_log_likelihood(y: ArrayView2<'_, f64>, blurred: ArrayView2<'_, f64>) -> f64 {
    y.iter()
        .zip(blurred.iter())
        .map(|(&yv, &m)| {
            let m = m.max(DIVISION_GUARD);
            yv * m.ln() - m
        })
        .sum()
}

/// Wiener deconvolution `H / (H² + nsr)` on the mirrored extension.
pub fn wiener(image: ArrayView2<'_, f64>, psf: &Psf, nsr: f64) -> Array2<f64> {
    let (ny, nx) = image.dim();
    if image.is_empty() {
        return image.to_owned();
    }
    if psf.is_delta() {
        return image.mapv(|v| v / (1.0 + nsr));
    }
    let op = MirrorOperator::new(ny, nx, psf.kernel().view());
    op.filter(image, |h| h / (h * h + nsr).max(DIVISION_GUARD))
}

/// Default Wiener noise-to-signal ratio `sigma² / var(image)`.
pub fn default_nsr(image: ArrayView2<'_, f64>, sigma: f64) -> f64 {
    let n = image.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = image.sum() / n;
    let var = image.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        sigma * sigma / var
    } else {
        0.0
    }
}

/// Deconvolution with a hyper-Laplacian gradient prior,
/// `min ½‖k⊛x − y‖² + λ Σ |∇x|^α`, by half-quadratic splitting with the
/// splitting weight `β = 4^j` at outer iteration `j`.
pub fn hyper_laplacian(
    image: ArrayView2<'_, f64>,
    psf: &Psf,
    lambda_reg: f64,
    alpha: f64,
    outer_iterations: usize,
) -> Array2<f64> {
    let (ny, nx) = image.dim();
    if image.is_empty() {
        return image.to_owned();
    }
    let op = MirrorOperator::new(ny, nx, psf.kernel().view());
    let (ey, ex) = (2 * ny, 2 * nx);
    let fft = op.fft();
    let k = op.transfer();
    let y_hat = op.extended_spectrum(image);

    let dx_hat: Vec<Complex64> = (0..ey * ex)
        .map(|i| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (i % ex) as f64 / ex as f64) - 1.0)
        .collect();
    let dy_hat: Vec<Complex64> = (0..ey * ex)
        .map(|i| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (i / ex) as f64 / ey as f64) - 1.0)
        .collect();
    let ky: Vec<Complex64> = y_hat.iter().zip(k).map(|(v, &h)| v * h).collect();

    let mut x_hat = y_hat.clone();
    let mut beta = 1.0;
    for _ in 0..outer_iterations {
        let mut x = x_hat.clone();
        fft.inverse(&mut x);
        let (mut wx, mut wy) = gradients(&x, ey, ex);
        let vmax = wx.iter().chain(&wy).fold(0.0f64, |m, v| m.max(v.re.abs()));
        let table = ShrinkageTable::new(alpha, beta, vmax);
        for v in wx.iter_mut().chain(wy.iter_mut()) {
            *v = Complex64::new(table.apply(v.re), 0.0);
        }
        fft.forward(&mut wx);
        fft.forward(&mut wy);
        let weight = lambda_reg * beta;
        x_hat = (0..ey * ex)
            .map(|i| {
                let num = ky[i] + weight * (dx_hat[i].conj() * wx[i] + dy_hat[i].conj() * wy[i]);
                let den = k[i] * k[i] + weight * (dx_hat[i].norm_sqr() + dy_hat[i].norm_sqr());
                num / den.max(DIVISION_GUARD)
            })
            .collect();
        beta *= BETA_GROWTH;
    }
    op.crop_inverse(x_hat)
}

/// Circular forward differences of a row-major `rows × cols` field.
fn gradients(x: &[Complex64], rows: usize, cols: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut gx = vec![Complex64::new(0.0, 0.0); x.len()];
    let mut gy = vec![Complex64::new(0.0, 0.0); x.len()];
    for r in 0..rows {
        let rn = (r + 1) % rows;
        for c in 0..cols {
            let cn = (c + 1) % cols;
            let here = x[r * cols + c].re;
            gx[r * cols + c].re = x[r * cols + cn].re - here;
            gy[r * cols + c].re = x[rn * cols + c].re - here;
        }
    }
    (gx, gy)
}

/// Minimiser of `|w|^α + β/2 (w − v)²` for `v ≥ 0`.
pub fn shrink_exact(v: f64, alpha: f64, beta: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let w_m = (alpha * (1.0 - alpha) / beta).powf(1.0 / (2.0 - alpha));
    if w_m >= v {
        return 0.0;
    }
    let g = |w: f64| alpha * w.powf(alpha - 1.0) + beta * (w - v);
    if g(w_m) > 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (w_m, v);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * v {
            break;
        }
    }
    let w = 0.5 * (lo + hi);
    let f = |w: f64| w.powf(alpha) + 0.5 * beta * (w - v).powi(2);
    if f(w) < f(0.0) {
        w
    } else {
        0.0
    }
}

/// Shrinkage values tabulated on a uniform grid over `[0, vmax]`.
struct ShrinkageTable {
    values: Vec<f64>,
    spacing: f64,
}

impl ShrinkageTable {
    fn new(alpha: f64, beta: f64, vmax: f64) -> Self {
        let spacing = if vmax > 0.0 { vmax / (LUT_SIZE - 1) as f64 } else { 1.0 };
        let values = (0..LUT_SIZE)
            .map(|i| shrink_exact(i as f64 * spacing, alpha, beta))
            .collect();
        Self { values, spacing }
    }

    fn apply(&self, v: f64) -> f64 {
        let t = (v.abs() / self.spacing).min((LUT_SIZE - 1) as f64);
        let i = (t.floor() as usize).min(LUT_SIZE - 2);
        let (a, b) = (self.values[i], self.values[i + 1]);
        // Interpolating across the jump to zero would invent small values.
        let w = if a == 0.0 || b == 0.0 {
            if t - (i as f64) < 0.5 { a } else { b }
        } else {
            a + (t - i as f64) * (b - a)
        };
        w.copysign(v)
    }
}

/// Runs `method` on one image. `sigma` feeds the default Wiener nsr.
pub fn deblur_image(image: ArrayView2<'_, f64>, psf: &Psf, method: &DeblurMethod, sigma: f64) -> Array2<f64> {
    match *method {
        DeblurMethod::RichardsonLucy { iterations } => richardson_lucy(image, psf, iterations),
        DeblurMethod::Wiener { nsr } => {
            let nsr = nsr.unwrap_or_else(|| default_nsr(image, sigma));
            wiener(image, psf, nsr)
        }
        DeblurMethod::HyperLaplacian { lambda_reg, alpha, outer_iterations } => {
            hyper_laplacian(image, psf, lambda_reg, alpha, outer_iterations)
        }
    }
}

/// Deconvolves each eigen-image with its own PSF. Delta PSFs leave the
/// component untouched. RL shifts each image to minimum 0 and back; the
/// default Wiener nsr assumes the unit noise of whitened components.
pub fn deblur_eigen_images(eigen: &EigenImageSet, psfs: &[Psf], method: &DeblurMethod) -> Result<EigenImageSet> {
    method.validate()?;
    if psfs.len() != eigen.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} PSFs for {} eigen-images",
            psfs.len(),
            eigen.len()
        )));
    }
    let images: Vec<Array2<f64>> = (0..eigen.len())
        .into_par_iter()
        .map(|i| {
            let img = eigen.image(i);
            let psf = &psfs[i];
            if psf.is_delta() {
                return img.to_owned();
            }
            match *method {
                DeblurMethod::RichardsonLucy { iterations } => {
                    let min = img.iter().copied().fold(f64::INFINITY, f64::min);
                    let shifted = img.mapv(|v| v - min);
                    let mut out = rl_nonnegative(shifted.view(), psf, iterations);
                    out.mapv_inplace(|v| v + min);
                    out
                }
                _ => deblur_image(img.view(), psf, method, 1.0),
            }
        })
        .collect();
    eigen.with_images(&images)
}

/// Band-by-band deconvolution with the beam PSF of every band.
pub fn deblur_bands(
    cube: &HyperCube,
    geom: &BeamGeometry,
    z: f64,
    method: &DeblurMethod,
    noise: Option<&NoiseEstimate>,
) -> Result<HyperCube> {
    method.validate()?;
    if let Some(n) = noise {
        if n.sigma_per_band.len() != cube.bands() {
            return Err(Error::DimensionMismatch(format!(
                "{} noise levels for {} bands",
                n.sigma_per_band.len(),
                cube.bands()
            )));
        }
    }
    if matches!(method, DeblurMethod::Wiener { nsr: None }) && noise.is_none() {
        return Err(validation("Wiener without an explicit nsr needs a noise estimate"));
    }
    let psfs = band_psfs(cube, geom, z)?;
    let bands: Vec<Array2<f64>> = (0..cube.bands())
        .into_par_iter()
        .map(|i| {
            let sigma = noise.map_or(0.0, |n| n.sigma_per_band[i]);
            let band = cube.data().index_axis(ndarray::Axis(0), i);
            deblur_image(band, &psfs[i], method, sigma)
        })
        .collect();
    cube.with_data(stack_bands(&bands))
}
