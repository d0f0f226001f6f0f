//! Non-local means denoising of single images and eigen-image sets.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::spectral::mirror_index;
use crate::subspace::EigenImageSet;

pub const DEFAULT_PATCH_SIZE: usize = 7;
pub const DEFAULT_SEARCH_WINDOW: usize = 21;
/// Default `h / sigma` on the mean-squared patch distance scale. This is
/// `0.55 · patch_size` on the scale of the patch L2 norm.
pub const DEFAULT_STRENGTH: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchDenoiseParams {
    pub patch_size: usize,
    pub search_window: usize,
    /// `h` as a multiple of `sigma`; `None` means [`DEFAULT_STRENGTH`].
    pub strength: Option<f64>,
    /// Noise standard deviation of the image.
    pub sigma: f64,
}

impl Default for PatchDenoiseParams {
    fn default() -> Self {
        Self {
            patch_size: DEFAULT_PATCH_SIZE,
            search_window: DEFAULT_SEARCH_WINDOW,
            strength: None,
            sigma: 0.0,
        }
    }
}

impl PatchDenoiseParams {
    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    pub fn h(&self) -> f64 {
        self.strength.unwrap_or(DEFAULT_STRENGTH) * self.sigma
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size.is_multiple_of(2) || self.search_window.is_multiple_of(2) {
            return Err(validation(format!(
                "patch ({}) and search window ({}) sizes must be odd",
                self.patch_size, self.search_window
            )));
        }
        if self.search_window <= self.patch_size {
            return Err(validation(format!(
                "search window {} must exceed patch size {}",
                self.search_window, self.patch_size
            )));
        }
        if let Some(s) = self.strength {
            if !(s > 0.0) || !s.is_finite() {
                return Err(validation(format!("filtering strength must be positive, got {s}")));
            }
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(validation(format!("sigma must be finite and non-negative, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Non-local means with weights `exp(−max(d² − 2σ², 0) / h²)`, where `d²` is
/// the mean squared difference of two patches. Borders are reflective.
/// `sigma = 0` returns the input.
pub fn patch_denoise(image: ArrayView2<'_, f64>, params: &PatchDenoiseParams) -> Result<Array2<f64>> {
    params.validate()?;
    let (ny, nx) = image.dim();
    if params.sigma == 0.0 || image.is_empty() {
        return Ok(image.to_owned());
    }
    let pr = (params.patch_size / 2) as isize;
    let wr = (params.search_window / 2) as isize;
    let margin = pr + wr;
    let (py, px) = (ny + 2 * margin as usize, nx + 2 * margin as usize);
    let padded = Array2::from_shape_fn((py, px), |(r, c)| {
        image[[
            mirror_index(r as isize - margin, ny),
            mirror_index(c as isize - margin, nx),
        ]]
    });
    let h2 = params.h().powi(2);
    let bias = 2.0 * params.sigma * params.sigma;
    let patch_area = (params.patch_size * params.patch_size) as f64;

    // One chunk per offset row; chunks are summed in order, so the result does
    // not depend on how rayon schedules them.
    let partials: Vec<(Array2<f64>, Array2<f64>)> = (-wr..=wr)
        .into_par_iter()
        .map(|dy| {
            let mut num = Array2::<f64>::zeros((ny, nx));
            let mut den = Array2::<f64>::zeros((ny, nx));
            let mut integral = Array2::<f64>::zeros((py + 1, px + 1));
            for dx in -wr..=wr {
                // Integral image of the squared difference between the padded
                // image and its copy shifted by (dy, dx), over the valid area.
                for r in 0..py {
                    let mut row_sum = 0.0;
                    for c in 0..px {
                        let (sr, sc) = (r as isize + dy, c as isize + dx);
                        let d = if sr >= 0 && sc >= 0 && (sr as usize) < py && (sc as usize) < px {
                            padded[[r, c]] - padded[[sr as usize, sc as usize]]
                        } else {
                            0.0
                        };
                        row_sum += d * d;
                        integral[[r + 1, c + 1]] = integral[[r, c + 1]] + row_sum;
                    }
                }
                for r in 0..ny {
                    let top = (r as isize + margin - pr) as usize;
                    let bottom = top + params.patch_size;
                    for c in 0..nx {
                        let left = (c as isize + margin - pr) as usize;
                        let right = left + params.patch_size;
                        let ssd = integral[[bottom, right]] - integral[[top, right]] - integral[[bottom, left]]
                            + integral[[top, left]];
                        let d2 = ssd / patch_area;
                        let w = (-(d2 - bias).max(0.0) / h2).exp();
                        let neighbour = padded[[
                            (r as isize + margin + dy) as usize,
                            (c as isize + margin + dx) as usize,
                        ]];
                        num[[r, c]] += w * neighbour;
                        den[[r, c]] += w;
                    }
                }
            }
            (num, den)
        })
        .collect();

    let mut num = Array2::<f64>::zeros((ny, nx));
    let mut den = Array2::<f64>::zeros((ny, nx));
    for (n, d) in &partials {
        num += n;
        den += d;
    }
    Ok(num / den)
}

/// Denoises each eigen-image with its own noise level; zero leaves it untouched.
pub fn denoise_eigen_images(
    eigen: &EigenImageSet,
    sigmas: &[f64],
    params: &PatchDenoiseParams,
) -> Result<EigenImageSet> {
    if sigmas.len() != eigen.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} noise levels for {} eigen-images",
            sigmas.len(),
            eigen.len()
        )));
    }
    params.validate()?;
    let images = (0..eigen.len())
        .into_par_iter()
        .map(|i| patch_denoise(eigen.image(i), &params.with_sigma(sigmas[i])))
        .collect::<Result<Vec<_>>>()?;
    eigen.with_images(&images)
}
