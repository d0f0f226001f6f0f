//! Gaussian-beam optics and the frequency-dependent blur kernel.
//!
//! The transverse intensity of the beam at depth `z` is
//! `I(r, z) = P / (π w(z)² / 2) · exp(−2 r² / w(z)²)` with
//! `w(z) = w0 · sqrt(1 + (z / z_R)²)`, `z_R = π w0² / λ` and the focused waist
//! `2 w0 = (4 / π) · λ · f_L / D`.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{config, validation, Error, Result};

/// Speed of light in mm·THz (λ in mm = c / f with f in THz).
pub const SPEED_OF_LIGHT_MM_THZ: f64 = 0.299_792_458;

/// Default kernel truncation radius, in multiples of the beam radius.
pub const DEFAULT_TRUNCATION: f64 = 3.0;

/// Largest kernel side accepted by [`Psf::gaussian`].
pub const MAX_KERNEL_SIDE: usize = 4096;

/// Focusing optics of the scanner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    /// Focal length `f_L` in mm.
    pub focal_length: f64,
    /// Aperture diameter `D` in mm.
    pub aperture_diameter: f64,
}

impl BeamGeometry {
    pub fn new(focal_length: f64, aperture_diameter: f64) -> Result<Self> {
        let g = Self { focal_length, aperture_diameter };
        g.validate()?;
        Ok(g)
    }

    /// Geometry with a given `f_L / D` ratio and a 1-inch aperture.
    pub fn from_f_number(f_number: f64) -> Result<Self> {
        Self::new(f_number * 25.4, 25.4)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length > 0.0 && self.aperture_diameter > 0.0)
            || !self.focal_length.is_finite()
            || !self.aperture_diameter.is_finite()
        {
            return Err(validation(format!("beam geometry must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn f_number(&self) -> f64 {
        self.focal_length / self.aperture_diameter
    }
}

impl Default for BeamGeometry {
    /// Two 1-inch mirrors with a 4-inch focal length.
    fn default() -> Self {
        Self { focal_length: 101.6, aperture_diameter: 25.4 }
    }
}

/// Wavelength, waist radius and Rayleigh length of one spectral component (all mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    pub wavelength: f64,
    pub waist_radius: f64,
    pub rayleigh_length: f64,
}

impl BeamParams {
    pub fn new(wavelength: f64, waist_radius: f64) -> Result<Self> {
        if !(wavelength > 0.0 && waist_radius > 0.0) || !wavelength.is_finite() || !waist_radius.is_finite() {
            return Err(validation(format!(
                "wavelength and waist must be positive (λ={wavelength}, w0={waist_radius})"
            )));
        }
        Ok(Self {
            wavelength,
            waist_radius,
            rayleigh_length: PI * waist_radius * waist_radius / wavelength,
        })
    }

    pub fn at_frequency(frequency_thz: f64, geom: &BeamGeometry) -> Result<Self> {
        geom.validate()?;
        let lambda = wavelength_from_frequency(frequency_thz)?;
        Self::new(lambda, beam_waist(lambda, geom))
    }
}

pub fn wavelength_from_frequency(frequency_thz: f64) -> Result<f64> {
    if !(frequency_thz > 0.0) || !frequency_thz.is_finite() {
        return Err(Error::Domain(format!("frequency must be positive, got {frequency_thz} THz")));
    }
    Ok(SPEED_OF_LIGHT_MM_THZ / frequency_thz)
}

/// Focused waist radius `w0 = (2/π) · λ · f_L / D`.
pub fn beam_waist(wavelength: f64, geom: &BeamGeometry) -> f64 {
    2.0 / PI * wavelength * geom.f_number()
}

/// Beam radius `w(z)`; even in `z`.
pub fn beam_radius(z: f64, params: &BeamParams) -> f64 {
    let t = z / params.rayleigh_length;
    params.waist_radius * (1.0 + t * t).sqrt()
}

/// Transverse intensity at distance `r` from the axis and depth `z`.
pub fn intensity(r: f64, z: f64, power: f64, params: &BeamParams) -> f64 {
    let w = beam_radius(z, params);
    power / (PI * w * w / 2.0) * (-2.0 * r * r / (w * w)).exp()
}

/// Discretised, normalised blur kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    kernel: Array2<f64>,
    step: f64,
    sigma: f64,
}

impl Psf {
    /// Samples `exp(−2 r² / w²)` at pixel centres on a `(2k+1)²` grid with
    /// `k = ceil(truncation · w / step)`, normalised to unit sum.
    /// `w = 0` yields the identity kernel.
    pub fn gaussian(beam_radius: f64, step: f64, truncation: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(config(format!("pixel step must be positive, got {step}")));
        }
        if !(truncation >= 2.0) || !truncation.is_finite() {
            return Err(config(format!("truncation must be at least 2 beam radii, got {truncation}")));
        }
        if !(beam_radius >= 0.0) || !beam_radius.is_finite() {
            return Err(validation(format!("beam radius must be non-negative, got {beam_radius}")));
        }
        if beam_radius == 0.0 {
            return Ok(Self::delta(step));
        }
        let half = (truncation * beam_radius / step).ceil();
        if 2.0 * half + 1.0 > MAX_KERNEL_SIDE as f64 {
            return Err(config(format!(
                "kernel side {} exceeds {MAX_KERNEL_SIDE} (step {step} mm too small for w = {beam_radius} mm)",
                2.0 * half + 1.0
            )));
        }
        let k = half as isize;
        let side = (2 * k + 1) as usize;
        let scale = -2.0 * step * step / (beam_radius * beam_radius);
        let mut kernel = Array2::from_shape_fn((side, side), |(r, c)| {
            let (dy, dx) = (r as isize - k, c as isize - k);
            (scale * (dy * dy + dx * dx) as f64).exp()
        });
        let total = kernel.sum();
        kernel.mapv_inplace(|v| v / total);
        Ok(Self { kernel, step, sigma: beam_radius / 2.0 })
    }

    /// The 1×1 identity kernel.
    pub fn delta(step: f64) -> Self {
        Self { kernel: Array2::ones((1, 1)), step, sigma: 0.0 }
    }

    pub fn kernel(&self) -> &Array2<f64> {
        &self.kernel
    }

    /// Pixel pitch in mm.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Gaussian standard deviation in mm (`w / 2`).
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sigma_pixels(&self) -> f64 {
        self.sigma / self.step
    }

    /// Half-width `k` of the `(2k+1)²` kernel.
    pub fn half_width(&self) -> usize {
        self.kernel.dim().0 / 2
    }

    /// True when every off-centre weight is exactly zero.
    pub fn is_delta(&self) -> bool {
        let k = self.half_width();
        self.kernel
            .indexed_iter()
            .all(|((r, c), &w)| (r == k && c == k) || w == 0.0)
    }
}

/// Blur kernel for frequency `f` at depth `z` with the given optics.
pub fn synthesize_psf(
    frequency_thz: f64,
    geom: &BeamGeometry,
    step: f64,
    z: f64,
    truncation: f64,
) -> Result<Psf> {
    let params = BeamParams::at_frequency(frequency_thz, geom)?;
    Psf::gaussian(beam_radius(z, &params), step, truncation)
}
