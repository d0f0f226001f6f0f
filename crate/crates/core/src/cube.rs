//! The hyperspectral amplitude cube: `bands × height × width` samples plus
//! the frequency axis and the raster step of the scan.

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::error::{validation, Error, Result};

/// Raster steps the scanning stage of the instrument can be configured with (mm).
pub const INSTRUMENT_STEPS_MM: [f64; 5] = [0.1, 0.2, 0.5, 1.0, 2.0];

/// Upper bound (exclusive) of the supported frequency axis, in THz.
pub const MAX_FREQUENCY_THZ: f64 = 20.0;

/// Amplitude cube. Immutable once constructed; transforms produce new cubes.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    frequencies: Vec<f64>,
    step_x: f64,
    step_y: f64,
    data: Array3<f64>,
}

impl HyperCube {
    /// Builds a cube from a `(bands, height, width)` array, validating every invariant.
    pub fn new(frequencies: Vec<f64>, step_x: f64, step_y: f64, data: Array3<f64>) -> Result<Self> {
        let (bands, ny, nx) = data.dim();
        if bands == 0 || ny == 0 || nx == 0 {
            return Err(validation(format!("empty cube {bands}x{ny}x{nx}")));
        }
        if frequencies.len() != bands {
            return Err(validation(format!(
                "{} frequencies for {} bands",
                frequencies.len(),
                bands
            )));
        }
        validate_frequencies(&frequencies)?;
        for (name, s) in [("step_x", step_x), ("step_y", step_y)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(validation(format!("{name} must be positive, got {s}")));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(validation(format!("non-finite sample at flat index {pos}")));
        }
        Ok(Self {
            frequencies,
            step_x,
            step_y,
            data: data.as_standard_layout().into_owned(),
        })
    }

    /// Same metadata, new samples.
    pub fn with_data(&self, data: Array3<f64>) -> Result<Self> {
        Self::new(self.frequencies.clone(), self.step_x, self.step_y, data)
    }

    /// Same metadata, samples given as a `bands × pixels` matrix.
    pub fn with_matrix(&self, matrix: Array2<f64>) -> Result<Self> {
        let (b, n) = matrix.dim();
        if b != self.bands() || n != self.pixels() {
            return Err(Error::DimensionMismatch(format!(
                "matrix {b}x{n} does not fit cube {}x{}",
                self.bands(),
                self.pixels()
            )));
        }
        let data = matrix
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b, self.height(), self.width()))
            .expect("matrix size checked above");
        self.with_data(data)
    }

    pub fn bands(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    /// Pixels per band (`height * width`).
    pub fn pixels(&self) -> usize {
        self.height() * self.width()
    }

    pub fn step_x(&self) -> f64 {
        self.step_x
    }

    pub fn step_y(&self) -> f64 {
        self.step_y
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn band(&self, index: usize) -> Result<ArrayView2<'_, f64>> {
        if index >= self.bands() {
            return Err(Error::OutOfRange { index, len: self.bands() });
        }
        Ok(self.data.index_axis(Axis(0), index))
    }

    /// The cube as a `bands × pixels` matrix (rows are vectorised bands).
    pub fn to_matrix(&self) -> Array2<f64> {
        self.data
            .to_shape((self.bands(), self.pixels()))
            .expect("cube data is kept in standard layout")
            .into_owned()
    }

    /// Square pixel pitch, or an error when the two raster steps differ.
    pub fn square_step(&self) -> Result<f64> {
        if (self.step_x - self.step_y).abs() > 1e-12 * self.step_x.max(self.step_y) {
            return Err(Error::Config(format!(
                "anisotropic raster ({} x {} mm) is not supported by the beam model",
                self.step_x, self.step_y
            )));
        }
        Ok(self.step_x)
    }

    /// Checks that both raster steps are ones the scanning stage can produce.
    pub fn check_instrument_steps(&self) -> Result<()> {
        for (name, s) in [("step_x", self.step_x), ("step_y", self.step_y)] {
            if !INSTRUMENT_STEPS_MM.iter().any(|&v| (v - s).abs() < 1e-9) {
                return Err(validation(format!(
                    "{name} = {s} mm is not one of {INSTRUMENT_STEPS_MM:?}"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn validate_frequencies(frequencies: &[f64]) -> Result<()> {
    for (i, &f) in frequencies.iter().enumerate() {
        if !(f > 0.0 && f < MAX_FREQUENCY_THZ) {
            return Err(validation(format!("frequency[{i}] = {f} THz outside (0, 20)")));
        }
    }
    if let Some(w) = frequencies.windows(2).position(|w| w[1] <= w[0]) {
        return Err(validation(format!(
            "frequencies not strictly increasing at index {}",
            w + 1
        )));
    }
    Ok(())
}
