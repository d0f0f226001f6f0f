//! Synthetic phantoms and the degradation `Y = X H + N`: per-band blur by the
//! frequency-dependent beam kernel followed by one of three noise models.
//!
//! Noise is drawn from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded per band
//! with `seed ^ band_index`, Gaussian samples via `rand_distr::StandardNormal`
//! and Poisson samples via `rand_distr::Poisson`, so a cube depends only on
//! the seed and never on thread scheduling.

use ndarray::{stack, Array2, Array3, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam::{synthesize_psf, BeamGeometry, Psf, DEFAULT_TRUNCATION};
use crate::cube::{validate_frequencies, HyperCube};
use crate::error::{validation, Error, Result};
use crate::spectral::MirrorOperator;

pub const MIN_PHANTOM_SIDE: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomKind {
    /// Centred disk of foreground on background (a hole in a metal plate).
    DiskHole { radius_px: f64 },
    /// Concentric rings alternating foreground/background inside `outer_radius_px`.
    Rings { ring_width_px: f64, outer_radius_px: f64 },
    /// Vertical bars; columns alternate every `bar_width_px`.
    Bars { bar_width_px: usize },
}

/// Amplitude of a phase over the frequency axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Contrast {
    Constant { value: f64 },
    /// Linear in frequency from `start` (first band) to `end` (last band).
    Ramp { start: f64, end: f64 },
}

impl Contrast {
    fn at(&self, f: f64, f_first: f64, f_last: f64) -> f64 {
        match *self {
            Contrast::Constant { value } => value,
            Contrast::Ramp { start, end } => {
                if f_last > f_first {
                    start + (end - start) * (f - f_first) / (f_last - f_first)
                } else {
                    start
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub height: usize,
    pub width: usize,
    /// Square pixel pitch in mm.
    pub step: f64,
    pub frequencies: Vec<f64>,
    pub background: Contrast,
    pub foreground: Contrast,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < MIN_PHANTOM_SIDE || self.width < MIN_PHANTOM_SIDE {
            return Err(validation(format!(
                "phantom must be at least {MIN_PHANTOM_SIDE}x{MIN_PHANTOM_SIDE}, got {}x{}",
                self.height, self.width
            )));
        }
        if !(self.step > 0.0) {
            return Err(validation("phantom step must be positive"));
        }
        if self.frequencies.is_empty() {
            return Err(validation("phantom needs at least one band"));
        }
        validate_frequencies(&self.frequencies)?;
        match self.kind {
            PhantomKind::DiskHole { radius_px } if !(radius_px > 0.0) => {
                Err(validation("disk radius must be positive"))
            }
            PhantomKind::Rings { ring_width_px, outer_radius_px }
                if !(ring_width_px > 0.0 && outer_radius_px > 0.0) =>
            {
                Err(validation("ring width and outer radius must be positive"))
            }
            PhantomKind::Bars { bar_width_px: 0 } => Err(validation("bar width must be positive")),
            _ => Ok(()),
        }
    }
}

/// Boolean foreground mask of the phantom (pixel-centre inclusion).
pub fn phantom_mask(kind: &PhantomKind, height: usize, width: usize) -> Array2<bool> {
    let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    Array2::from_shape_fn((height, width), |(r, c)| {
        let (dy, dx) = (r as f64 - cy, c as f64 - cx);
        let rho2 = dy * dy + dx * dx;
        match *kind {
            PhantomKind::DiskHole { radius_px } => rho2 <= radius_px * radius_px,
            PhantomKind::Rings { ring_width_px, outer_radius_px } => {
                rho2 <= outer_radius_px * outer_radius_px
                    && ((rho2.sqrt() / ring_width_px).floor() as u64).is_multiple_of(2)
            }
            PhantomKind::Bars { bar_width_px } => (c / bar_width_px).is_multiple_of(2),
        }
    })
}

/// Piecewise-constant clean cube described by `spec`.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<HyperCube> {
    spec.validate()?;
    let mask = phantom_mask(&spec.kind, spec.height, spec.width);
    let f = &spec.frequencies;
    let (f0, f1) = (f[0], f[f.len() - 1]);
    let mut data = Array3::zeros((f.len(), spec.height, spec.width));
    for (mut band, &freq) in data.axis_iter_mut(Axis(0)).zip(f) {
        let fg = spec.foreground.at(freq, f0, f1);
        let bg = spec.background.at(freq, f0, f1);
        band.zip_mut_with(&mask, |v, &inside| *v = if inside { fg } else { bg });
    }
    HyperCube::new(spec.frequencies.clone(), spec.step, spec.step, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseKind {
    GaussianIid { sigma: f64 },
    GaussianNonIid { sigmas: Vec<f64> },
    /// Each voxel becomes `Poisson(value / gain) · gain`.
    Poisson { gain: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn gaussian_iid(sigma: f64, seed: u64) -> Self {
        Self { kind: NoiseKind::GaussianIid { sigma }, seed }
    }

    pub fn gaussian_noniid(sigmas: Vec<f64>, seed: u64) -> Self {
        Self { kind: NoiseKind::GaussianNonIid { sigmas }, seed }
    }

    pub fn poisson(gain: f64, seed: u64) -> Self {
        Self { kind: NoiseKind::Poisson { gain }, seed }
    }

    /// Zero standard deviations are accepted and add nothing.
    pub fn validate(&self, bands: usize) -> Result<()> {
        let ok = |s: f64| s >= 0.0 && s.is_finite();
        match &self.kind {
            NoiseKind::GaussianIid { sigma } if !ok(*sigma) => {
                Err(validation(format!("sigma must be non-negative, got {sigma}")))
            }
            NoiseKind::GaussianNonIid { sigmas } if sigmas.len() != bands => Err(validation(format!(
                "{} per-band sigmas for {bands} bands",
                sigmas.len()
            ))),
            NoiseKind::GaussianNonIid { sigmas } if !sigmas.iter().all(|&s| ok(s)) => {
                Err(validation("per-band sigmas must be non-negative"))
            }
            NoiseKind::Poisson { gain } if !(*gain > 0.0 && gain.is_finite()) => {
                Err(validation(format!("poisson gain must be positive, got {gain}")))
            }
            _ => Ok(()),
        }
    }
}

/// Per-band generator: ChaCha8 seeded with `seed ^ band`.
pub fn band_rng(seed: u64, band: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ band as u64)
}

/// Convolves one image with a kernel using reflective borders.
pub fn blur_image(image: ArrayView2<'_, f64>, psf: &Psf) -> Array2<f64> {
    if psf.is_delta() {
        return image.to_owned();
    }
    let (ny, nx) = image.dim();
    MirrorOperator::new(ny, nx, psf.kernel().view()).apply(image)
}

/// Kernels for every band of a cube at depth `z`.
pub fn band_psfs(cube: &HyperCube, geom: &BeamGeometry, z: f64) -> Result<Vec<Psf>> {
    let step = cube.square_step()?;
    cube.frequencies()
        .iter()
        .map(|&f| synthesize_psf(f, geom, step, z, DEFAULT_TRUNCATION))
        .collect()
}

/// Blurs each band with its own frequency-dependent kernel.
pub fn blur_cube(cube: &HyperCube, geom: &BeamGeometry, z: f64) -> Result<HyperCube> {
    let psfs = band_psfs(cube, geom, z)?;
    let bands: Vec<Array2<f64>> = psfs
        .par_iter()
        .enumerate()
        .map(|(i, psf)| blur_image(cube.data().index_axis(Axis(0), i), psf))
        .collect();
    cube.with_data(stack_bands(&bands))
}

pub(crate) fn stack_bands(bands: &[Array2<f64>]) -> Array3<f64> {
    let views: Vec<_> = bands.iter().map(|b| b.view()).collect();
    stack(Axis(0), &views).expect("bands share one shape")
}

/// Adds noise drawn from `model`; deterministic in the seed.
pub fn add_noise(cube: &HyperCube, model: &NoiseModel) -> Result<HyperCube> {
    model.validate(cube.bands())?;
    if let NoiseKind::Poisson { .. } = model.kind {
        if let Some(v) = cube.data().iter().find(|v| **v < 0.0) {
            return Err(Error::Domain(format!("poisson noise needs non-negative input, found {v}")));
        }
    }
    let bands: Vec<Array2<f64>> = (0..cube.bands())
        .into_par_iter()
        .map(|i| {
            let band = cube.data().index_axis(Axis(0), i);
            let mut rng = band_rng(model.seed, i);
            match &model.kind {
                NoiseKind::GaussianIid { sigma } => gaussian_band(band, *sigma, &mut rng),
                NoiseKind::GaussianNonIid { sigmas } => gaussian_band(band, sigmas[i], &mut rng),
                NoiseKind::Poisson { gain } => band.mapv(|v| {
                    let lambda = v / gain;
                    if lambda > 0.0 {
                        Poisson::new(lambda).expect("positive rate").sample(&mut rng) * gain
                    } else {
                        0.0
                    }
                }),
            }
        })
        .collect();
    cube.with_data(stack_bands(&bands))
}

fn gaussian_band(band: ArrayView2<'_, f64>, sigma: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    band.mapv(|v| {
        let z: f64 = StandardNormal.sample(rng);
        v + sigma * z
    })
}

/// Clean phantom and its blurred, noisy observation.
pub fn simulate(
    spec: &PhantomSpec,
    geom: &BeamGeometry,
    noise: &NoiseModel,
    z: f64,
) -> Result<(HyperCube, HyperCube)> {
    let clean = generate_phantom(spec)?;
    let degraded = add_noise(&blur_cube(&clean, geom, z)?, noise)?;
    Ok((clean, degraded))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: PhantomKind, bands: usize) -> PhantomSpec {
        PhantomSpec {
            kind,
            height: 64,
            width: 64,
            step: 0.2,
            frequencies: (0..bands).map(|i| 0.5 + 0.1 * i as f64).collect(),
            background: Contrast::Constant { value: 1.0 },
            foreground: Contrast::Constant { value: 0.0 },
        }
    }

    #[test]
    fn disk_pixel_count_matches_area() {
        let cube = generate_phantom(&spec(PhantomKind::DiskHole { radius_px: 16.0 }, 1)).unwrap();
        let zeros = cube.data().iter().filter(|&&v| v == 0.0).count() as f64;
        // Oracle: brute-force count of pixel centres inside the circle.
        let mut oracle = 0;
        for r in 0..64 {
            for c in 0..64 {
                let (y, x) = (r as f64 - 31.5, c as f64 - 31.5);
                if y * y + x * x <= 256.0 {
                    oracle += 1;
                }
            }
        }
        assert_eq!(zeros, oracle as f64);
        let area = std::f64::consts::PI * 256.0;
        assert!((zeros - area).abs() < 2.0 * std::f64::consts::PI * 16.0, "{zeros} vs {area}");
    }

    #[test]
    fn zero_contrast_rings_are_constant() {
        let mut s = spec(PhantomKind::Rings { ring_width_px: 3.0, outer_radius_px: 25.0 }, 3);
        s.foreground = s.background;
        let cube = generate_phantom(&s).unwrap();
        assert!(cube.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn unit_bars_alternate_columns() {
        let cube = generate_phantom(&spec(PhantomKind::Bars { bar_width_px: 1 }, 4)).unwrap();
        for b in 0..4 {
            for c in 0..64 {
                let expect = if c % 2 == 0 { 0.0 } else { 1.0 };
                assert!(cube.data().slice(ndarray::s![b, .., c]).iter().all(|&v| v == expect));
            }
        }
    }

    #[test]
    fn ramp_contrast_is_linear_in_frequency() {
        let mut s = spec(PhantomKind::DiskHole { radius_px: 5.0 }, 3);
        s.foreground = Contrast::Ramp { start: 0.0, end: 1.0 };
        let cube = generate_phantom(&s).unwrap();
        let center: Vec<f64> = (0..3).map(|b| cube.data()[[b, 32, 32]]).collect();
        for (got, want) in center.iter().zip([0.0, 0.5, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_phantoms() {
        let mut s = spec(PhantomKind::DiskHole { radius_px: 4.0 }, 1);
        s.height = 15;
        assert!(generate_phantom(&s).is_err());
        assert!(generate_phantom(&spec(PhantomKind::Bars { bar_width_px: 0 }, 1)).is_err());
    }

    #[test]
    fn constant_cube_is_unchanged_by_blur() {
        let s = spec(PhantomKind::DiskHole { radius_px: 4.0 }, 3);
        let cube = generate_phantom(&s).unwrap();
        let flat = cube.with_data(Array3::from_elem((3, 64, 64), 0.7)).unwrap();
        let out = blur_cube(&flat, &BeamGeometry::default(), 0.0).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.7).abs() < 1e-9));
    }

    #[test]
    fn impulse_response_is_the_kernel() {
        let s = spec(PhantomKind::DiskHole { radius_px: 4.0 }, 1);
        let mut data = Array3::zeros((1, 64, 64));
        data[[0, 32, 32]] = 1.0;
        let cube = generate_phantom(&s).unwrap().with_data(data).unwrap();
        let geom = BeamGeometry::default();
        let out = blur_cube(&cube, &geom, 0.0).unwrap();
        let psf = synthesize_psf(0.5, &geom, 0.2, 0.0, DEFAULT_TRUNCATION).unwrap();
        let k = psf.half_width() as isize;
        for r in 0..64isize {
            for c in 0..64isize {
                let (dy, dx) = (r - 32, c - 32);
                let expect = if dy.abs() <= k && dx.abs() <= k {
                    psf.kernel()[[(dy + k) as usize, (dx + k) as usize]]
                } else {
                    0.0
                };
                assert!((out.data()[[0, r as usize, c as usize]] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn noise_is_deterministic_and_zero_sigma_is_identity() {
        let cube = generate_phantom(&spec(PhantomKind::DiskHole { radius_px: 9.0 }, 5)).unwrap();
        let m = NoiseModel::gaussian_iid(0.1, 42);
        assert_eq!(add_noise(&cube, &m).unwrap(), add_noise(&cube, &m).unwrap());
        assert_ne!(add_noise(&cube, &m).unwrap(), add_noise(&cube, &NoiseModel::gaussian_iid(0.1, 43)).unwrap());
        assert_eq!(add_noise(&cube, &NoiseModel::gaussian_iid(0.0, 1)).unwrap(), cube);
    }

    #[test]
    fn iid_noise_moments() {
        let s = PhantomSpec {
            frequencies: (0..50).map(|i| 0.3 + 0.1 * i as f64).collect(),
            ..spec(PhantomKind::DiskHole { radius_px: 5.0 }, 1)
        };
        let zero = generate_phantom(&s).unwrap().with_data(Array3::zeros((50, 64, 64))).unwrap();
        let noisy = add_noise(&zero, &NoiseModel::gaussian_iid(0.1, 7)).unwrap();
        let n = noisy.data().len() as f64;
        let mean = noisy.data().sum() / n;
        let sd = (noisy.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 0.002, "mean {mean}");
        assert!((sd - 0.1).abs() < 0.002, "sd {sd}");
    }

    #[test]
    fn poisson_domain_and_validation() {
        let cube = generate_phantom(&spec(PhantomKind::DiskHole { radius_px: 9.0 }, 2)).unwrap();
        let neg = cube.with_data(cube.data().mapv(|v| v - 0.5)).unwrap();
        assert!(matches!(add_noise(&neg, &NoiseModel::poisson(0.01, 1)), Err(Error::Domain(_))));
        assert!(add_noise(&cube, &NoiseModel::poisson(0.0, 1)).is_err());
        assert!(add_noise(&cube, &NoiseModel::gaussian_noniid(vec![0.1], 1)).is_err());
        let out = add_noise(&cube, &NoiseModel::poisson(0.01, 1)).unwrap();
        // Values are integer multiples of the gain.
        assert!(out.data().iter().all(|v| ((v / 0.01) - (v / 0.01).round()).abs() < 1e-9));
    }

    #[test]
    fn noise_model_json_shape() {
        let m = NoiseModel::gaussian_iid(0.05, 9);
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v, serde_json::json!({"type": "gaussian_iid", "sigma": 0.05, "seed": 9}));
        let back: NoiseModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
