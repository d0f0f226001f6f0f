//! FastHyDe-style subspace denoising and joint subspace deblurring/denoising.
//!
//! Both methods share one path: noise-type handling and whitening, subspace
//! learning and projection, then (joint only) per-component deconvolution,
//! eigen-image denoising, optional component removal, reconstruction and
//! unwhitening. After whitening the noise is unit-variance in every band, so
//! eigen-images are denoised with `sigma = 1`, or with the noise level that
//! survives deconvolution in the joint method.

use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::beam::{beam_radius, BeamGeometry, BeamParams, Psf, DEFAULT_TRUNCATION};
use crate::cube::HyperCube;
use crate::deblur::{deblur_eigen_images, DeblurMethod};
use crate::denoise::{denoise_eigen_images, PatchDenoiseParams};
use crate::error::{config, validation, Error, Result};
use crate::subspace::{
    component_report, estimate_noise, learn_subspace, project, reconstruct, whitening_scales, ComponentInfo,
    EigenImageSet, NoiseEstimate, SubspaceBasis, SubspaceDim,
};

pub const DEFAULT_NOISE_PROBE_SEED: u64 = 0x7468_7a70;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseType {
    /// One noise level for every band.
    Iid,
    /// Band-specific noise levels.
    Noniid,
    /// Poisson counts scaled by `gain`; handled through the Anscombe transform.
    Poisson { gain: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PsfScaleMode {
    /// Beam at the component's effective frequency.
    EffectiveFrequency,
    /// One beam radius in mm per component; 0 means no blur.
    Manual { waists: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestorationMethod {
    Fasthyde,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RestorationConfig {
    pub p: SubspaceDim,
    pub noise_type: NoiseType,
    /// Eigen-image deconvolution; defaults to Wiener with `nsr = 1 / var`.
    pub deblur: DeblurMethod,
    pub psf_geometry: BeamGeometry,
    pub psf_scale_mode: PsfScaleMode,
    pub components_to_discard: Vec<usize>,
    pub denoise_params: PatchDenoiseParams,
    /// Defocus distance in mm at which the PSFs are evaluated.
    pub z: f64,
    pub truncation: f64,
    /// Seed of the unit-noise probe that measures noise after deconvolution.
    pub seed: u64,
}

impl Default for RestorationConfig {
    fn default() -> Self {
        Self {
            p: SubspaceDim::Auto,
            noise_type: NoiseType::Iid,
            deblur: DeblurMethod::Wiener { nsr: None },
            psf_geometry: BeamGeometry::default(),
            psf_scale_mode: PsfScaleMode::EffectiveFrequency,
            components_to_discard: Vec::new(),
            denoise_params: PatchDenoiseParams::default(),
            z: 0.0,
            truncation: DEFAULT_TRUNCATION,
            seed: DEFAULT_NOISE_PROBE_SEED,
        }
    }
}

impl RestorationConfig {
    /// Checks everything that does not depend on the chosen dimension.
    pub fn validate(&self) -> Result<()> {
        if let SubspaceDim::Fixed(0) = self.p {
            return Err(config("subspace dimension must be at least 1"));
        }
        if let NoiseType::Poisson { gain } = self.noise_type {
            if !(gain > 0.0) || !gain.is_finite() {
                return Err(validation(format!("Poisson gain must be positive, got {gain}")));
            }
        }
        self.deblur.validate()?;
        self.psf_geometry.validate()?;
        self.denoise_params.validate()?;
        if let PsfScaleMode::Manual { waists } = &self.psf_scale_mode {
            if let Some(w) = waists.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
                return Err(config(format!("manual beam radii must be finite and non-negative, got {w}")));
            }
        }
        if !self.z.is_finite() {
            return Err(validation("defocus distance must be finite"));
        }
        Ok(())
    }

    fn validate_for_dim(&self, p: usize) -> Result<()> {
        if let Some(&i) = self.components_to_discard.iter().find(|&&i| i >= p) {
            return Err(config(format!("cannot discard component {i}: only {p} components")));
        }
        let mut distinct = self.components_to_discard.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() == p {
            return Err(config(format!("discarding all {p} components leaves nothing to reconstruct")));
        }
        if let PsfScaleMode::Manual { waists } = &self.psf_scale_mode {
            if waists.len() != p {
                return Err(config(format!("{} manual beam radii for {p} components", waists.len())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    #[serde(flatten)]
    pub info: ComponentInfo,
    /// Beam radius (mm) of the PSF used for the component, joint method only.
    pub w0: Option<f64>,
    pub discarded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestorationReport {
    pub method: RestorationMethod,
    pub p: usize,
    /// Noise levels used for whitening, in the (transformed) data domain.
    pub noise_sigma: Vec<f64>,
    pub components: Vec<ComponentRecord>,
    pub timings: Vec<StageTiming>,
}

#[derive(Debug, Clone)]
pub struct Restoration {
    pub cube: HyperCube,
    pub report: RestorationReport,
}

struct Timer {
    timings: Vec<StageTiming>,
    last: Instant,
}

impl Timer {
    fn new() -> Self {
        Self { timings: Vec::new(), last: Instant::now() }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(StageTiming { stage: stage.into(), seconds: (now - self.last).as_secs_f64() });
        self.last = now;
    }
}

/// Noise level of each deblurred eigen-image. Unit noise is added to the
/// input, deblurred again, and the standard deviation of the change is taken.
/// Components with a delta PSF are untouched and keep unit noise.
fn propagated_noise(
    eigen: &EigenImageSet,
    deblurred: &EigenImageSet,
    psfs: &[Psf],
    method: &DeblurMethod,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<Array2<f64>> = (0..eigen.len())
        .map(|i| {
            let img = eigen.image(i);
            if psfs[i].is_delta() {
                return img.to_owned();
            }
            img.mapv(|v| v + Distribution::<f64>::sample(&StandardNormal, &mut rng))
        })
        .collect();
    let probed = deblur_eigen_images(&eigen.with_images(&probes)?, psfs, method)?;
    Ok((0..eigen.len())
        .map(|i| {
            if psfs[i].is_delta() {
                return 1.0;
            }
            let diff: Array2<f64> = &probed.image(i) - &deblurred.image(i);
            let mean = diff.mean().unwrap_or(0.0);
            (diff.mapv(|d| (d - mean).powi(2)).mean().unwrap_or(0.0)).sqrt()
        })
        .collect())
}

/// Subspace denoising without deconvolution.
pub fn fasthyde(cube: &HyperCube, config: &RestorationConfig) -> Result<HyperCube> {
    restore(cube, config, RestorationMethod::Fasthyde).map(|r| r.cube)
}

/// Subspace denoising with per-component deconvolution.
pub fn joint_restore(cube: &HyperCube, config: &RestorationConfig) -> Result<HyperCube> {
    restore(cube, config, RestorationMethod::Joint).map(|r| r.cube)
}

/// Whitened subspace decomposition shared by restoration and analysis.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Cube after the noise-type transform, before whitening.
    pub working: HyperCube,
    /// Per-band whitening scales.
    pub scales: Vec<f64>,
    pub basis: SubspaceBasis,
    pub eigen: EigenImageSet,
    pub components: Vec<ComponentInfo>,
    pub timings: Vec<StageTiming>,
}

/// Noise handling, whitening, subspace learning and projection.
pub fn analyze(cube: &HyperCube, noise_type: &NoiseType, dim: SubspaceDim) -> Result<Decomposition> {
    let mut timer = Timer::new();
    let (working, noise) = match *noise_type {
        NoiseType::Poisson { gain } => {
            let stabilised = anscombe(cube, gain)?;
            let b = stabilised.bands();
            (stabilised, NoiseEstimate::uniform(b, 1.0))
        }
        NoiseType::Noniid => (cube.clone(), estimate_noise(cube)?),
        NoiseType::Iid => {
            let est = estimate_noise(cube)?;
            (cube.clone(), NoiseEstimate::uniform(cube.bands(), est.rms()))
        }
    };
    timer.lap("noise_estimation");

    let scales = whitening_scales(&working, &noise)?;
    let whitened = scale_bands(&working, &scales, false)?;
    let unit = NoiseEstimate::uniform(cube.bands(), 1.0);
    let basis = learn_subspace(&whitened, dim, &unit)?;
    timer.lap("subspace_learning");

    let eigen = project(&whitened, &basis)?;
    let components = component_report(&basis, &eigen, cube.frequencies())?;
    timer.lap("projection");
    Ok(Decomposition { working, scales, basis, eigen, components, timings: timer.timings })
}

pub fn restore(cube: &HyperCube, config: &RestorationConfig, method: RestorationMethod) -> Result<Restoration> {
    config.validate()?;
    let Decomposition { scales, basis, eigen, components: info, timings, .. } =
        analyze(cube, &config.noise_type, config.p)?;
    let p = basis.dim();
    config.validate_for_dim(p)?;
    let mut eigen = eigen;
    let mut timer = Timer::new();
    timer.timings = timings;

    let mut waists = vec![None; p];
    let mut sigmas = vec![1.0; p];
    if method == RestorationMethod::Joint {
        let step = cube.square_step()?;
        let mut psfs = Vec::with_capacity(p);
        for (i, comp) in info.iter().enumerate() {
            let w = match &config.psf_scale_mode {
                PsfScaleMode::EffectiveFrequency => {
                    let params = BeamParams::at_frequency(comp.effective_frequency, &config.psf_geometry)?;
                    beam_radius(config.z, &params)
                }
                PsfScaleMode::Manual { waists } => waists[i],
            };
            waists[i] = Some(w);
            psfs.push(Psf::gaussian(w, step, config.truncation)?);
        }
        let deblurred = deblur_eigen_images(&eigen, &psfs, &config.deblur)?;
        sigmas = propagated_noise(&eigen, &deblurred, &psfs, &config.deblur, config.seed)?;
        eigen = deblurred;
        timer.lap("deblurring");
    }

    eigen = denoise_eigen_images(&eigen, &sigmas, &config.denoise_params)?;
    timer.lap("denoising");

    if !config.components_to_discard.is_empty() {
        eigen = eigen.zero_components(&config.components_to_discard);
    }
    let restored_white = reconstruct(&basis, &eigen)?;
    let restored = scale_bands(&restored_white, &scales, true)?;
    let restored = match config.noise_type {
        NoiseType::Poisson { gain } => inverse_anscombe(&restored, gain)?,
        _ => restored,
    };
    timer.lap("reconstruction");

    let components = info
        .into_iter()
        .zip(waists)
        .map(|(info, w0)| {
            let discarded = config.components_to_discard.contains(&info.index);
            ComponentRecord { info, w0, discarded }
        })
        .collect();
    Ok(Restoration {
        cube: restored,
        report: RestorationReport {
            method,
            p,
            noise_sigma: scales,
            components,
            timings: timer.timings,
        },
    })
}

/// Divides (or multiplies, with `inverse`) every band by its scale.
fn scale_bands(cube: &HyperCube, scales: &[f64], inverse: bool) -> Result<HyperCube> {
    if scales.len() != cube.bands() {
        return Err(Error::DimensionMismatch(format!("{} scales for {} bands", scales.len(), cube.bands())));
    }
    let mut data = cube.data().clone();
    for (mut band, &s) in data.axis_iter_mut(ndarray::Axis(0)).zip(scales) {
        if inverse {
            band.mapv_inplace(|v| v * s);
        } else {
            band.mapv_inplace(|v| v / s);
        }
    }
    cube.with_data(data)
}

/// Variance-stabilising transform `2 sqrt(x / gain + 3/8)`.
pub fn anscombe(cube: &HyperCube, gain: f64) -> Result<HyperCube> {
    if let Some(v) = cube.data().iter().find(|v| **v < 0.0) {
        return Err(Error::Domain(format!("Poisson data must be non-negative, found {v}")));
    }
    cube.with_data(cube.data().mapv(|v| 2.0 * (v / gain + 0.375).sqrt()))
}

/// Closed-form approximation of the exact unbiased inverse Anscombe
/// transform (Mäkitalo and Foi), scaled by `gain` and clamped at 0.
pub fn inverse_anscombe(cube: &HyperCube, gain: f64) -> Result<HyperCube> {
    let s = 1.5f64.sqrt();
    cube.with_data(cube.data().mapv(|d| {
        if d <= 0.0 {
            return 0.0;
        }
        let counts = 0.25 * d * d + 0.25 * s / d - 1.375 / (d * d) + 0.625 * s / (d * d * d) - 0.125;
        gain * counts.max(0.0)
    }))
}
