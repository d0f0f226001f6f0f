//! C ABI over `thz_restore`.
//!
//! Cubes cross the boundary as opaque `ThzCube` handles. Every fallible call
//! returns a `ThzStatus`; on failure `thz_last_error_message` holds a
//! description for the calling thread. Panics are caught and reported as
//! `THZ_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::Array3;
use thz_restore::beam::{beam_waist, wavelength_from_frequency, BeamGeometry};
use thz_restore::deblur::{
    DeblurMethod, DEFAULT_HL_ALPHA, DEFAULT_HL_LAMBDA, DEFAULT_HL_OUTER_ITERATIONS, DEFAULT_RL_ITERATIONS,
};
use thz_restore::denoise::{PatchDenoiseParams, DEFAULT_STRENGTH};
use thz_restore::io::{read_cube, write_cube};
use thz_restore::pipeline::{restore, NoiseType, PsfScaleMode, RestorationConfig, RestorationMethod};
use thz_restore::subspace::SubspaceDim;
use thz_restore::{Error, HyperCube};

/// Opaque cube handle.
pub struct ThzCube(HyperCube);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThzStatus {
    Ok = 0,
    Format = 1,
    Corrupt = 2,
    Validation = 3,
    Config = 4,
    Domain = 5,
    Dimension = 6,
    Range = 7,
    Io = 8,
    NullPointer = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThzNoiseType {
    Iid = 0,
    Noniid = 1,
    Poisson = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThzDeblur {
    RichardsonLucy = 0,
    Wiener = 1,
    HyperLaplacian = 2,
}

/// Restoration settings. Obtain defaults from `thz_restore_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ThzRestoreConfig {
    /// Subspace dimension; 0 selects it automatically.
    pub p: usize,
    /// A `ThzNoiseType` value.
    pub noise_type: u32,
    /// Poisson gain, used with `THZ_NOISE_TYPE_POISSON`.
    pub gain: f64,
    /// A `ThzDeblur` value.
    pub deblur: u32,
    pub rl_iterations: usize,
    /// Wiener noise-to-signal ratio; negative derives it from the noise level.
    pub wiener_nsr: f64,
    pub hl_lambda: f64,
    pub hl_alpha: f64,
    pub hl_outer_iterations: usize,
    pub f_number: f64,
    /// Defocus in mm.
    pub z: f64,
    /// PSF truncation in beam radii.
    pub truncation: f64,
    pub patch_size: usize,
    pub search_window: usize,
    /// Denoising strength `h / sigma`.
    pub strength: f64,
    /// Seed of the joint method's noise probe.
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> ThzStatus {
    match err {
        Error::Format(_) => ThzStatus::Format,
        Error::Corruption(_) => ThzStatus::Corrupt,
        Error::Validation(_) => ThzStatus::Validation,
        Error::Config(_) => ThzStatus::Config,
        Error::Domain(_) => ThzStatus::Domain,
        Error::DimensionMismatch(_) => ThzStatus::Dimension,
        Error::OutOfRange { .. } => ThzStatus::Range,
        _ => ThzStatus::Io,
    }
}

fn fail(status: ThzStatus, msg: impl Into<String>) -> ThzStatus {
    set_last_error(msg.into());
    status
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), ThzStatus>) -> ThzStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ThzStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(ThzStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: thz_restore::Result<T>) -> Result<T, ThzStatus> {
    r.map_err(|e| fail(status_of(&e), format!("{}: {e}", e.code())))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), ThzStatus> {
    if p.is_null() {
        Err(fail(ThzStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a str, ThzStatus> {
    non_null(path, "path")?;
    CStr::from_ptr(path).to_str().map_err(|_| fail(ThzStatus::Validation, "path is not valid UTF-8"))
}

unsafe fn cube_ref<'a>(cube: *const ThzCube) -> Result<&'a HyperCube, ThzStatus> {
    non_null(cube, "cube")?;
    Ok(&(*cube).0)
}

unsafe fn emit(out: *mut *mut ThzCube, cube: HyperCube) {
    *out = Box::into_raw(Box::new(ThzCube(cube)));
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn thz_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn thz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a cube from `bands × height × width` samples (band-major, then
/// row-major) and `bands` frequencies in THz. The data is copied.
///
/// # Safety
/// `frequencies` must point to `bands` doubles, `data` to
/// `bands * height * width` doubles, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn thz_cube_new(
    bands: usize,
    height: usize,
    width: usize,
    frequencies: *const f64,
    step_x: f64,
    step_y: f64,
    data: *const f64,
    out: *mut *mut ThzCube,
) -> ThzStatus {
    guard(|| {
        non_null(frequencies, "frequencies")?;
        non_null(data, "data")?;
        non_null(out, "out")?;
        let len = bands
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| fail(ThzStatus::Validation, "cube dimensions overflow"))?;
        let freqs = std::slice::from_raw_parts(frequencies, bands).to_vec();
        let samples = std::slice::from_raw_parts(data, len).to_vec();
        let array = Array3::from_shape_vec((bands, height, width), samples)
            .map_err(|e| fail(ThzStatus::Dimension, e.to_string()))?;
        emit(out, lift(HyperCube::new(freqs, step_x, step_y, array))?);
        Ok(())
    })
}

/// Reads a cube container.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn thz_cube_read(path: *const c_char, out: *mut *mut ThzCube) -> ThzStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = path_arg(path)?;
        emit(out, lift(read_cube(path))?);
        Ok(())
    })
}

/// Writes a cube container.
///
/// # Safety
/// `cube` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn thz_cube_write(cube: *const ThzCube, path: *const c_char) -> ThzStatus {
    guard(|| {
        let cube = cube_ref(cube)?;
        lift(write_cube(cube, path_arg(path)?))
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `cube` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn thz_cube_free(cube: *mut ThzCube) {
    if !cube.is_null() {
        drop(Box::from_raw(cube));
    }
}

/// # Safety
/// `cube` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn thz_cube_dims(
    cube: *const ThzCube,
    bands: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> ThzStatus {
    guard(|| {
        let cube = cube_ref(cube)?;
        non_null(bands, "bands")?;
        non_null(height, "height")?;
        non_null(width, "width")?;
        *bands = cube.bands();
        *height = cube.height();
        *width = cube.width();
        Ok(())
    })
}

/// Copies the samples into `out`, which must hold exactly
/// `bands * height * width` doubles (`len`).
///
/// # Safety
/// `cube` must be a live handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn thz_cube_data(cube: *const ThzCube, out: *mut f64, len: usize) -> ThzStatus {
    guard(|| {
        let cube = cube_ref(cube)?;
        non_null(out, "out")?;
        copy_out(cube.data().iter().copied(), cube.data().len(), out, len)
    })
}

/// Copies the `bands` frequencies into `out`.
///
/// # Safety
/// `cube` must be a live handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn thz_cube_frequencies(cube: *const ThzCube, out: *mut f64, len: usize) -> ThzStatus {
    guard(|| {
        let cube = cube_ref(cube)?;
        non_null(out, "out")?;
        let f = cube.frequencies();
        copy_out(f.iter().copied(), f.len(), out, len)
    })
}

unsafe fn copy_out(values: impl Iterator<Item = f64>, n: usize, out: *mut f64, len: usize) -> Result<(), ThzStatus> {
    if len != n {
        return Err(fail(ThzStatus::Dimension, format!("buffer holds {len} values, need {n}")));
    }
    let dst = std::slice::from_raw_parts_mut(out, len);
    for (d, v) in dst.iter_mut().zip(values) {
        *d = v;
    }
    Ok(())
}

/// Beam waist radius w0 in mm at `frequency_thz` for focusing optics of the
/// given f-number.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn thz_beam_waist(frequency_thz: f64, f_number: f64, out: *mut f64) -> ThzStatus {
    guard(|| {
        non_null(out, "out")?;
        let geom = lift(BeamGeometry::from_f_number(f_number))?;
        let lambda = lift(wavelength_from_frequency(frequency_thz))?;
        *out = beam_waist(lambda, &geom);
        Ok(())
    })
}

/// Library defaults for `ThzRestoreConfig`.
#[no_mangle]
pub extern "C" fn thz_restore_config_default() -> ThzRestoreConfig {
    let d = RestorationConfig::default();
    ThzRestoreConfig {
        p: 0,
        noise_type: ThzNoiseType::Iid as u32,
        gain: 1.0,
        deblur: ThzDeblur::Wiener as u32,
        rl_iterations: DEFAULT_RL_ITERATIONS,
        wiener_nsr: -1.0,
        hl_lambda: DEFAULT_HL_LAMBDA,
        hl_alpha: DEFAULT_HL_ALPHA,
        hl_outer_iterations: DEFAULT_HL_OUTER_ITERATIONS,
        f_number: d.psf_geometry.f_number(),
        z: d.z,
        truncation: d.truncation,
        patch_size: d.denoise_params.patch_size,
        search_window: d.denoise_params.search_window,
        strength: d.denoise_params.strength.unwrap_or(DEFAULT_STRENGTH),
        seed: d.seed,
    }
}

fn to_config(c: &ThzRestoreConfig) -> Result<RestorationConfig, ThzStatus> {
    const RL: u32 = ThzDeblur::RichardsonLucy as u32;
    const WIENER: u32 = ThzDeblur::Wiener as u32;
    const HL: u32 = ThzDeblur::HyperLaplacian as u32;
    const IID: u32 = ThzNoiseType::Iid as u32;
    const NONIID: u32 = ThzNoiseType::Noniid as u32;
    const POISSON: u32 = ThzNoiseType::Poisson as u32;
    let deblur = match c.deblur {
        RL => DeblurMethod::RichardsonLucy { iterations: c.rl_iterations },
        WIENER => DeblurMethod::Wiener { nsr: (c.wiener_nsr >= 0.0).then_some(c.wiener_nsr) },
        HL => DeblurMethod::HyperLaplacian {
            lambda_reg: c.hl_lambda,
            alpha: c.hl_alpha,
            outer_iterations: c.hl_outer_iterations,
        },
        other => return Err(fail(ThzStatus::Validation, format!("unknown deblur method {other}"))),
    };
    let noise_type = match c.noise_type {
        IID => NoiseType::Iid,
        NONIID => NoiseType::Noniid,
        POISSON => NoiseType::Poisson { gain: c.gain },
        other => return Err(fail(ThzStatus::Validation, format!("unknown noise type {other}"))),
    };
    Ok(RestorationConfig {
        p: if c.p == 0 { SubspaceDim::Auto } else { SubspaceDim::Fixed(c.p) },
        noise_type,
        deblur,
        psf_geometry: lift(BeamGeometry::from_f_number(c.f_number))?,
        psf_scale_mode: PsfScaleMode::EffectiveFrequency,
        components_to_discard: Vec::new(),
        denoise_params: PatchDenoiseParams {
            patch_size: c.patch_size,
            search_window: c.search_window,
            strength: Some(c.strength),
            sigma: 0.0,
        },
        z: c.z,
        truncation: c.truncation,
        seed: c.seed,
    })
}

unsafe fn run_restore(
    cube: *const ThzCube,
    config: *const ThzRestoreConfig,
    out: *mut *mut ThzCube,
    method: RestorationMethod,
) -> ThzStatus {
    guard(|| {
        let cube = cube_ref(cube)?;
        non_null(config, "config")?;
        non_null(out, "out")?;
        let config = to_config(&*config)?;
        emit(out, lift(restore(cube, &config, method))?.cube);
        Ok(())
    })
}

/// Subspace denoising. A null `config` is rejected.
///
/// # Safety
/// `cube` must be a live handle, `config` valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn thz_fasthyde(
    cube: *const ThzCube,
    config: *const ThzRestoreConfig,
    out: *mut *mut ThzCube,
) -> ThzStatus {
    run_restore(cube, config, out, RestorationMethod::Fasthyde)
}

/// Subspace denoising with per-component deconvolution.
///
/// # Safety
/// `cube` must be a live handle, `config` valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn thz_joint_restore(
    cube: *const ThzCube,
    config: *const ThzRestoreConfig,
    out: *mut *mut ThzCube,
) -> ThzStatus {
    run_restore(cube, config, out, RestorationMethod::Joint)
}
