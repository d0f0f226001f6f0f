//! On-disk cube container, PNG export and CSV reports.
//!
//! Container layout (all little-endian):
//!
//! | offset | size      | field                          |
//! |--------|-----------|--------------------------------|
//! | 0      | 4         | magic `THZC`                   |
//! | 4      | 2         | version (`u16`, = 1)           |
//! | 6      | 12        | bands, height, width (`u32`)   |
//! | 18     | 16        | step_x, step_y in mm (`f64`)   |
//! | 34     | 8·b       | frequencies in THz (`f64`)     |
//! | …      | 4·b·ny·nx | samples (`f32`), band-major, row-major |
//!
//! Samples are held as `f64` in memory and narrowed to `f32` on write.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array3, ArrayView2};

use crate::cube::HyperCube;
use crate::error::{validation, Error, Result};

pub const MAGIC: &[u8; 4] = b"THZC";
pub const VERSION: u16 = 1;
/// Bytes before the frequency axis.
pub const HEADER_LEN: usize = 4 + 2 + 12 + 16;

/// Exact size in bytes of the container for a cube of the given dimensions.
pub fn container_len(bands: usize, height: usize, width: usize) -> Option<usize> {
    let samples = bands.checked_mul(height)?.checked_mul(width)?;
    HEADER_LEN
        .checked_add(bands.checked_mul(8)?)?
        .checked_add(samples.checked_mul(4)?)
}

/// Serialises a cube into container bytes.
pub fn encode_cube(cube: &HyperCube) -> Result<Vec<u8>> {
    let (b, ny, nx) = cube.data().dim();
    let dims: Vec<u32> = [b, ny, nx]
        .iter()
        .map(|&d| u32::try_from(d).map_err(|_| validation(format!("dimension {d} exceeds u32"))))
        .collect::<Result<_>>()?;
    let len = container_len(b, ny, nx).ok_or_else(|| validation("cube too large"))?;
    let mut out = Vec::with_capacity(len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&cube.step_x().to_le_bytes());
    out.extend_from_slice(&cube.step_y().to_le_bytes());
    for f in cube.frequencies() {
        out.extend_from_slice(&f.to_le_bytes());
    }
    for &v in cube.data().iter() {
        let narrowed = v as f32;
        if !narrowed.is_finite() {
            return Err(validation(format!("sample {v} overflows f32")));
        }
        out.extend_from_slice(&narrowed.to_le_bytes());
    }
    debug_assert_eq!(out.len(), len);
    Ok(out)
}

/// Parses container bytes into a validated cube.
pub fn decode_cube(bytes: &[u8]) -> Result<HyperCube> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing THZC magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corruption(format!(
            "header truncated: {} of {HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (b, ny, nx) = (u32_at(6), u32_at(10), u32_at(14));
    let expected = container_len(b, ny, nx)
        .ok_or_else(|| Error::Corruption(format!("declared dims {b}x{ny}x{nx} overflow")))?;
    if bytes.len() != expected {
        return Err(Error::Corruption(format!(
            "declared dims {b}x{ny}x{nx} need {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let (step_x, step_y) = (f64_at(18), f64_at(26));
    let frequencies: Vec<f64> = (0..b).map(|i| f64_at(HEADER_LEN + 8 * i)).collect();
    let payload = &bytes[HEADER_LEN + 8 * b..];
    let samples: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let data = Array3::from_shape_vec((b, ny, nx), samples).expect("length checked above");
    HyperCube::new(frequencies, step_x, step_y, data)
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<HyperCube> {
    let path = path.as_ref();
    decode_cube(&fs::read(path).map_err(|e| with_path(e, path))?)
}

/// Writes a cube. Nothing is written when the cube cannot be encoded.
pub fn write_cube(cube: &HyperCube, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_cube(cube)?;
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| with_path(e, path))?;
    Ok(())
}

fn with_path(e: std::io::Error, path: &Path) -> std::io::Error {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

/// Min–max normalises to 8-bit levels with round-half-up; a constant image maps to 128.
pub fn normalize_to_u8(image: ArrayView2<'_, f64>) -> Vec<u8> {
    let (lo, hi) = min_max(image.iter().copied());
    let range = hi - lo;
    image
        .iter()
        .map(|&v| {
            let t = if range > 0.0 { (v - lo) / range } else { 0.5 };
            level_u8(t)
        })
        .collect()
}

pub(crate) fn level_u8(t: f64) -> u8 {
    (t.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub(crate) fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

pub fn write_gray_png(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    write_png(path.as_ref(), width, height, png::ColorType::Grayscale, pixels)
}

pub fn write_rgb_png(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    write_png(path.as_ref(), width, height, png::ColorType::Rgb, pixels)
}

fn write_png(path: &Path, width: usize, height: usize, color: png::ColorType, pixels: &[u8]) -> Result<()> {
    let channels = if color == png::ColorType::Rgb { 3 } else { 1 };
    if pixels.len() != width * height * channels {
        return Err(Error::DimensionMismatch(format!(
            "{} bytes for a {width}x{height}x{channels} image",
            pixels.len()
        )));
    }
    let file = BufWriter::new(fs::File::create(path)?);
    let mut encoder = png::Encoder::new(file, width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(pixels)?;
    writer.finish()?;
    Ok(())
}

/// Writes one band as an 8-bit grayscale PNG, min–max normalised per band.
pub fn export_band(cube: &HyperCube, band_index: usize, path: impl AsRef<Path>) -> Result<()> {
    let band = cube.band(band_index)?;
    write_image_png(band, path)
}

/// Writes any 2D array as an 8-bit grayscale PNG, min–max normalised.
pub fn write_image_png(image: ArrayView2<'_, f64>, path: impl AsRef<Path>) -> Result<()> {
    let (ny, nx) = image.dim();
    write_gray_png(path, nx, ny, &normalize_to_u8(image))
}

/// Writes a CSV table with a header row.
pub fn write_csv<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_csv(BufWriter::new(fs::File::create(path)?), header, rows)
}

/// 64-bit FNV-1a digest.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}
