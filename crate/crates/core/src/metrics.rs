//! Quality measures, integrated-amplitude maps and false-colour composites.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::cube::HyperCube;
use crate::error::{validation, Error, Result};
use crate::io::{level_u8, min_max};

/// PSNR written to CSV for identical inputs.
pub const PSNR_SENTINEL_DB: f64 = 99.0;
/// Level-set tolerance of [`feature_sharpness`], as a fraction of the profile range.
pub const DEFAULT_SHARPNESS_TOLERANCE: f64 = 0.1;

/// Default false-colour ranges in THz (red, green, blue).
pub const FALSE_COLOR_RED: (f64, f64) = (0.4, 0.8);
pub const FALSE_COLOR_GREEN: (f64, f64) = (1.7, 2.1);
pub const FALSE_COLOR_BLUE: (f64, f64) = (4.5, 5.5);

/// Rectangle in mm, measured from the top-left pixel corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionOfInterest {
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub height: f64,
}

/// Pixel bounds `(row_start, row_end, col_start, col_end)`, end exclusive.
pub type PixelRect = (usize, usize, usize, usize);

impl RegionOfInterest {
    /// Converts to pixels (floor for the start, ceil for the extent) and checks bounds.
    pub fn to_pixels(&self, cube: &HyperCube) -> Result<PixelRect> {
        let vals = [self.x0, self.y0, self.width, self.height];
        if vals.iter().any(|v| !v.is_finite()) || self.x0 < 0.0 || self.y0 < 0.0 {
            return Err(validation(format!("invalid region of interest {self:?}")));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(validation("region of interest must have a positive size"));
        }
        let c0 = (self.x0 / cube.step_x()).floor() as usize;
        let r0 = (self.y0 / cube.step_y()).floor() as usize;
        let c1 = c0 + (self.width / cube.step_x()).ceil() as usize;
        let r1 = r0 + (self.height / cube.step_y()).ceil() as usize;
        if c1 > cube.width() || r1 > cube.height() {
            return Err(validation(format!(
                "region of interest {self:?} exceeds the {}×{} px image",
                cube.height(),
                cube.width()
            )));
        }
        Ok((r0, r1, c0, c1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Row,
    Column,
}

/// A row or column profile over the pixel range `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub orientation: Orientation,
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl CrossSection {
    /// Full-length profile through the middle row.
    pub fn middle_row(cube: &HyperCube) -> Self {
        Self { orientation: Orientation::Row, index: cube.height() / 2, start: 0, end: cube.width() }
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        let (lines, len) = match self.orientation {
            Orientation::Row => (height, width),
            Orientation::Column => (width, height),
        };
        if self.index >= lines {
            return Err(Error::OutOfRange { index: self.index, len: lines });
        }
        if self.start >= self.end || self.end > len {
            return Err(validation(format!(
                "cross-section span {}..{} is invalid for length {len}",
                self.start, self.end
            )));
        }
        Ok(())
    }

    pub fn profile(&self, image: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let (h, w) = image.dim();
        self.validate(h, w)?;
        let line = match self.orientation {
            Orientation::Row => image.row(self.index),
            Orientation::Column => image.column(self.index),
        };
        Ok(line.slice(ndarray::s![self.start..self.end]).to_vec())
    }

    fn step(&self, cube: &HyperCube) -> f64 {
        match self.orientation {
            Orientation::Row => cube.step_x(),
            Orientation::Column => cube.step_y(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandStd {
    pub std: f64,
    pub log10_std: f64,
}

/// Per-band sample standard deviation over the region.
pub fn flat_region_std(cube: &HyperCube, roi: &RegionOfInterest) -> Result<Vec<BandStd>> {
    let (r0, r1, c0, c1) = roi.to_pixels(cube)?;
    let n = ((r1 - r0) * (c1 - c0)) as f64;
    if n < 2.0 {
        return Err(validation("region of interest needs at least two pixels"));
    }
    Ok(cube
        .data()
        .axis_iter(Axis(0))
        .map(|band| {
            let region = band.slice(ndarray::s![r0..r1, c0..c1]);
            let mean = region.sum() / n;
            let var = region.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let std = var.sqrt();
            BandStd { std, log10_std: std.log10() }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sharpness {
    /// `None` when the profile has no extremum pair (flat or strictly monotone).
    pub distance_mm: Option<f64>,
    pub max_position: Option<usize>,
    pub min_position: Option<usize>,
    /// Set when the value is unreliable: the profile is rough relative to
    /// its range, or it is not monotone between the chosen extrema.
    pub flagged: bool,
}

/// Distance between the closest high and low peak of a profile.
///
/// Peaks are the samples within `tolerance · range` of the profile maximum
/// and minimum; among all (high, low) pairs the closest wins, ties going to
/// the first in scan order.
pub fn profile_sharpness(profile: &[f64], step: f64, tolerance: f64) -> Sharpness {
    let missing = Sharpness { distance_mm: None, max_position: None, min_position: None, flagged: true };
    if profile.len() < 2 || profile.iter().any(|v| !v.is_finite()) {
        return missing;
    }
    let (lo, hi) = min_max(profile.iter().copied());
    let range = hi - lo;
    let diffs: Vec<f64> = profile.windows(2).map(|w| w[1] - w[0]).collect();
    let strictly_monotone = diffs.iter().all(|&d| d > 0.0) || diffs.iter().all(|&d| d < 0.0);
    if range <= 0.0 || strictly_monotone {
        return missing;
    }
    let highs: Vec<usize> = (0..profile.len()).filter(|&i| profile[i] >= hi - tolerance * range).collect();
    let lows: Vec<usize> = (0..profile.len()).filter(|&i| profile[i] <= lo + tolerance * range).collect();
    let mut best: Option<(usize, usize, usize)> = None;
    for &h in &highs {
        for &l in &lows {
            let d = h.abs_diff(l);
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, h, l));
            }
        }
    }
    let Some((d, h, l)) = best else { return missing };
    let (a, b) = (h.min(l), h.max(l));
    let segment = &diffs[a..b];
    let monotone = segment.iter().all(|&x| x >= 0.0) || segment.iter().all(|&x| x <= 0.0);
    let mut abs_diffs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    abs_diffs.sort_by(f64::total_cmp);
    let rough = abs_diffs[abs_diffs.len() / 2] > tolerance * range;
    Sharpness {
        distance_mm: Some(d as f64 * step),
        max_position: Some(h),
        min_position: Some(l),
        flagged: rough || !monotone,
    }
}

/// Per-band [`profile_sharpness`] along a cross-section.
pub fn feature_sharpness(cube: &HyperCube, section: &CrossSection, tolerance: f64) -> Result<Vec<Sharpness>> {
    if !(tolerance > 0.0 && tolerance < 0.5) {
        return Err(validation(format!("sharpness tolerance must lie in (0, 0.5), got {tolerance}")));
    }
    section.validate(cube.height(), cube.width())?;
    let step = section.step(cube);
    (0..cube.bands())
        .map(|i| Ok(profile_sharpness(&section.profile(cube.band(i)?)?, step, tolerance)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mse_per_band: Vec<f64>,
    /// `+∞` for identical bands.
    pub psnr_per_band: Vec<f64>,
    pub mse: f64,
    pub psnr: f64,
    pub mean_psnr: f64,
    pub peak: f64,
}

/// Converts an infinite PSNR to the CSV sentinel.
pub fn psnr_for_csv(psnr: f64) -> f64 {
    if psnr.is_infinite() && psnr > 0.0 {
        PSNR_SENTINEL_DB
    } else {
        psnr
    }
}

fn psnr(peak: f64, mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// MSE and PSNR against `reference`, with the peak taken as `max(reference)`.
pub fn mse_psnr(cube: &HyperCube, reference: &HyperCube) -> Result<ErrorMetrics> {
    if cube.data().dim() != reference.data().dim() {
        return Err(Error::DimensionMismatch(format!(
            "cube {:?} vs reference {:?}",
            cube.data().dim(),
            reference.data().dim()
        )));
    }
    let peak = reference.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mse_per_band: Vec<f64> = cube
        .data()
        .axis_iter(Axis(0))
        .zip(reference.data().axis_iter(Axis(0)))
        .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
        .collect();
    let psnr_per_band: Vec<f64> = mse_per_band.iter().map(|&m| psnr(peak, m)).collect();
    let mse = mse_per_band.iter().sum::<f64>() / mse_per_band.len() as f64;
    let mean_psnr = psnr_per_band.iter().sum::<f64>() / psnr_per_band.len() as f64;
    Ok(ErrorMetrics { psnr: psnr(peak, mse), mse_per_band, psnr_per_band, mse, mean_psnr, peak })
}

/// Mean trapezoidal amplitude over the bands with `f_lo ≤ f ≤ f_hi`,
/// divided by the frequency span of those bands. A single band is returned as is.
pub fn integrate_range(cube: &HyperCube, f_lo: f64, f_hi: f64) -> Result<Array2<f64>> {
    if !(f_lo <= f_hi) || !f_lo.is_finite() || !f_hi.is_finite() {
        return Err(validation(format!("invalid frequency range [{f_lo}, {f_hi}]")));
    }
    let inside: Vec<usize> = (0..cube.bands())
        .filter(|&i| (f_lo..=f_hi).contains(&cube.frequencies()[i]))
        .collect();
    let (first, last) = match (inside.first(), inside.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => {
            return Err(Error::Domain(format!(
                "no band lies in [{f_lo}, {f_hi}] THz (cube covers {:.3}..{:.3} THz)",
                cube.frequencies()[0],
                cube.frequencies()[cube.bands() - 1]
            )))
        }
    };
    let f = cube.frequencies();
    let data = cube.data();
    if first == last {
        return Ok(data.index_axis(Axis(0), first).to_owned());
    }
    let mut acc = Array2::<f64>::zeros((cube.height(), cube.width()));
    for i in first..last {
        let half_width = 0.5 * (f[i + 1] - f[i]);
        acc.scaled_add(half_width, &data.index_axis(Axis(0), i));
        acc.scaled_add(half_width, &data.index_axis(Axis(0), i + 1));
    }
    Ok(acc / (f[last] - f[first]))
}

/// Maps an image linearly onto `[0, 1]`; a constant image maps to 0.
pub fn min_max_normalize(image: ArrayView2<'_, f64>) -> Array2<f64> {
    let (lo, hi) = min_max(image.iter().copied());
    if hi > lo {
        image.mapv(|v| (v - lo) / (hi - lo))
    } else {
        Array2::zeros(image.dim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FalseColorRanges {
    pub red: (f64, f64),
    pub green: (f64, f64),
    pub blue: (f64, f64),
}

impl Default for FalseColorRanges {
    fn default() -> Self {
        Self { red: FALSE_COLOR_RED, green: FALSE_COLOR_GREEN, blue: FALSE_COLOR_BLUE }
    }
}

/// Normalised channel images (each in `[0, 1]`) of the false-colour composite.
pub fn false_color_channels(cube: &HyperCube, ranges: &FalseColorRanges) -> Result<[Array2<f64>; 3]> {
    let channel = |(lo, hi): (f64, f64)| integrate_range(cube, lo, hi).map(|img| min_max_normalize(img.view()));
    Ok([channel(ranges.red)?, channel(ranges.green)?, channel(ranges.blue)?])
}

/// Interleaved 8-bit RGB pixels, row-major.
pub fn false_color(cube: &HyperCube, ranges: &FalseColorRanges) -> Result<Vec<u8>> {
    let channels = false_color_channels(cube, ranges)?;
    let mut out = Vec::with_capacity(3 * cube.pixels());
    for ((r, g), b) in channels[0].iter().zip(channels[1].iter()).zip(channels[2].iter()) {
        out.extend([level_u8(*r), level_u8(*g), level_u8(*b)]);
    }
    Ok(out)
}

/// 10–90 % rise distance (mm) of the edge with the steepest step in `profile`,
/// with linear interpolation between samples. `None` without a crossing.
pub fn rise_distance(profile: ArrayView1<'_, f64>, step: f64) -> Option<f64> {
    let p = profile.to_vec();
    if p.len() < 2 || p.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let (lo, hi) = min_max(p.iter().copied());
    let range = hi - lo;
    if range <= 0.0 {
        return None;
    }
    let k = steepest_step(&p);
    // Orient the profile so the edge rises.
    let rising = p[k + 1] > p[k];
    let v = |i: usize| if rising { p[i] } else { -p[i] };
    let (l10, l90) = if rising {
        (lo + 0.1 * range, lo + 0.9 * range)
    } else {
        (-(hi - 0.1 * range), -(hi - 0.9 * range))
    };
    let below = (0..=k).rev().find(|&i| v(i) <= l10)?;
    let above = (k + 1..p.len()).find(|&i| v(i) >= l90)?;
    let cross = |level: f64, from: usize, dir_up: bool| -> Option<f64> {
        // Walk from `from` towards the edge until the level is crossed.
        let mut i = from;
        loop {
            let j = if dir_up { i + 1 } else { i.checked_sub(1)? };
            if j >= p.len() {
                return None;
            }
            let (a, b) = (v(i), v(j));
            if (a - level) * (b - level) <= 0.0 && a != b {
                let t = (level - a) / (b - a);
                return Some(i as f64 + if dir_up { t } else { -t });
            }
            i = j;
        }
    };
    let x10 = cross(l10, below, true)?;
    let x90 = cross(l90, above, false)?;
    Some((x90 - x10).abs() * step)
}

/// Index `i` maximising `|p[i+1] − p[i]|` (first on ties).
pub fn steepest_step(p: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..p.len().saturating_sub(1) {
        if (p[i + 1] - p[i]).abs() > (p[best + 1] - p[best]).abs() {
            best = i;
        }
    }
    best
}

/// Mean structural similarity over all `win × win` windows (uniform weights),
/// with stabilisers `(0.01 L)²` and `(0.03 L)²` for data range `L`.
pub fn ssim(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, data_range: f64, win: usize) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    let (ny, nx) = a.dim();
    if win == 0 || ny < win || nx < win {
        return Err(validation(format!("SSIM window {win} does not fit a {ny}×{nx} image")));
    }
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let n = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=ny - win {
        for c in 0..=nx - win {
            let wa = a.slice(ndarray::s![r..r + win, c..c + win]);
            let wb = b.slice(ndarray::s![r..r + win, c..c + win]);
            let (ma, mb) = (wa.sum() / n, wb.sum() / n);
            let mut va = 0.0;
            let mut vb = 0.0;
            let mut cov = 0.0;
            for (x, y) in wa.iter().zip(wb.iter()) {
                va += (x - ma).powi(2);
                vb += (y - mb).powi(2);
                cov += (x - ma) * (y - mb);
            }
            let (va, vb, cov) = (va / (n - 1.0), vb / (n - 1.0), cov / (n - 1.0));
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}
