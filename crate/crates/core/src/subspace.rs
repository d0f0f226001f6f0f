//! Signal-subspace identification for hyperspectral cubes.
//!
//! A clean cube `X` (bands × pixels) is assumed to live in a low-dimensional
//! subspace, `X = E·A`, where the columns of `E` are orthonormal spectral
//! signatures and the rows of `A` are eigen-images. Noise is estimated by
//! regressing each band on all the others; the subspace is the leading
//! eigenvectors of the noise-whitened band correlation matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::HyperCube;
use crate::error::{validation, Error, Result};

/// Margin above the noise floor for automatic dimension selection.
pub const AUTO_MARGIN: f64 = 0.05;

/// Relative eigenvalue cut-off of the pseudo-inverse used by the band regressions.
const PINV_CUTOFF: f64 = 1e-11;

/// Standard deviations below this fraction of the cube RMS are raised to it
/// before whitening.
pub const WHITENING_FLOOR: f64 = 1e-6;

const NOISE_REFINE_PASSES: usize = 4;

/// Per-band noise standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub sigma_per_band: Vec<f64>,
}

impl NoiseEstimate {
    pub fn uniform(bands: usize, sigma: f64) -> Self {
        Self { sigma_per_band: vec![sigma; bands] }
    }

    /// Root-mean-square of the per-band values.
    pub fn rms(&self) -> f64 {
        let n = self.sigma_per_band.len() as f64;
        (self.sigma_per_band.iter().map(|s| s * s).sum::<f64>() / n).sqrt()
    }
}

/// Requested subspace dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceDim {
    Auto,
    Fixed(usize),
}

/// Orthonormal basis `E` (bands × p) plus the full eigenvalue spectrum it was cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    matrix: Array2<f64>,
    eigenvalues: Vec<f64>,
}

impl SubspaceBasis {
    /// Wraps a matrix whose columns must already be orthonormal.
    pub fn from_orthonormal(matrix: Array2<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        let p = matrix.ncols();
        if p == 0 || p > matrix.nrows() {
            return Err(validation(format!("basis of {p} columns in {} bands", matrix.nrows())));
        }
        let gram = matrix.t().dot(&matrix);
        let err = gram
            .indexed_iter()
            .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        if err > 1e-8 {
            return Err(validation(format!("basis columns are not orthonormal (max error {err:e})")));
        }
        Ok(Self { matrix, eigenvalues })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn bands(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Eigenvalues of the whitened correlation matrix, non-increasing, all `bands` of them.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn column(&self, i: usize) -> ArrayView1<'_, f64> {
        self.matrix.column(i)
    }
}

/// Eigen-images `A` (p × pixels) with the spatial metadata of their cube.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenImageSet {
    coefficients: Array2<f64>,
    height: usize,
    width: usize,
    step_x: f64,
    step_y: f64,
    frequencies: Vec<f64>,
}

impl EigenImageSet {
    pub fn coefficients(&self) -> &Array2<f64> {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn step_x(&self) -> f64 {
        self.step_x
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Eigen-image `i` as a `height × width` view.
    pub fn image(&self, i: usize) -> ArrayView2<'_, f64> {
        self.coefficients
            .row(i)
            .into_shape_with_order((self.height, self.width))
            .expect("rows are contiguous")
    }

    /// Same metadata, new images (one per component).
    pub fn with_images(&self, images: &[Array2<f64>]) -> Result<Self> {
        if images.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} images for {} components",
                images.len(),
                self.len()
            )));
        }
        let n = self.height * self.width;
        let mut coefficients = Array2::zeros((images.len(), n));
        for (mut row, img) in coefficients.axis_iter_mut(Axis(0)).zip(images) {
            if img.dim() != (self.height, self.width) {
                return Err(Error::DimensionMismatch(format!(
                    "image {:?} in a {}x{} set",
                    img.dim(),
                    self.height,
                    self.width
                )));
            }
            row.iter_mut().zip(img.iter()).for_each(|(d, s)| *d = *s);
        }
        Ok(Self { coefficients, ..self.clone() })
    }

    /// Copies of every eigen-image.
    pub fn images(&self) -> Vec<Array2<f64>> {
        (0..self.len()).map(|i| self.image(i).to_owned()).collect()
    }

    /// Zeroes the listed components.
    pub fn zero_components(&self, indices: &[usize]) -> Self {
        let mut out = self.clone();
        for &i in indices {
            if i < out.len() {
                out.coefficients.row_mut(i).fill(0.0);
            }
        }
        out
    }
}

/// Symmetric Gram matrix `M Mᵀ` of the rows; each entry is one sequential dot
/// product so the result does not depend on the thread count.
pub fn gram(matrix: &Array2<f64>) -> Array2<f64> {
    let b = matrix.nrows();
    let rows: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|i| (i..b).map(|j| matrix.row(i).dot(&matrix.row(j))).collect())
        .collect();
    let mut g = Array2::zeros((b, b));
    for (i, row) in rows.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            g[[i, i + k]] = v;
            g[[i + k, i]] = v;
        }
    }
    g
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues non-increasing.
pub(crate) fn sym_eigen(m: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, c)| eig.eigenvectors[(i, order[c])]);
    (values, vectors)
}

/// Flips each column so its largest-magnitude entry (first on ties) is non-negative.
pub(crate) fn fix_signs(matrix: &mut Array2<f64>) {
    for mut col in matrix.axis_iter_mut(Axis(1)) {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

/// Per-band noise by multiple regression of each band on all other bands.
///
/// The plain regression residual overstates the noise of quiet bands because
/// the regressors carry noise too. Starting from it, each pass regresses band
/// `i` on the signal eigencomponents of the whitened remaining bands, using the
/// noise-deflated component variances `λ − 1`, which removes that bias.
pub fn estimate_noise(cube: &HyperCube) -> Result<NoiseEstimate> {
    let b = cube.bands();
    if b < 3 {
        return Err(validation(format!("noise estimation needs at least 3 bands, got {b}")));
    }
    let y = cube.to_matrix();
    let n = y.ncols();
    let r = gram(&y);
    let plain: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|i| {
            let others: Vec<usize> = (0..b).filter(|&j| j != i).collect();
            let sub = Array2::from_shape_fn((b - 1, b - 1), |(p, q)| r[[others[p], others[q]]]);
            let rhs = Array1::from_shape_fn(b - 1, |p| r[[others[p], i]]);
            let beta = pinv_solve(&sub, &rhs);
            let mut residual = y.row(i).to_owned();
            for (k, &j) in others.iter().enumerate() {
                residual.scaled_add(-beta[k], &y.row(j));
            }
            residual.dot(&residual) / n as f64
        })
        .collect();

    let c = r.mapv(|v| v / n as f64);
    let scale = c.diag().iter().sum::<f64>() / b as f64;
    let floor = (WHITENING_FLOOR * WHITENING_FLOOR * scale).max(f64::MIN_POSITIVE);
    let edge = (1.0 + AUTO_MARGIN) * noise_eigen_floor(b - 1, n);
    let mut var = plain.clone();
    for _ in 0..NOISE_REFINE_PASSES {
        let current = var.clone();
        var = (0..b)
            .into_par_iter()
            .map(|i| {
                if plain[i] <= floor {
                    return plain[i];
                }
                let others: Vec<usize> = (0..b).filter(|&j| j != i).collect();
                let w: Vec<f64> = others.iter().map(|&j| 1.0 / current[j].max(floor).sqrt()).collect();
                let m = Array2::from_shape_fn((b - 1, b - 1), |(p, q)| c[[others[p], others[q]]] * w[p] * w[q]);
                let cross = Array1::from_shape_fn(b - 1, |p| c[[others[p], i]] * w[p]);
                let (values, vectors) = sym_eigen(&m);
                let fit: f64 = values
                    .iter()
                    .enumerate()
                    .take_while(|(_, &l)| l > edge)
                    .map(|(k, &l)| vectors.column(k).dot(&cross).powi(2) / (l - 1.0))
                    .sum();
                (c[[i, i]] - fit).clamp(0.0, plain[i])
            })
            .collect();
    }
    Ok(NoiseEstimate { sigma_per_band: var.into_iter().map(f64::sqrt).collect() })
}

/// Minimum-norm least-squares solve of `S x = r` for symmetric positive semi-definite `S`.
fn pinv_solve(s: &Array2<f64>, rhs: &Array1<f64>) -> Array1<f64> {
    let (values, vectors) = sym_eigen(s);
    let cutoff = PINV_CUTOFF * values.first().copied().unwrap_or(0.0).max(0.0);
    let mut x = Array1::zeros(rhs.len());
    for (k, &lambda) in values.iter().enumerate() {
        if lambda > cutoff && lambda > 0.0 {
            let v = vectors.column(k);
            x.scaled_add(v.dot(rhs) / lambda, &v);
        }
    }
    x
}

/// Per-band whitening scales: the noise estimate raised to a small fraction of the cube RMS.
pub fn whitening_scales(cube: &HyperCube, noise: &NoiseEstimate) -> Result<Vec<f64>> {
    if noise.sigma_per_band.len() != cube.bands() {
        return Err(Error::DimensionMismatch(format!(
            "{} noise levels for {} bands",
            noise.sigma_per_band.len(),
            cube.bands()
        )));
    }
    let len = cube.data().len() as f64;
    let rms = (cube.data().iter().map(|v| v * v).sum::<f64>() / len).sqrt();
    let floor = if rms > 0.0 { WHITENING_FLOOR * rms } else { WHITENING_FLOOR };
    Ok(noise.sigma_per_band.iter().map(|&s| s.max(floor)).collect())
}

/// Noise floor of the largest eigenvalue of a whitened `bands × pixels`
/// sample correlation matrix of pure unit-variance noise.
pub fn noise_eigen_floor(bands: usize, pixels: usize) -> f64 {
    (1.0 + (bands as f64 / pixels as f64).sqrt()).powi(2)
}

/// Learns the signal subspace of `cube`.
///
/// Eigen-decomposes the correlation matrix of the noise-whitened data; with
/// [`SubspaceDim::Auto`] keeps the eigenvalues above `(1 + AUTO_MARGIN)`
/// times the noise floor. The kept eigenvectors are mapped back through the
/// whitening and re-orthonormalised, so the basis spans the signal subspace
/// in the original band coordinates.
pub fn learn_subspace(cube: &HyperCube, dim: SubspaceDim, noise: &NoiseEstimate) -> Result<SubspaceBasis> {
    let b = cube.bands();
    let scales = whitening_scales(cube, noise)?;
    let mut y = cube.to_matrix();
    for (mut row, s) in y.axis_iter_mut(Axis(0)).zip(&scales) {
        row.mapv_inplace(|v| v / s);
    }
    let n = y.ncols();
    let corr = gram(&y) / n as f64;
    let (values, vectors) = sym_eigen(&corr);
    let p = match dim {
        SubspaceDim::Fixed(p) if p == 0 || p > b => {
            return Err(validation(format!("subspace dimension {p} outside [1, {b}]")))
        }
        SubspaceDim::Fixed(p) => p,
        SubspaceDim::Auto => {
            let threshold = (1.0 + AUTO_MARGIN) * noise_eigen_floor(b, n);
            values.iter().filter(|&&v| v > threshold).count().clamp(1, b)
        }
    };
    let mut e = Array2::from_shape_fn((b, p), |(i, c)| vectors[[i, c]] * scales[i]);
    orthonormalize(&mut e);
    fix_signs(&mut e);
    SubspaceBasis::from_orthonormal(e, values)
}

/// Modified Gram–Schmidt on the columns (two passes for stability).
fn orthonormalize(m: &mut Array2<f64>) {
    let p = m.ncols();
    for k in 0..p {
        for _ in 0..2 {
            for j in 0..k {
                let proj = m.column(j).dot(&m.column(k));
                let prev = m.column(j).to_owned();
                m.column_mut(k).scaled_add(-proj, &prev);
            }
        }
        let norm = m.column(k).dot(&m.column(k)).sqrt();
        m.column_mut(k).mapv_inplace(|v| v / norm);
    }
}

/// Eigen-images `A = Eᵀ Y`.
pub fn project(cube: &HyperCube, basis: &SubspaceBasis) -> Result<EigenImageSet> {
    if basis.bands() != cube.bands() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} bands, cube has {}",
            basis.bands(),
            cube.bands()
        )));
    }
    let coefficients = basis.matrix().t().dot(&cube.to_matrix());
    Ok(EigenImageSet {
        coefficients,
        height: cube.height(),
        width: cube.width(),
        step_x: cube.step_x(),
        step_y: cube.step_y(),
        frequencies: cube.frequencies().to_vec(),
    })
}

/// Cube `X = E A` with the eigen-images' metadata.
pub fn reconstruct(basis: &SubspaceBasis, eigen: &EigenImageSet) -> Result<HyperCube> {
    if basis.dim() != eigen.len() || basis.bands() != eigen.frequencies.len() {
        return Err(Error::DimensionMismatch(format!(
            "basis {}x{} vs {} eigen-images over {} bands",
            basis.bands(),
            basis.dim(),
            eigen.len(),
            eigen.frequencies.len()
        )));
    }
    let x = basis.matrix().dot(eigen.coefficients());
    let data = x
        .into_shape_with_order((basis.bands(), eigen.height, eigen.width))
        .expect("matrix product has bands × pixels entries");
    HyperCube::new(eigen.frequencies.clone(), eigen.step_x, eigen.step_y, data)
}

/// Summary of one subspace component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentInfo {
    pub index: usize,
    /// Share of the total eigenvalue mass.
    pub energy_fraction: f64,
    /// Frequency weighted by the squared loadings of the basis column (THz).
    pub effective_frequency: f64,
    /// Mean gradient magnitude of the eigen-image over its standard deviation.
    pub edge_energy: f64,
}

pub fn component_report(
    basis: &SubspaceBasis,
    eigen: &EigenImageSet,
    frequencies: &[f64],
) -> Result<Vec<ComponentInfo>> {
    if frequencies.len() != basis.bands() || eigen.len() != basis.dim() {
        return Err(Error::DimensionMismatch("report inputs disagree in size".into()));
    }
    let total: f64 = basis.eigenvalues().iter().map(|v| v.max(0.0)).sum();
    Ok((0..basis.dim())
        .map(|i| {
            let col = basis.column(i);
            let weight: f64 = col.iter().map(|e| e * e).sum();
            let eff: f64 = col.iter().zip(frequencies).map(|(e, f)| e * e * f).sum::<f64>() / weight;
            let lambda = basis.eigenvalues().get(i).copied().unwrap_or(0.0).max(0.0);
            ComponentInfo {
                index: i,
                energy_fraction: if total > 0.0 { lambda / total } else { 0.0 },
                effective_frequency: eff,
                edge_energy: edge_energy(eigen.image(i)),
            }
        })
        .collect())
}

/// Mean forward-difference gradient magnitude divided by the image standard deviation.
pub fn edge_energy(image: ArrayView2<'_, f64>) -> f64 {
    let (ny, nx) = image.dim();
    let n = (ny * nx) as f64;
    let mean = image.sum() / n;
    let sd = (image.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for r in 0..ny {
        for c in 0..nx {
            let gx = if c + 1 < nx { image[[r, c + 1]] - image[[r, c]] } else { 0.0 };
            let gy = if r + 1 < ny { image[[r + 1, c]] - image[[r, c]] } else { 0.0 };
            acc += (gx * gx + gy * gy).sqrt();
        }
    }
    acc / n / sd
}
