#![allow(dead_code)]

use ndarray::{Array2, Array3};
use thz_restore::forward::{phantom_mask, Contrast, PhantomKind, PhantomSpec};
use thz_restore::HyperCube;

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Orthonormal `b × p` matrix from smooth spectral shapes (Gram–Schmidt).
pub fn smooth_orthonormal(b: usize, p: usize) -> Array2<f64> {
    let mut e = Array2::from_shape_fn((b, p), |(i, k)| {
        let t = i as f64 / (b - 1) as f64;
        match k {
            0 => 1.0 + 0.5 * t,
            1 => (std::f64::consts::PI * t).cos(),
            2 => (2.0 * std::f64::consts::PI * t).cos() + 0.3 * t,
            _ => ((k as f64 + 1.0) * 1.7 * t).sin() + 0.1 * k as f64,
        }
    });
    for k in 0..p {
        for j in 0..k {
            let d = e.column(j).dot(&e.column(k));
            let prev = e.column(j).to_owned();
            e.column_mut(k).scaled_add(-d, &prev);
        }
        let n = e.column(k).dot(&e.column(k)).sqrt();
        e.column_mut(k).mapv_inplace(|v| v / n);
    }
    e
}

/// Three piecewise-constant abundance images: disk, rings and bars.
pub fn abundance_images(ny: usize, nx: usize) -> Vec<Array2<f64>> {
    let r = ny.min(nx) as f64;
    let masks = [
        phantom_mask(&PhantomKind::DiskHole { radius_px: 0.3 * r }, ny, nx),
        phantom_mask(&PhantomKind::Rings { ring_width_px: r / 10.0, outer_radius_px: 0.42 * r }, ny, nx),
        phantom_mask(&PhantomKind::Bars { bar_width_px: (nx / 8).max(1) }, ny, nx),
    ];
    masks
        .iter()
        .map(|m| m.mapv(|inside| if inside { 1.0 } else { 0.0 }))
        .collect()
}

/// Rank-3 cube `X = E₀ A₀` with non-negative spectra over `b` bands.
pub fn rank3_cube(b: usize, ny: usize, nx: usize, freqs: &[f64]) -> HyperCube {
    let imgs = abundance_images(ny, nx);
    let spectra: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            (0..b)
                .map(|i| {
                    let t = i as f64 / (b - 1).max(1) as f64;
                    match k {
                        0 => 1.0 - 0.5 * t,
                        1 => 0.2 + 0.5 * t,
                        _ => 0.3 + 0.25 * (3.0 * t).sin(),
                    }
                })
                .collect()
        })
        .collect();
    let mut data = Array3::zeros((b, ny, nx));
    for i in 0..b {
        for (spectrum, img) in spectra.iter().zip(&imgs) {
            let mut band = data.index_axis_mut(ndarray::Axis(0), i);
            band.scaled_add(spectrum[i], img);
        }
    }
    data.mapv_inplace(|v| 0.2 + 0.5 * v);
    HyperCube::new(freqs.to_vec(), 0.2, 0.2, data).unwrap()
}

/// Cube `E A` for a given basis and images.
pub fn cube_from_factors(e: &Array2<f64>, imgs: &[Array2<f64>], freqs: &[f64], step: f64) -> HyperCube {
    let (ny, nx) = imgs[0].dim();
    let a = Array2::from_shape_fn((imgs.len(), ny * nx), |(k, j)| imgs[k][[j / nx, j % nx]]);
    let x = e.dot(&a).into_shape_with_order((e.nrows(), ny, nx)).unwrap();
    HyperCube::new(freqs.to_vec(), step, step, x).unwrap()
}

pub fn disk_spec(frequencies: Vec<f64>, n: usize, step: f64, radius_px: f64) -> PhantomSpec {
    PhantomSpec {
        kind: PhantomKind::DiskHole { radius_px },
        height: n,
        width: n,
        step,
        frequencies,
        background: Contrast::Constant { value: 1.0 },
        foreground: Contrast::Constant { value: 0.0 },
    }
}

pub fn mse(a: &HyperCube, b: &HyperCube) -> f64 {
    let n = a.data().len() as f64;
    a.data().iter().zip(b.data().iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n
}

pub fn frob(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Disk phantom used for the joint-restoration comparisons: 30 bands over
/// the forward-validation span, ramp foreground on a unit background.
pub fn joint_fixture_spec() -> PhantomSpec {
    let mut spec = disk_spec(linspace(0.97, 3.11, 30), 64, 0.2, 16.0);
    spec.foreground = Contrast::Ramp { start: 0.1, end: 0.4 };
    spec
}

/// Restoration settings for [`joint_fixture_spec`]: ten components and
/// Wiener deconvolution with the noise-derived ratio.
pub fn joint_fixture_config() -> thz_restore::pipeline::RestorationConfig {
    thz_restore::pipeline::RestorationConfig {
        p: thz_restore::subspace::SubspaceDim::Fixed(10),
        deblur: thz_restore::deblur::DeblurMethod::Wiener { nsr: None },
        ..Default::default()
    }
}
