mod common;

use common::*;
use ndarray::{s, Array2, Array3, ArrayView1};
use proptest::prelude::*;
use thz_restore::beam::{
    beam_radius, beam_waist, intensity, synthesize_psf, wavelength_from_frequency, BeamGeometry, BeamParams, Psf,
    DEFAULT_TRUNCATION,
};
use thz_restore::forward::{add_noise, blur_cube, generate_phantom, simulate, Contrast, NoiseModel, PhantomKind};
use thz_restore::io::{decode_cube, encode_cube, normalize_to_u8, read_cube, write_cube};
use thz_restore::metrics::rise_distance;
use thz_restore::HyperCube;

fn small_cube() -> impl Strategy<Value = HyperCube> {
    (1usize..4, 1usize..6, 1usize..6).prop_flat_map(|(b, ny, nx)| {
        prop::collection::vec(-1e3f32..1e3f32, b * ny * nx).prop_map(move |vals| {
            let data = Array3::from_shape_vec((b, ny, nx), vals.into_iter().map(f64::from).collect()).unwrap();
            let freqs = (0..b).map(|i| 0.3 + 0.7 * i as f64).collect();
            HyperCube::new(freqs, 0.5, 0.5, data).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn container_round_trip_is_identity(cube in small_cube()) {
        let bytes = encode_cube(&cube).unwrap();
        let back = decode_cube(&bytes).unwrap();
        prop_assert_eq!(back, cube);
    }

    #[test]
    fn psf_is_symmetric_and_normalised(f in 0.1f64..20.0, step in 0.05f64..2.0, z in -20.0f64..20.0) {
        let psf = synthesize_psf(f, &BeamGeometry::default(), step, z, DEFAULT_TRUNCATION).unwrap();
        let k = psf.kernel();
        prop_assert!((k.sum() - 1.0).abs() < 1e-9);
        let n = k.nrows();
        prop_assert_eq!(n % 2, 1);
        for ((r, c), &v) in k.indexed_iter() {
            prop_assert_eq!(v, k[[n - 1 - r, c]]);
            prop_assert_eq!(v, k[[r, n - 1 - c]]);
            prop_assert_eq!(v, k[[c, r]]);
        }
    }

    #[test]
    fn radius_is_even_in_z(f in 0.1f64..10.0, z in 0.0f64..50.0) {
        let params = BeamParams::at_frequency(f, &BeamGeometry::default()).unwrap();
        prop_assert_eq!(beam_radius(z, &params), beam_radius(-z, &params));
    }

    #[test]
    fn export_normalisation_ignores_scale(
        vals in prop::collection::vec(-10.0f64..10.0, 12),
        a in 0.01f64..100.0,
        b in -50.0f64..50.0,
    ) {
        let img = Array2::from_shape_vec((3, 4), vals).unwrap();
        let scaled = img.mapv(|v| a * v + b);
        let p = normalize_to_u8(img.view());
        let q = normalize_to_u8(scaled.view());
        for (x, y) in p.iter().zip(&q) {
            prop_assert!((*x as i32 - *y as i32).abs() <= 1);
        }
    }

    #[test]
    fn blur_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let freqs = vec![0.5, 1.5];
        let (ny, nx) = (17, 19);
        let x1 = Array3::from_shape_fn((2, ny, nx), |(i, r, c)| ((seed as usize + 3 * i + 5 * r + 7 * c) % 11) as f64);
        let x2 = Array3::from_shape_fn((2, ny, nx), |(i, r, c)| ((seed as usize * 13 + i + r * c) % 5) as f64 - 2.0);
        let mk = |d: Array3<f64>| HyperCube::new(freqs.clone(), 0.2, 0.2, d).unwrap();
        let geom = BeamGeometry::default();
        let lhs = blur_cube(&mk(&x1 * a + &x2 * b), &geom, 0.0).unwrap();
        let r1 = blur_cube(&mk(x1.clone()), &geom, 0.0).unwrap();
        let r2 = blur_cube(&mk(x2.clone()), &geom, 0.0).unwrap();
        let rhs = r1.data() * a + r2.data() * b;
        for (u, v) in lhs.data().iter().zip(rhs.iter()) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }
}

#[test]
fn psf_sigma_decreases_with_frequency() {
    let geom = BeamGeometry::default();
    let mut prev = f64::INFINITY;
    for f in [0.28, 0.38, 1.1, 2.1, 3.3, 4.87, 5.85] {
        let s = synthesize_psf(f, &geom, 0.2, 0.0, DEFAULT_TRUNCATION).unwrap().sigma();
        assert!(s < prev, "sigma {s} at {f} THz");
        prev = s;
    }
}

#[test]
fn waist_oracle_at_one_thz() {
    // w0 = (2/π)·λ·4 with λ = c/f, evaluated independently.
    let lambda = 299.792458 / 1000.0;
    let w0 = 8.0 * lambda / std::f64::consts::PI;
    let got = beam_waist(wavelength_from_frequency(1.0).unwrap(), &BeamGeometry::default());
    assert!((got - w0).abs() < 1e-12);
    assert!((got - 0.7634).abs() < 1e-4);
}

#[test]
fn intensity_is_conserved_off_focus() {
    let params = BeamParams::new(0.3, 0.76).unwrap();
    for z in [0.0, 3.0, 12.0] {
        let w = beam_radius(z, &params);
        // Radial quadrature of 2πr·I(r) out to 8 beam radii.
        let n = 20_000;
        let dr = 8.0 * w / n as f64;
        let total: f64 = (0..n)
            .map(|i| {
                let r = (i as f64 + 0.5) * dr;
                2.0 * std::f64::consts::PI * r * intensity(r, z, 2.5, &params) * dr
            })
            .sum();
        assert!((total / 2.5 - 1.0).abs() < 1e-6, "z={z}: {total}");
    }
}

#[test]
fn blur_commutes_with_flips() {
    let freqs = vec![0.8];
    let img = Array3::from_shape_fn((1, 20, 24), |(_, r, c)| ((r * 3 + c * c) % 17) as f64);
    let cube = HyperCube::new(freqs.clone(), 0.2, 0.2, img.clone()).unwrap();
    let flipped = HyperCube::new(freqs, 0.2, 0.2, img.slice(s![.., ..;-1, ..]).to_owned()).unwrap();
    let geom = BeamGeometry::default();
    let a = blur_cube(&cube, &geom, 0.0).unwrap();
    let b = blur_cube(&flipped, &geom, 0.0).unwrap();
    let a_flipped = a.data().slice(s![.., ..;-1, ..]).to_owned();
    for (u, v) in a_flipped.iter().zip(b.data().iter()) {
        assert!((u - v).abs() < 1e-9);
    }
}

#[test]
fn simulated_disk_edges_sharpen_with_frequency() {
    let spec = disk_spec(vec![0.97, 1.94, 3.11], 64, 0.2, 16.0);
    let (_, degraded) = simulate(&spec, &BeamGeometry::default(), &NoiseModel::gaussian_iid(0.0, 0), 0.0).unwrap();
    let rises: Vec<f64> = (0..3)
        .map(|i| {
            let band = degraded.band(i).unwrap();
            rise_distance(band.slice(s![32, 2..32]), 0.2).unwrap()
        })
        .collect();
    assert!(rises[0] > rises[1] && rises[1] > rises[2], "{rises:?}");
}

#[test]
fn snr_falls_as_sigma_grows() {
    let spec = disk_spec(vec![1.0, 2.0], 64, 0.2, 16.0);
    let clean = generate_phantom(&spec).unwrap();
    let snr = |sigma: f64| {
        let noisy = add_noise(&clean, &NoiseModel::gaussian_iid(sigma, 3)).unwrap();
        let signal: f64 = clean.data().iter().map(|v| v * v).sum();
        let noise: f64 = noisy.data().iter().zip(clean.data().iter()).map(|(a, b)| (a - b).powi(2)).sum();
        signal / noise
    };
    assert!(snr(0.01) > snr(0.1));
}

#[test]
fn rising_noise_leaves_low_bands_blur_dominated() {
    // Noise growing with frequency: the blur error dominates the lowest band
    // and the noise error dominates the highest.
    let freqs = linspace(0.3, 3.0, 10);
    let spec = disk_spec(freqs.clone(), 64, 0.2, 16.0);
    let clean = generate_phantom(&spec).unwrap();
    let geom = BeamGeometry::default();
    let blurred = blur_cube(&clean, &geom, 0.0).unwrap();
    let sigmas = linspace(0.005, 0.1, 10);
    let noisy = add_noise(&blurred, &NoiseModel::gaussian_noniid(sigmas, 5)).unwrap();
    let energy = |a: ndarray::ArrayView2<f64>, b: ndarray::ArrayView2<f64>| {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
    };
    let split = |i: usize| {
        let blur = energy(blurred.band(i).unwrap(), clean.band(i).unwrap());
        let noise = energy(noisy.band(i).unwrap(), blurred.band(i).unwrap());
        (blur, noise)
    };
    let (b0, n0) = split(0);
    let (b9, n9) = split(9);
    assert!(b0 > n0, "low band blur {b0} noise {n0}");
    assert!(n9 > b9, "high band blur {b9} noise {n9}");
}

#[test]
fn gaussian_noise_mean_shrinks_with_pixel_count() {
    let mk = |n: usize| {
        let cube = HyperCube::new(vec![1.0], 0.2, 0.2, Array3::zeros((1, n, n))).unwrap();
        let noisy = add_noise(&cube, &NoiseModel::gaussian_iid(1.0, 11)).unwrap();
        noisy.data().mean().unwrap().abs()
    };
    assert!(mk(256) < 4.0 / 256.0);
    assert!(mk(16) < 4.0 / 16.0);
}

#[test]
fn ramp_contrast_phantom_round_trips_through_a_file() {
    let mut spec = disk_spec(linspace(0.5, 2.0, 4), 32, 0.2, 8.0);
    spec.kind = PhantomKind::Rings { ring_width_px: 3.0, outer_radius_px: 14.0 };
    spec.foreground = Contrast::Ramp { start: 0.1, end: 0.4 };
    let (_, degraded) = simulate(&spec, &BeamGeometry::default(), &NoiseModel::gaussian_iid(0.05, 1), 0.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cube.thz");
    write_cube(&degraded, &path).unwrap();
    let first = read_cube(&path).unwrap();
    write_cube(&first, &path).unwrap();
    let second = read_cube(&path).unwrap();
    assert_eq!(first, second);
    let mid = |c: &HyperCube| c.band(0).unwrap().row(16).to_vec();
    assert_eq!(mid(&first), mid(&second));
    let band = first.band(0).unwrap();
    let row: ArrayView1<f64> = band.row(16);
    for (a, b) in row.iter().zip(degraded.band(0).unwrap().row(16)) {
        assert_eq!(*a, (*b as f32) as f64);
    }
}

#[test]
fn delta_psf_leaves_cube_unchanged() {
    let psf = Psf::gaussian(0.0, 0.2, DEFAULT_TRUNCATION).unwrap();
    assert!(psf.is_delta());
    assert_eq!(psf.kernel().dim(), (1, 1));
}
