mod common;

use common::*;
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use thz_restore::beam::BeamGeometry;
use thz_restore::forward::{add_noise, simulate, Contrast, NoiseModel};
use thz_restore::subspace::*;
use thz_restore::HyperCube;

fn rank1_cube(b: usize, n: usize) -> HyperCube {
    let freqs = linspace(0.3, 3.0, b);
    let img = &abundance_images(n, n)[0];
    let data = Array3::from_shape_fn((b, n, n), |(i, r, c)| (0.5 + 0.02 * i as f64) * (0.3 + img[[r, c]]));
    HyperCube::new(freqs, 0.2, 0.2, data).unwrap()
}

#[test]
fn noise_estimate_rank1_iid() {
    let clean = rank1_cube(30, 64);
    for seed in 0..10 {
        let noisy = add_noise(&clean, &NoiseModel::gaussian_iid(0.05, seed)).unwrap();
        let est = estimate_noise(&noisy).unwrap();
        for (i, s) in est.sigma_per_band.iter().enumerate() {
            assert!((s - 0.05).abs() <= 0.15 * 0.05, "seed {seed} band {i}: {s}");
        }
    }
}

#[test]
fn noise_estimate_noiseless_low_rank() {
    let freqs = linspace(0.3, 3.0, 20);
    let cube = rank3_cube(20, 32, 32, &freqs);
    let est = estimate_noise(&cube).unwrap();
    assert!(est.sigma_per_band.iter().all(|&s| s <= 1e-6), "{:?}", est.sigma_per_band);
}

#[test]
fn noise_estimate_noniid_ramp() {
    let freqs = linspace(0.3, 3.0, 30);
    let clean = rank3_cube(30, 64, 64, &freqs);
    let sigmas = linspace(0.01, 0.2, 30);
    for seed in 0..3 {
        let noisy = add_noise(&clean, &NoiseModel::gaussian_noniid(sigmas.clone(), seed)).unwrap();
        let est = estimate_noise(&noisy).unwrap().sigma_per_band;
        for (i, (e, s)) in est.iter().zip(&sigmas).enumerate() {
            assert!((e - s).abs() <= 0.2 * s, "seed {seed} band {i}: {e} vs {s}");
        }
        assert!(est.windows(2).all(|w| w[1] > w[0]), "not monotone: {est:?}");
    }
}

#[test]
fn exact_subspace_is_recovered() {
    let b = 30;
    let freqs = linspace(0.3, 3.0, b);
    let e0 = smooth_orthonormal(b, 3);
    let cube = cube_from_factors(&e0, &abundance_images(64, 64), &freqs, 0.2);
    let noise = estimate_noise(&cube).unwrap();
    for dim in [SubspaceDim::Fixed(3), SubspaceDim::Auto] {
        let basis = learn_subspace(&cube, dim, &noise).unwrap();
        assert_eq!(basis.dim(), 3);
        let e = basis.matrix();
        let residual = &e0 - &e.dot(&e.t().dot(&e0));
        assert!(frob(&residual) <= 1e-6, "{}", frob(&residual));
    }
}

#[test]
fn auto_dimension_with_light_noise() {
    let b = 30;
    let freqs = linspace(0.3, 3.0, b);
    let e0 = smooth_orthonormal(b, 3);
    let cube = cube_from_factors(&e0, &abundance_images(64, 64), &freqs, 0.2);
    let noisy = add_noise(&cube, &NoiseModel::gaussian_iid(0.01, 11)).unwrap();
    let basis = learn_subspace(&noisy, SubspaceDim::Auto, &estimate_noise(&noisy).unwrap()).unwrap();
    assert_eq!(basis.dim(), 3);
}

#[test]
fn projection_of_exact_factors_returns_coefficients() {
    let b = 12;
    let freqs = linspace(0.3, 3.0, b);
    let e0 = smooth_orthonormal(b, 4);
    let imgs: Vec<Array2<f64>> = (0..4)
        .map(|k| Array2::from_shape_fn((8, 9), |(r, c)| ((r * 9 + c + 5 * k) as f64).cos()))
        .collect();
    let cube = cube_from_factors(&e0, &imgs, &freqs, 0.2);
    let basis = SubspaceBasis::from_orthonormal(e0, vec![1.0; b]).unwrap();
    let a = project(&cube, &basis).unwrap();
    for (k, img) in imgs.iter().enumerate() {
        for (x, y) in a.image(k).iter().zip(img.iter()) {
            assert!((x - y).abs() < 1e-8);
        }
    }
}

#[test]
fn truncated_reconstruction_residual_is_discarded_eigenvalue_mass() {
    // Oracle: ‖Y − EEᵀY‖²/n equals the sum of the discarded eigenvalues of YYᵀ/n.
    let b = 10;
    let freqs = linspace(0.3, 3.0, b);
    let data = Array3::from_shape_fn((b, 12, 12), |(i, r, c)| {
        ((i * 31 + r * 7 + c * 13) as f64 * 0.61).sin() + 0.3 * i as f64
    });
    let cube = HyperCube::new(freqs, 0.2, 0.2, data).unwrap();
    let unit = NoiseEstimate::uniform(b, 1.0);
    for p in [1, 4, 7] {
        let basis = learn_subspace(&cube, SubspaceDim::Fixed(p), &unit).unwrap();
        let back = reconstruct(&basis, &project(&cube, &basis).unwrap()).unwrap();
        let n = cube.pixels() as f64;
        let resid: f64 = back.data().iter().zip(cube.data().iter()).map(|(a, y)| (a - y).powi(2)).sum::<f64>() / n;
        let discarded: f64 = basis.eigenvalues()[p..].iter().sum();
        assert!((resid - discarded).abs() < 1e-6, "p={p}: {resid} vs {discarded}");
    }
}

#[test]
fn disk_phantom_first_component_dominates() {
    let freqs = linspace(0.5, 3.0, 20);
    let mut spec = disk_spec(freqs, 64, 0.2, 16.0);
    spec.foreground = Contrast::Ramp { start: 0.1, end: 0.3 };
    let (_, degraded) = simulate(&spec, &BeamGeometry::default(), &NoiseModel::gaussian_iid(0.01, 3), 0.0).unwrap();
    let noise = estimate_noise(&degraded).unwrap();
    let basis = learn_subspace(&degraded, SubspaceDim::Auto, &noise).unwrap();
    let eigen = project(&degraded, &basis).unwrap();
    let report = component_report(&basis, &eigen, degraded.frequencies()).unwrap();
    assert!(report[0].energy_fraction > 0.8, "{:?}", report[0]);
}

fn arb_cube() -> impl Strategy<Value = HyperCube> {
    (3usize..8, 2usize..6, 2usize..6).prop_flat_map(|(b, ny, nx)| {
        proptest::collection::vec(-2.0f64..2.0, b * ny * nx).prop_map(move |v| {
            let freqs = linspace(0.3, 3.0, b);
            HyperCube::new(freqs, 0.2, 0.2, Array3::from_shape_vec((b, ny, nx), v).unwrap()).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn learned_bases_are_orthonormal_and_projection_idempotent(cube in arb_cube(), p_frac in 0.0f64..1.0) {
        let b = cube.bands();
        let p = 1 + ((b - 1) as f64 * p_frac) as usize;
        let noise = NoiseEstimate::uniform(b, 0.5);
        let basis = learn_subspace(&cube, SubspaceDim::Fixed(p), &noise).unwrap();
        let g = basis.matrix().t().dot(basis.matrix());
        for ((i, j), v) in g.indexed_iter() {
            let want = if i == j { 1.0 } else { 0.0 };
            prop_assert!((v - want).abs() <= 1e-8);
        }
        let once = reconstruct(&basis, &project(&cube, &basis).unwrap()).unwrap();
        let twice = reconstruct(&basis, &project(&once, &basis).unwrap()).unwrap();
        for (a, c) in once.data().iter().zip(twice.data().iter()) {
            prop_assert!((a - c).abs() <= 1e-8);
        }
        let a = project(&cube, &basis).unwrap();
        prop_assert!(frob(a.coefficients()) <= frob(&cube.to_matrix()) * (1.0 + 1e-12));
        let report = component_report(&basis, &a, cube.frequencies()).unwrap();
        for w in report.windows(2) {
            prop_assert!(w[1].energy_fraction <= w[0].energy_fraction + 1e-15);
        }
    }
}
