mod common;

use common::*;
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thz_restore::denoise::{denoise_eigen_images, patch_denoise, PatchDenoiseParams};
use thz_restore::subspace::{project, reconstruct, EigenImageSet, SubspaceBasis};
use thz_restore::HyperCube;

fn noise(seed: u64, ny: usize, nx: usize, sigma: f64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, sigma).unwrap();
    Array2::from_shape_fn((ny, nx), |_| d.sample(&mut rng))
}

fn params(sigma: f64) -> PatchDenoiseParams {
    PatchDenoiseParams::default().with_sigma(sigma)
}

fn small_params(sigma: f64) -> PatchDenoiseParams {
    PatchDenoiseParams { patch_size: 3, search_window: 7, ..params(sigma) }
}

fn variance(a: &Array2<f64>) -> f64 {
    let m = a.mean().unwrap();
    a.mapv(|v| (v - m).powi(2)).mean().unwrap()
}

fn step_edge(n: usize, at: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(_, c)| if c < at { 0.2 } else { 1.0 })
}

fn gradient_argmax(row: ndarray::ArrayView1<f64>) -> usize {
    (1..row.len())
        .max_by(|&i, &j| (row[i] - row[i - 1]).abs().total_cmp(&(row[j] - row[j - 1]).abs()))
        .unwrap()
}

fn eigen_set(images: &[Array2<f64>]) -> (SubspaceBasis, EigenImageSet) {
    let p = images.len();
    let (ny, nx) = images[0].dim();
    let data = Array3::from_shape_fn((p, ny, nx), |(k, r, c)| images[k][[r, c]]);
    let cube = HyperCube::new(linspace(1.0, 2.0, p), 0.2, 0.2, data).unwrap();
    let basis = SubspaceBasis::from_orthonormal(Array2::eye(p), vec![1.0; p]).unwrap();
    let set = project(&cube, &basis).unwrap();
    (basis, set)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scale_covariant(seed in 0u64..10_000, a in 0.05f64..20.0, sigma in 0.05f64..0.5) {
        let x = &step_edge(20, 9) + &noise(seed, 20, 20, sigma);
        let lhs = patch_denoise(x.mapv(|v| a * v).view(), &small_params(sigma * a)).unwrap();
        let rhs = patch_denoise(x.view(), &small_params(sigma)).unwrap().mapv(|v| a * v);
        for (u, v) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((u - v).abs() < 1e-6 * a.max(1.0));
        }
    }

    #[test]
    fn output_stays_within_input_range(seed in 0u64..10_000, sigma in 0.01f64..2.0) {
        let x = noise(seed, 18, 21, 1.0);
        let out = patch_denoise(x.view(), &small_params(sigma)).unwrap();
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn translation_equivariant_on_interior(seed in 0u64..10_000) {
        // Noise only in a central block on a constant background, so the
        // shifted image is an exact translate.
        let n = 40;
        let mut x = Array2::from_elem((n, n), 0.5);
        let blob = noise(seed, 12, 12, 0.3);
        x.slice_mut(ndarray::s![14..26, 14..26]).zip_mut_with(&blob, |v, b| *v += b);
        let mut shifted = Array2::from_elem((n, n), 0.5);
        shifted.slice_mut(ndarray::s![2.., 2..]).assign(&x.slice(ndarray::s![..n - 2, ..n - 2]));
        let p = small_params(0.2);
        let a = patch_denoise(x.view(), &p).unwrap();
        let b = patch_denoise(shifted.view(), &p).unwrap();
        for r in 10..30 {
            for c in 10..30 {
                prop_assert!((a[[r, c]] - b[[r + 2, c + 2]]).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn constant_image_noise_variance_drops_tenfold() {
    for seed in 0..10 {
        let x = noise(seed, 64, 64, 0.1).mapv(|v| v + 0.5);
        let out = patch_denoise(x.view(), &params(0.1)).unwrap();
        let ratio = variance(&out) / variance(&x);
        assert!(ratio <= 0.1, "seed {seed}: {ratio}");
    }
}

#[test]
fn noiseless_edge_stays_put() {
    let x = step_edge(32, 13);
    let out = patch_denoise(x.view(), &params(0.1)).unwrap();
    for r in 0..32 {
        assert_eq!(gradient_argmax(out.row(r)), gradient_argmax(x.row(r)));
    }
}

#[test]
fn zero_sigmas_are_identity() {
    let (_, set) = eigen_set(&[noise(1, 16, 16, 1.0), noise(2, 16, 16, 1.0)]);
    let out = denoise_eigen_images(&set, &[0.0, 0.0], &params(0.0)).unwrap();
    assert_eq!(out, set);
    assert!(denoise_eigen_images(&set, &[1.0], &params(0.0)).is_err());
}

#[test]
fn rank_one_cube_mse_drops_fivefold() {
    let (b, n, sigma) = (30, 48, 0.1);
    let spectrum: Vec<f64> = (0..b).map(|i| 1.0 - 0.02 * i as f64).collect();
    let norm = spectrum.iter().map(|v| v * v).sum::<f64>().sqrt();
    let e = Array2::from_shape_fn((b, 1), |(i, _)| spectrum[i] / norm);
    let image = step_edge(n, 20).mapv(|v| v * norm);
    let freqs = linspace(0.5, 3.0, b);
    let clean = cube_from_factors(&e, &[image], &freqs, 0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = Normal::new(0.0, sigma).unwrap();
    let noisy = clean.with_data(clean.data().mapv(|v| v + d.sample(&mut rng))).unwrap();
    let basis = SubspaceBasis::from_orthonormal(e, vec![1.0]).unwrap();
    let eigen = project(&noisy, &basis).unwrap();
    // Orthonormal projection keeps the noise level of each band.
    let denoised = denoise_eigen_images(&eigen, &[sigma], &params(sigma)).unwrap();
    let restored = reconstruct(&basis, &denoised).unwrap();
    assert!(mse(&restored, &clean) * 5.0 <= mse(&noisy, &clean));
}

#[test]
fn pure_noise_components_lose_their_energy() {
    let signal = step_edge(48, 20).mapv(|v| 10.0 * v);
    let images = [&signal + &noise(1, 48, 48, 1.0), noise(2, 48, 48, 1.0), noise(3, 48, 48, 1.0)];
    let (_, set) = eigen_set(&images);
    let out = denoise_eigen_images(&set, &[1.0; 3], &params(1.0)).unwrap();
    for k in 1..3 {
        let before = set.image(k).mapv(|v| v * v).sum();
        let after = out.image(k).mapv(|v| v * v).sum();
        assert!(after < 0.1 * before, "component {k}: {after} vs {before}");
    }
    let err_before = (&set.image(0) - &signal).mapv(|v| v * v).sum();
    let err_after = (&out.image(0) - &signal).mapv(|v| v * v).sum();
    assert!(err_after < err_before);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let x = &step_edge(40, 17) + &noise(8, 40, 40, 0.1);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| patch_denoise(x.view(), &params(0.1)).unwrap())
    };
    assert_eq!(run(1), run(4));
}
