use proptest::prelude::*;
use qdpc::forward::{ideal_images, phase_target, random_layer, AcquisitionMeta, DpcStack, TargetKind, TargetParams};
use qdpc::pupils::DEFAULT_AXES;
use qdpc::sensor::*;
use qdpc::transfer::{half_circle_ptfs, TransferFunction};
use qdpc::{FrequencyGrid, RealImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

// sigma / s for white noise on the 256^2 desk grid, from an independent numpy
// Monte-Carlo (20 seeds at each of s = 0.01, 0.05, 0.1; spread 0.4%).
const CALIBRATION: f64 = 1.185;

fn setup(n: usize) -> (FrequencyGrid, Vec<TransferFunction>) {
    let g = FrequencyGrid::new(n, n, 4.0, 10.0).unwrap();
    let m = AcquisitionMeta::desk_default();
    (g, half_circle_ptfs(g, m.na, m.na_illum, m.lambda_um, &DEFAULT_AXES).unwrap())
}

fn stack(images: Vec<RealImage>, tfs: &[TransferFunction]) -> DpcStack {
    DpcStack::new(images, tfs.to_vec(), AcquisitionMeta::desk_default()).unwrap()
}

fn noise(g: FrequencyGrid, s: f64, seed: u64) -> RealImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RealImage::from_fn(g, |_, _| {
        let e: f64 = StandardNormal.sample(&mut rng);
        s * e
    })
}

#[test]
fn zeros_give_zero_sigma() {
    let (g, tfs) = setup(64);
    let est = noise_sigma(&stack(vec![RealImage::zeros(g), RealImage::zeros(g)], &tfs)).unwrap();
    assert_eq!(est.sigma, 0.0);
    assert_eq!(auto_params(&est), (0.0, 0.0));
}

#[test]
fn clean_band_limited_stack_has_no_noise() {
    let (g, tfs) = setup(256);
    let gt = phase_target(&TargetKind::WeddingCake, g, &TargetParams::for_grid(&g)).unwrap();
    let est = noise_sigma(&stack(ideal_images(&gt, &tfs).unwrap(), &tfs)).unwrap();
    assert!(est.sigma <= 1e-10, "sigma {:e}", est.sigma);
}

#[test]
fn white_noise_calibration() {
    let (g, tfs) = setup(256);
    let mut last = 0.0;
    for (k, s) in [0.01, 0.05, 0.1].into_iter().enumerate() {
        let seed = 100 + 2 * k as u64;
        let est = noise_sigma(&stack(vec![noise(g, s, seed), noise(g, s, seed + 1)], &tfs)).unwrap();
        let ratio = est.sigma / s;
        assert!((ratio / CALIBRATION - 1.0).abs() <= 0.05, "s={s}: ratio {ratio:.4}");
        assert!(est.sigma > last);
        last = est.sigma;
        let parts: f64 = est.per_image_sigmas.iter().sum();
        assert!((parts - est.sigma).abs() <= 1e-15 * est.sigma);
    }
}

#[test]
fn sigma_scales_linearly_with_noise() {
    let (g, tfs) = setup(128);
    for seed in 0..5u64 {
        let one = noise_sigma(&stack(vec![noise(g, 0.03, seed), noise(g, 0.03, seed + 50)], &tfs)).unwrap();
        // Independent draws at twice the std, not a rescaled copy.
        let two = noise_sigma(&stack(vec![noise(g, 0.06, seed + 7), noise(g, 0.06, seed + 57)], &tfs)).unwrap();
        let r = two.sigma / one.sigma;
        assert!((r - 2.0).abs() <= 0.1, "seed {seed}: ratio {r:.4}");
    }
}

#[test]
fn in_band_signal_does_not_move_sigma() {
    let (g, tfs) = setup(128);
    let base = vec![noise(g, 0.05, 1), noise(g, 0.05, 2)];
    let phase = random_layer(g, 9, 12, 1.0);
    let signal = ideal_images(&phase, &tfs).unwrap();
    let a = noise_sigma(&stack(base.clone(), &tfs)).unwrap().sigma;
    let with: Vec<RealImage> = base.iter().zip(&signal).map(|(n, s)| n.add(s).unwrap()).collect();
    let b = noise_sigma(&stack(with, &tfs)).unwrap().sigma;
    assert!((a - b).abs() <= 1e-9 * a, "{a:e} vs {b:e}");
}

#[test]
fn eq17_mapping() {
    let est = |sigma| NoiseEstimate {
        sigma,
        per_image_sigmas: vec![sigma],
    };
    assert_eq!(auto_params(&est(0.1)), (0.05, 0.01));
    assert_eq!(auto_params(&est(1.0)), (0.5, 0.1));
}

#[test]
fn alpha_floor_applies_on_clean_data() {
    let (g, tfs) = setup(64);
    let gt = phase_target(&TargetKind::WeddingCake, g, &TargetParams::for_grid(&g)).unwrap();
    let s = stack(ideal_images(&gt, &tfs).unwrap(), &tfs);
    let (alpha, _) = auto_params_for(&s).unwrap();
    let max = s.images.iter().map(RealImage::max_abs).fold(0.0, f64::max);
    assert_eq!(alpha, ALPHA_FLOOR_REL * max);
}

#[test]
fn rejects_band_reaching_nyquist() {
    // 1 um pixels at 1x: Nyquist 0.5 cycles/um, below 2 NA / lambda.
    let g = FrequencyGrid::new(32, 32, 1.0, 1.0).unwrap();
    let m = AcquisitionMeta {
        na: 0.1,
        na_illum: 0.1,
        lambda_um: 0.532,
        pixel_size_um: 1.0,
        magnification: 1.0,
    };
    let tfs = half_circle_ptfs(g, m.na, m.na_illum, m.lambda_um, &DEFAULT_AXES).unwrap();
    let mut m2 = m;
    m2.na = 0.3;
    let s = DpcStack::new(vec![RealImage::zeros(g), RealImage::zeros(g)], tfs, m2).unwrap();
    assert!(noise_sigma(&s).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn gamma_filter_kills_constants_and_linear_ramps(c in -5.0f64..5.0, a in -1.0f64..1.0) {
        let g = FrequencyGrid::new(16, 16, 4.0, 10.0).unwrap();
        let flat = gamma_filter(&RealImage::from_fn(g, |_, _| c));
        prop_assert!(flat.max_abs() <= 1e-12 * c.abs().max(1.0));
        // A ramp along rows only has curvature where it wraps.
        let ramp = gamma_filter(&RealImage::from_fn(g, |i, _| a * i as f64));
        for i in 1..15 {
            for j in 0..16 {
                prop_assert!(ramp.get(i, j).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sigma_is_nonnegative_and_homogeneous(seed in 0u64..1000, c in 0.1f64..10.0) {
        let (g, tfs) = setup(32);
        let imgs = vec![noise(g, 0.1, seed), noise(g, 0.1, seed + 1)];
        let a = noise_sigma(&stack(imgs.clone(), &tfs)).unwrap().sigma;
        let b = noise_sigma(&stack(imgs.iter().map(|i| i.scaled(c)).collect(), &tfs)).unwrap().sigma;
        prop_assert!(a >= 0.0);
        prop_assert!((b - c * a).abs() <= 1e-10 * c * a);
    }
}
