mod common;

use common::*;
use ndarray::{Array1, Array2};
use nint::metrics::{self, format_value};
use nint::signal;
use proptest::prelude::*;
use rand::Rng;

fn grayscale(name: &str) -> Array2<f64> {
    let data = signal::load_image::<f64>(&fixture(name), true).unwrap();
    let signal::ShapeMeta::Image { height, width, .. } = *data.shape() else {
        unreachable!()
    };
    data.attrs().to_owned().into_shape_with_order((height, width)).unwrap()
}

fn distorted(img: &Array2<f64>, seed: u64) -> Array2<f64> {
    let mut rng = rng(seed);
    img.mapv(|v| (0.8 * v + 0.1 + rng.random_range(-0.08..0.08)).clamp(0.0, 1.0))
}

#[test]
fn ssim_matches_direct_window_oracle_on_fixtures() {
    for name in ["camera16.pgm", "camera64.pgm"] {
        let clean = grayscale(name);
        for seed in 0..3 {
            let noisy = distorted(&clean, seed);
            let fast = metrics::ssim(noisy.view(), clean.view()).unwrap();
            let direct = ssim_direct(noisy.view(), clean.view());
            assert!((fast - direct).abs() <= 1e-9, "{name}: {fast} vs {direct}");
        }
        assert_eq!(metrics::ssim(clean.view(), clean.view()).unwrap(), 1.0);
    }
}

#[test]
fn rgb_ssim_is_channel_mean() {
    let mut rng = rng(40);
    let (h, w) = (13, 15);
    let a = Array2::from_shape_fn((h * w, 3), |_| rng.random_range(0.0..1.0));
    let b = Array2::from_shape_fn((h * w, 3), |_| rng.random_range(0.0..1.0));
    let combined = metrics::ssim_channels(a.view(), b.view(), h, w).unwrap();
    let per_channel: f64 = (0..3)
        .map(|c| {
            let pa = a.column(c).to_owned().into_shape_with_order((h, w)).unwrap();
            let pb = b.column(c).to_owned().into_shape_with_order((h, w)).unwrap();
            ssim_direct(pa.view(), pb.view())
        })
        .sum::<f64>()
        / 3.0;
    assert!((combined - per_channel).abs() <= 1e-9);
}

#[test]
fn si_snr_matches_direct_formula() {
    let mut rng = rng(41);
    for _ in 0..20 {
        let target: Vec<f64> = (0..257)
            .map(|k| (k as f64 * 0.07).sin() + rng.random_range(-0.1..0.1))
            .collect();
        let pred: Vec<f64> = target
            .iter()
            .map(|t| 0.7 * t + rng.random_range(-0.3..0.3) + 0.2)
            .collect();
        let fast = metrics::si_snr(Array1::from(pred.clone()).view(), Array1::from(target.clone()).view()).unwrap();
        assert!((fast - si_snr_direct(&pred, &target)).abs() <= 1e-10);
    }
}

#[test]
fn metric_reference_values() {
    assert_eq!(metrics::psnr_from_mse(0.01f64), 20.0);
    assert_eq!(metrics::psnr_from_mse(1.0f64), 0.0);
    let t = Array1::from(vec![0.3, -0.2, 0.9, 0.1]);
    assert_eq!(metrics::si_snr((&t * 2.0).view(), t.view()).unwrap(), f64::INFINITY);
    assert_eq!(metrics::si_snr((&t * -3.0).view(), t.view()).unwrap(), f64::INFINITY);
    assert_eq!(format_value(f64::INFINITY), "inf");
}

proptest! {
    #[test]
    fn psnr_strictly_decreases_with_mse(a in 1e-12f64..10.0, b in 1e-12f64..10.0) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(metrics::psnr_from_mse(lo) > metrics::psnr_from_mse(hi));
    }

    #[test]
    fn ssim_is_bounded_and_one_only_on_identity(
        values in proptest::collection::vec(0.0f64..1.0, 2 * 12 * 14),
    ) {
        let a = Array2::from_shape_vec((12, 14), values[..168].to_vec()).unwrap();
        let b = Array2::from_shape_vec((12, 14), values[168..].to_vec()).unwrap();
        let v = metrics::ssim(a.view(), b.view()).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v));
        prop_assert!(v < 1.0 - 1e-12);
        prop_assert!((metrics::ssim(a.view(), a.view()).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert!((v - metrics::ssim(b.view(), a.view()).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn si_snr_ignores_offsets_and_scaling(
        target in proptest::collection::vec(-1.0f64..1.0, 16),
        noise in proptest::collection::vec(-0.3f64..0.3, 16),
        offset in -5.0f64..5.0,
        scale in 0.1f64..10.0,
    ) {
        let t = Array1::from(target);
        prop_assume!(t.iter().any(|&v| (v - t[0]).abs() > 1e-3));
        let p = &t + &Array1::from(noise);
        let base = metrics::si_snr(p.view(), t.view()).unwrap();
        prop_assume!(base.is_finite());
        let shifted = metrics::si_snr((&p + offset).view(), (&t + offset).view()).unwrap();
        let scaled = metrics::si_snr((&p * scale).view(), t.view()).unwrap();
        prop_assert!((base - shifted).abs() <= 1e-8 * (1.0 + base.abs()));
        prop_assert!((base - scaled).abs() <= 1e-8 * (1.0 + base.abs()));
    }
}
