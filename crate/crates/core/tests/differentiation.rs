mod common;

use common::*;
use ndarray::{Array1, Array2};
use nint::network::{self, MlpParams, NetworkConfig};
use nint::parallel::Parallelism;
use rand::Rng;

/// Entries below this magnitude are compared absolutely: central differences
/// with h = 1e-5 carry roughly 1e-10 of rounding and truncation error.
const FD_FLOOR: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

#[test]
fn forward_matches_naive_loops() {
    let mut rng = rng(10);
    for _ in 0..50 {
        let out_dim = rng.random_range(1..=3);
        let s = random_setup(&mut rng, 3, 12, 9, out_dim);
        let fast = network::predict(&s.params, &s.config, s.x.view(), &seq()).unwrap();
        for (i, row) in s.x.rows().into_iter().enumerate() {
            let slow = naive_forward(&s.params, &s.config, row);
            for c in 0..out_dim {
                assert!((fast[[i, c]] - slow[c]).abs() <= 1e-12 * (1.0 + slow[c].abs()));
            }
        }
    }
}

#[test]
fn param_grad_matches_finite_differences() {
    let mut rng = rng(11);
    let mut worst = 0.0f64;
    let mut draws = 0;
    while draws < 60 {
        let out_dim = rng.random_range(1..=3);
        let s = random_setup(&mut rng, 3, 8, 6, out_dim);
        if kink_distance(&s.params, &s.config, s.x.view()) < 1e-3 {
            continue;
        }
        let y = random_matrix(&mut rng, 6, out_dim, 1.0);
        let grad = network::param_grad(&s.params, &s.config, s.x.view(), y.view(), &seq()).unwrap();
        let fd = fd_param_grad(&s.params, &s.config, s.x.view(), y.view(), FD_STEP);
        worst = worst.max(max_rel_err(&grad, &fd, FD_FLOOR));
        draws += 1;
    }
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

#[test]
fn output_jacobian_matches_finite_differences() {
    let mut rng = rng(12);
    let mut worst = 0.0f64;
    let mut draws = 0;
    while draws < 60 {
        let out_dim = rng.random_range(1..=3);
        let s = random_setup(&mut rng, 3, 8, 1, out_dim);
        if kink_distance(&s.params, &s.config, s.x.view()) < 1e-3 {
            continue;
        }
        let jac = network::output_jacobian(&s.params, &s.config, s.x.row(0)).unwrap();
        let fd = fd_jacobian(&s.params, &s.config, s.x.row(0), FD_STEP);
        worst = worst.max(max_rel_err(&jac.rows, &fd, FD_FLOOR));
        draws += 1;
    }
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

#[test]
fn forward_and_reverse_modes_agree_with_jacobians() {
    let mut rng = rng(13);
    for _ in 0..30 {
        let out_dim = rng.random_range(1..=3);
        let s = random_setup(&mut rng, 3, 10, 7, out_dim);
        let p = s.params.len();
        let tangent = random_vector(&mut rng, p);
        let seed = random_matrix(&mut rng, 7, out_dim, 1.0);
        let jvp = network::jvp(&s.params, &s.config, s.x.view(), tangent.as_slice().unwrap(), &seq()).unwrap();
        let vjp = network::vjp_sum(&s.params, &s.config, s.x.view(), seed.view(), &seq()).unwrap();
        let mut vjp_ref = Array1::<f64>::zeros(p);
        for (i, row) in s.x.rows().into_iter().enumerate() {
            let j = network::output_jacobian(&s.params, &s.config, row).unwrap().rows;
            let jv = j.dot(&tangent);
            for c in 0..out_dim {
                assert!((jvp[[i, c]] - jv[c]).abs() <= 1e-10 * (1.0 + jv[c].abs()));
            }
            vjp_ref += &j.t().dot(&seed.row(i));
        }
        assert!(max_rel_err(&vjp, vjp_ref.iter(), 1e-8) < 1e-10);
    }
}

#[test]
fn threaded_results_are_bit_identical() {
    let config = NetworkConfig::siren(3, 24, 2, 3);
    let params = MlpParams::<f64>::init(&config).unwrap();
    let mut rng = rng(14);
    let x = random_matrix(&mut rng, 1000, 2, 1.0);
    let y = random_matrix(&mut rng, 1000, 3, 1.0);
    let threaded = Parallelism::with_threads(4).unwrap();
    {
        let par = &threaded;
        assert_eq!(
            network::predict(&params, &config, x.view(), par).unwrap(),
            network::predict(&params, &config, x.view(), &seq()).unwrap()
        );
        assert_eq!(
            network::param_grad(&params, &config, x.view(), y.view(), par).unwrap(),
            network::param_grad(&params, &config, x.view(), y.view(), &seq()).unwrap()
        );
        let v: Vec<f64> = (0..params.len()).map(|k| (k as f64).sin()).collect();
        assert_eq!(
            network::jvp(&params, &config, x.view(), &v, par).unwrap(),
            network::jvp(&params, &config, x.view(), &v, &seq()).unwrap()
        );
    }
}

#[test]
fn full_batch_sgd_step_is_mean_per_example_gradient() {
    let mut rng = rng(15);
    let s = random_setup(&mut rng, 2, 6, 5, 2);
    let y = random_matrix(&mut rng, 5, 2, 1.0);
    let grad = network::param_grad(&s.params, &s.config, s.x.view(), y.view(), &seq()).unwrap();
    let f = network::predict(&s.params, &s.config, s.x.view(), &seq()).unwrap();
    let mut manual = Array1::<f64>::zeros(s.params.len());
    for i in 0..5 {
        let j = network::output_jacobian(&s.params, &s.config, s.x.row(i)).unwrap().rows;
        manual += &j.t().dot(&(&f.row(i) - &y.row(i)));
    }
    manual /= 5.0;
    for (a, b) in grad.iter().zip(manual.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn single_precision_tracks_double() {
    let config = NetworkConfig::siren(3, 16, 2, 1);
    let p64 = MlpParams::<f64>::init(&config).unwrap();
    let p32 = MlpParams::<f32>::init(&config).unwrap();
    let x64 = Array2::from_shape_fn((20, 2), |(i, j)| ((i * 2 + j) as f64 / 40.0) - 0.5);
    let x32 = x64.mapv(|v| v as f32);
    let f64_out = network::predict(&p64, &config, x64.view(), &seq()).unwrap();
    let f32_out = network::predict(&p32, &config, x32.view(), &seq()).unwrap();
    for (a, b) in f64_out.iter().zip(f32_out.iter()) {
        assert!((a - *b as f64).abs() < 1e-4);
    }
}
