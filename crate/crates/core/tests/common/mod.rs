//! Shared helpers and independent reference implementations for the
//! integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use nint::network::{self, Activation, FourierFeatures, MlpParams, NetworkConfig};
use nint::parallel::Parallelism;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn seq() -> Parallelism {
    Parallelism::sequential()
}

/// A small network with every parameter (biases included) randomized.
pub struct Setup {
    pub config: NetworkConfig,
    pub params: MlpParams<f64>,
    pub x: Array2<f64>,
}

/// Random tiny network: depth 1..=max_depth, width 1..=max_width, sine or
/// relu (sometimes with Fourier features).
pub fn random_setup(rng: &mut ChaCha8Rng, max_depth: usize, max_width: usize, rows: usize, out_dim: usize) -> Setup {
    let depth = rng.random_range(1..=max_depth);
    let width = rng.random_range(1..=max_width);
    let in_dim = rng.random_range(1..=3);
    let mut config = match rng.random_range(0..3) {
        0 => NetworkConfig::relu(depth, width, in_dim, out_dim),
        1 => {
            let mut c = NetworkConfig::relu(depth, width, in_dim, out_dim);
            c.fourier_features = Some(FourierFeatures {
                count: rng.random_range(1..=4),
                scale: rng.random_range(0.5..3.0),
            });
            c
        }
        _ => {
            let mut c = NetworkConfig::siren(depth, width, in_dim, out_dim);
            c.omega0 = rng.random_range(1.0..30.0);
            c
        }
    };
    config.init_seed = rng.random();
    let init = MlpParams::<f64>::init(&config).unwrap();
    // every weight and bias moves by up to its layer's init bound, so biases
    // are nonzero while the network stays in its usual frequency range
    let mut theta = init.theta().to_vec();
    for (l, layer) in init.layout().iter().enumerate() {
        let fan_in = layer.fan_in as f64;
        let bound = match config.activation {
            Activation::Sine if l == 0 => 1.0 / fan_in,
            Activation::Sine => (6.0 / fan_in).sqrt() / config.omega0,
            Activation::Relu => (6.0 / fan_in).sqrt(),
        };
        for t in &mut theta[layer.weight_offset..layer.end()] {
            *t += rng.random_range(-bound..bound);
        }
    }
    let params = MlpParams::from_theta(&config, theta).unwrap();
    let x = Array2::from_shape_fn((rows, in_dim), |_| rng.random_range(-1.0..1.0));
    Setup { config, params, x }
}

/// Scalar-loop forward pass written directly from the layer definitions.
pub fn naive_forward(params: &MlpParams<f64>, config: &NetworkConfig, x: ArrayView1<'_, f64>) -> Vec<f64> {
    let mut h: Vec<f64> = match params.fourier() {
        None => x.to_vec(),
        Some(b) => {
            let proj: Vec<f64> = (0..b.nrows())
                .map(|k| 2.0 * std::f64::consts::PI * (0..x.len()).map(|d| b[[k, d]] * x[d]).sum::<f64>())
                .collect();
            proj.iter()
                .map(|p| p.sin())
                .chain(proj.iter().map(|p| p.cos()))
                .collect()
        }
    };
    let depth = params.layout().len();
    for layer in 0..depth {
        let w = params.weight(layer);
        let b = params.bias(layer);
        let mut next = vec![0.0; w.nrows()];
        for (o, out) in next.iter_mut().enumerate() {
            let mut acc = b[o];
            for (i, hi) in h.iter().enumerate() {
                acc += w[[o, i]] * hi;
            }
            *out = if layer + 1 == depth {
                acc
            } else {
                match config.activation {
                    Activation::Sine => (config.omega0 * acc).sin(),
                    Activation::Relu => acc.max(0.0),
                }
            };
        }
        h = next;
    }
    h
}

/// Smallest |pre-activation| over hidden relu units (infinite for sine nets).
pub fn kink_distance(params: &MlpParams<f64>, config: &NetworkConfig, x: ArrayView2<'_, f64>) -> f64 {
    if config.activation != Activation::Relu {
        return f64::INFINITY;
    }
    let (_, cache) = network::forward(params, config, x).unwrap();
    cache.affine[..cache.depth() - 1]
        .iter()
        .flat_map(|a| a.iter().map(|v| v.abs()))
        .fold(f64::INFINITY, f64::min)
}

fn with_theta(params: &MlpParams<f64>, config: &NetworkConfig, k: usize, delta: f64) -> MlpParams<f64> {
    let mut theta = params.theta().to_vec();
    theta[k] += delta;
    MlpParams::from_theta(config, theta).unwrap()
}

/// Central differences of the batch-mean loss.
pub fn fd_param_grad(
    params: &MlpParams<f64>,
    config: &NetworkConfig,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    h: f64,
) -> Vec<f64> {
    let loss = |p: &MlpParams<f64>| {
        let f = network::predict(p, config, x, &seq()).unwrap();
        network::loss(f.view(), y).unwrap()
    };
    (0..params.len())
        .map(|k| (loss(&with_theta(params, config, k, h)) - loss(&with_theta(params, config, k, -h))) / (2.0 * h))
        .collect()
}

/// Central differences of the outputs at one coordinate: `out_dim x P`.
pub fn fd_jacobian(params: &MlpParams<f64>, config: &NetworkConfig, x: ArrayView1<'_, f64>, h: f64) -> Array2<f64> {
    let n = config.out_dim;
    let mut jac = Array2::zeros((n, params.len()));
    for k in 0..params.len() {
        let plus = naive_forward(&with_theta(params, config, k, h), config, x);
        let minus = naive_forward(&with_theta(params, config, k, -h), config, x);
        for c in 0..n {
            jac[[c, k]] = (plus[c] - minus[c]) / (2.0 * h);
        }
    }
    jac
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over paired entries.
pub fn max_rel_err<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>, floor: f64) -> f64 {
    a.into_iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// SSIM straight from its definition: a full 2D Gaussian weight per window
/// position, local moments accumulated term by term.
pub fn ssim_direct(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> f64 {
    let size = 11usize;
    let sigma = 1.5f64;
    let c1 = (0.01f64 * 1.0).powi(2);
    let c2 = (0.03f64 * 1.0).powi(2);
    let mut weights = Array2::zeros((size, size));
    for i in 0..size {
        for j in 0..size {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            weights[[i, j]] = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = weights.sum();
    weights /= total;
    let (h, w) = x.dim();
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in 0..=h - size {
        for c in 0..=w - size {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let wt = weights[[i, j]];
                    let (a, b) = (x[[r + i, c + j]], y[[r + i, c + j]]);
                    mx += wt * a;
                    my += wt * b;
                    sxx += wt * a * a;
                    syy += wt * b * b;
                    sxy += wt * a * b;
                }
            }
            let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    sum / count as f64
}

/// SI-SNR from its definition with explicit loops.
pub fn si_snr_direct(pred: &[f64], target: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let pm = pred.iter().sum::<f64>() / n;
    let tm = target.iter().sum::<f64>() / n;
    let p: Vec<f64> = pred.iter().map(|v| v - pm).collect();
    let t: Vec<f64> = target.iter().map(|v| v - tm).collect();
    let dot: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let tt: f64 = t.iter().map(|v| v * v).sum();
    let s: Vec<f64> = t.iter().map(|v| v * dot / tt).collect();
    let signal: f64 = s.iter().map(|v| v * v).sum();
    let noise: f64 = p.iter().zip(&s).map(|(a, b)| (a - b) * (a - b)).sum();
    10.0 * (signal / noise).log10()
}

/// `|sum_j K_ij g_j|` per example from a dense kernel, via nalgebra.
pub fn dense_scores(kernel: ArrayView2<'_, f64>, g: ArrayView2<'_, f64>) -> Vec<f64> {
    let (len, n) = g.dim();
    let k = nalgebra::DMatrix::from_row_slice(
        kernel.nrows(),
        kernel.ncols(),
        kernel.as_standard_layout().as_slice().unwrap(),
    );
    let flat = nalgebra::DVector::from_iterator(len * n, g.iter().copied());
    let kg = k * flat;
    (0..len).map(|i| kg.rows(i * n, n).norm()).collect()
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn eigen_range(m: ArrayView2<'_, f64>) -> (f64, f64) {
    let d = nalgebra::DMatrix::from_row_slice(m.nrows(), m.ncols(), m.as_standard_layout().as_slice().unwrap());
    let eig = nalgebra::SymmetricEigen::new(d).eigenvalues;
    (eig.min(), eig.max())
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

pub fn random_vector(rng: &mut ChaCha8Rng, len: usize) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| rng.random_range(-1.0..1.0))
}
