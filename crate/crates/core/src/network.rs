//! Coordinate MLP with sine or relu hidden layers and a linear output layer.
//!
//! Parameters live in one flat vector `theta` laid out layer by layer as
//! `[W_1, b_1, W_2, b_2, ..., W_L, b_L]`, each `W` row-major with shape
//! `fan_out x fan_in`. Hidden sine layers compute `sin(omega0 * (W h + b))`;
//! relu layers compute `max(W h + b, 0)`. An optional fixed Fourier-feature
//! front end maps `x` to `[sin(2 pi B x), cos(2 pi B x)]` before the first
//! trainable layer.
//!
//! Three differentiation routes are provided, all batched over rows:
//! [`vjp_sum`] (reverse mode, `sum_i J_i^T g_i`), [`jvp`] (forward mode,
//! `J_i v` for every row) and [`output_jacobian`] (one reverse pass per
//! output channel for a single coordinate).

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::parallel::Parallelism;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sine,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sine => "sine",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(Activation::Sine),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Fixed Gaussian frequency matrix `B` (count x in_dim, entries N(0, scale^2)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierFeatures {
    pub count: usize,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Number of linear layers, including the output layer.
    pub depth: usize,
    pub width: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Frequency scale applied inside every sine layer.
    pub omega0: f64,
    /// Only valid with relu activations.
    pub fourier_features: Option<FourierFeatures>,
    pub init_seed: u64,
}

impl NetworkConfig {
    pub fn siren(depth: usize, width: usize, in_dim: usize, out_dim: usize) -> Self {
        Self {
            depth,
            width,
            in_dim,
            out_dim,
            activation: Activation::Sine,
            omega0: 30.0,
            fourier_features: None,
            init_seed: 0,
        }
    }

    pub fn relu(depth: usize, width: usize, in_dim: usize, out_dim: usize) -> Self {
        Self {
            activation: Activation::Relu,
            ..Self::siren(depth, width, in_dim, out_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.depth == 0 {
            return bad("network depth must be at least 1");
        }
        if self.width == 0 || self.in_dim == 0 || self.out_dim == 0 {
            return bad("network width, in_dim and out_dim must be at least 1");
        }
        if self.activation == Activation::Sine && !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return bad("omega0 must be positive for sine networks");
        }
        if let Some(ff) = self.fourier_features {
            if self.activation != Activation::Relu {
                return bad("Fourier features require the relu activation");
            }
            if ff.count == 0 || !(ff.scale > 0.0 && ff.scale.is_finite()) {
                return bad("Fourier features need count >= 1 and scale > 0");
            }
        }
        Ok(())
    }

    /// Width of the first trainable layer's input.
    pub fn encoded_dim(&self) -> usize {
        self.fourier_features.map_or(self.in_dim, |ff| 2 * ff.count)
    }

    /// `(fan_in, fan_out)` for every layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.depth);
        let mut fan_in = self.encoded_dim();
        for l in 0..self.depth {
            let fan_out = if l + 1 == self.depth { self.out_dim } else { self.width };
            dims.push((fan_in, fan_out));
            fan_in = fan_out;
        }
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerLayout {
    pub fn end(&self) -> usize {
        self.bias_offset + self.fan_out
    }
}

fn layout_for(config: &NetworkConfig) -> Vec<LayerLayout> {
    let mut offset = 0;
    config
        .layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let layer = LayerLayout {
                fan_in,
                fan_out,
                weight_offset: offset,
                bias_offset: offset + fan_in * fan_out,
            };
            offset = layer.end();
            layer
        })
        .collect()
}

/// Flat trainable parameters plus the fixed Fourier matrix, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    theta: Vec<T>,
    layout: Vec<LayerLayout>,
    fourier: Option<Array2<T>>,
}

impl<T: Scalar> MlpParams<T> {
    /// Seeded initialization.
    ///
    /// Sine: first layer `U(-1/fan_in, 1/fan_in)`, later layers
    /// `U(-sqrt(6/fan_in)/omega0, +sqrt(6/fan_in)/omega0)`. Relu:
    /// Kaiming-uniform `U(-sqrt(6/fan_in), +sqrt(6/fan_in))`. Biases start at
    /// zero. The Fourier matrix, when configured, is drawn first.
    pub fn init(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let fourier = config
            .fourier_features
            .map(|ff| sample_fourier(&mut rng, ff, config.in_dim));
        let layout = layout_for(config);
        let mut theta = vec![T::zero(); config.param_count()];
        for (l, layer) in layout.iter().enumerate() {
            let fan_in = layer.fan_in as f64;
            let bound = match config.activation {
                Activation::Sine if l == 0 => 1.0 / fan_in,
                Activation::Sine => (6.0 / fan_in).sqrt() / config.omega0,
                Activation::Relu => (6.0 / fan_in).sqrt(),
            };
            for w in &mut theta[layer.weight_offset..layer.bias_offset] {
                *w = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(Self { theta, layout, fourier })
    }

    /// Rebuilds parameters from a stored `theta`; the Fourier matrix is
    /// regenerated from `config.init_seed`.
    pub fn from_theta(config: &NetworkConfig, theta: Vec<T>) -> Result<Self> {
        let mut params = Self::init(config)?;
        if theta.len() != params.theta.len() {
            return Err(Error::shape(format!("{} parameters", params.theta.len()), theta.len()));
        }
        params.theta = theta;
        Ok(params)
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [T] {
        &mut self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn layout(&self) -> &[LayerLayout] {
        &self.layout
    }

    pub fn fourier(&self) -> Option<ArrayView2<'_, T>> {
        self.fourier.as_ref().map(|b| b.view())
    }

    pub fn weight(&self, layer: usize) -> ArrayView2<'_, T> {
        let l = self.layout[layer];
        ArrayView2::from_shape((l.fan_out, l.fan_in), &self.theta[l.weight_offset..l.bias_offset])
            .expect("layout matches theta")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, T> {
        let l = self.layout[layer];
        ArrayView1::from(&self.theta[l.bias_offset..l.end()])
    }

    pub fn norm(&self) -> T {
        self.theta.iter().map(|&t| t * t).sum::<T>().sqrt()
    }

    fn check(&self, config: &NetworkConfig) -> Result<()> {
        if self.layout != layout_for(config) || self.fourier.is_some() != config.fourier_features.is_some() {
            return Err(Error::shape(
                "parameters matching the network config",
                "a different layout",
            ));
        }
        Ok(())
    }
}

fn sample_fourier<T: Scalar>(rng: &mut ChaCha8Rng, ff: FourierFeatures, in_dim: usize) -> Array2<T> {
    let normal = Normal::new(0.0, ff.scale).expect("validated scale");
    Array2::from_shape_fn((ff.count, in_dim), |_| T::lit(normal.sample(rng)))
}

/// Per-layer intermediate values for a batch of rows.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Encoded input `h_0` (the raw coordinates without Fourier features).
    pub input: Array2<T>,
    /// `W_l h_{l-1} + b_l` for every layer; the last entry is the output.
    pub affine: Vec<Array2<T>>,
    /// `h_l` for every hidden layer.
    pub hidden: Vec<Array2<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn depth(&self) -> usize {
        self.affine.len()
    }

    pub fn rows(&self) -> usize {
        self.input.nrows()
    }

    pub fn output(&self) -> ArrayView2<'_, T> {
        self.affine.last().expect("depth >= 1").view()
    }

    fn layer_input(&self, layer: usize) -> ArrayView2<'_, T> {
        if layer == 0 {
            self.input.view()
        } else {
            self.hidden[layer - 1].view()
        }
    }
}

/// `d f_c(x) / d theta` for one coordinate: `out_dim x P`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerExampleJacobian<T> {
    pub rows: Array2<T>,
}

impl<T: Scalar> PerExampleJacobian<T> {
    pub fn frobenius_sq(&self) -> T {
        self.rows.iter().map(|&v| v * v).sum()
    }
}

fn check_inputs<T>(config: &NetworkConfig, x: &ArrayView2<'_, T>) -> Result<()> {
    if x.ncols() != config.in_dim {
        return Err(Error::shape(format!("{} coordinate columns", config.in_dim), x.ncols()));
    }
    Ok(())
}

fn encode<T: Scalar>(params: &MlpParams<T>, x: ArrayView2<'_, T>) -> Array2<T> {
    match &params.fourier {
        None => x.to_owned(),
        Some(b) => {
            let two_pi = T::lit(2.0) * T::PI();
            let proj = x.dot(&b.t()).mapv(|v| v * two_pi);
            let count = b.nrows();
            let mut out = Array2::zeros((x.nrows(), 2 * count));
            out.slice_mut(s![.., ..count]).assign(&proj.mapv(T::sin));
            out.slice_mut(s![.., count..]).assign(&proj.mapv(T::cos));
            out
        }
    }
}

fn affine<T: Scalar>(params: &MlpParams<T>, layer: usize, h: ArrayView2<'_, T>) -> Array2<T> {
    let mut a = h.dot(&params.weight(layer).t());
    a += &params.bias(layer);
    a
}

fn activate<T: Scalar>(config: &NetworkConfig, a: &Array2<T>) -> Array2<T> {
    match config.activation {
        Activation::Sine => {
            let omega = T::lit(config.omega0);
            a.mapv(|v| (omega * v).sin())
        }
        Activation::Relu => a.mapv(|v| v.max(T::zero())),
    }
}

/// `d h / d a` elementwise for a hidden layer.
fn activation_slope<T: Scalar>(config: &NetworkConfig, a: &Array2<T>) -> Array2<T> {
    match config.activation {
        Activation::Sine => {
            let omega = T::lit(config.omega0);
            a.mapv(|v| omega * (omega * v).cos())
        }
        Activation::Relu => a.mapv(|v| if v > T::zero() { T::one() } else { T::zero() }),
    }
}

fn forward_rows<T: Scalar>(params: &MlpParams<T>, config: &NetworkConfig, x: ArrayView2<'_, T>) -> ForwardCache<T> {
    let input = encode(params, x);
    let depth = params.layout.len();
    let mut affines = Vec::with_capacity(depth);
    let mut hidden = Vec::with_capacity(depth.saturating_sub(1));
    for layer in 0..depth {
        let h = if layer == 0 {
            input.view()
        } else {
            hidden.last().map(|h: &Array2<T>| h.view()).unwrap()
        };
        let a = affine(params, layer, h);
        if layer + 1 < depth {
            hidden.push(activate(config, &a));
        }
        affines.push(a);
    }
    ForwardCache {
        input,
        affine: affines,
        hidden,
    }
}

/// Evaluates the network on every row of `x`, keeping the per-layer cache.
pub fn forward<T: Scalar>(
    params: &MlpParams<T>,
    config: &NetworkConfig,
    x: ArrayView2<'_, T>,
) -> Result<(Array2<T>, ForwardCache<T>)> {
    params.check(config)?;
    check_inputs(config, &x)?;
    let cache = forward_rows(params, config, x);
    Ok((cache.output().to_owned(), cache))
}

/// Outputs only, evaluated chunk-wise.
pub fn predict<T: Scalar>(
    params: &MlpParams<T>,
    config: &NetworkConfig,
    x: ArrayView2<'_, T>,
    par: &Parallelism,
) -> Result<Array2<T>> {
    params.check(config)?;
    check_inputs(config, &x)?;
    let parts = par.map_chunks(x.nrows(), |r| {
        forward_rows(params, config, x.slice(s![r, ..]))
            .affine
            .pop()
            .expect("depth >= 1")
    });
    concat_rows(parts, config.out_dim)
}

fn concat_rows<T: Scalar>(parts: Vec<Array2<T>>, cols: usize) -> Result<Array2<T>> {
    if parts.is_empty() {
        return Ok(Array2::zeros((0, cols)));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::shape("row blocks", e))
}

/// Adds `sum_i J_i^T seed_i` for the cached rows into `grad`.
fn backward_into<T: Scalar>(
    params: &MlpParams<T>,
    config: &NetworkConfig,
    cache: &ForwardCache<T>,
    seed: ArrayView2<'_, T>,
    grad: &mut [T],
) {
    let depth = params.layout.len();
    let mut delta = seed.to_owned();
    for layer in (0..depth).rev() {
        let l = params.layout[layer];
        let h_prev = cache.layer_input(layer);
        {
            let mut gw = ArrayViewMut2::from_shape((l.fan_out, l.fan_in), &mut grad[l.weight_offset..l.bias_offset])
                .expect("layout matches gradient");
            general_mat_mul(T::one(), &delta.t(), &h_prev, T::one(), &mut gw);
        }
        for (g, d) in grad[l.bias_offset..l.end()].iter_mut().zip(delta.sum_axis(Axis(0))) {
            *g += d;
        }
        if layer > 0 {
            let dh = delta.dot(&params.weight(layer));
            delta = dh * activation_slope(config, &cache.affine[layer - 1]);
        }
    }
}

/// Reverse mode: `sum_i J(x_i)^T seed_i`, a vector of length `P`.
pub fn vjp_sum<T: Scalar>(
    params: &MlpParams<T>,
    config: &NetworkConfig,
    x: ArrayView2<'_, T>,
    seed: ArrayView2<'_, T>,
    par: &Parallelism,
) -> Result<Vec<T>> {
    params.check(config)?;
    check_inputs(config, &x)?;
    if seed.dim() != (x.nrows(), config.out_dim) {
        return Err(Error::shape(
            format!("seed {}x{}", x.nrows(), config.out_dim),
            format!("{:?}", seed.dim()),
        ));
    }
    let parts = par.map_chunks(x.nrows(), |r| {
        let cache = forward_rows(params, config, x.slice(s![r.clone(), ..]));
        let mut grad = vec![T::zero(); params.len()];
        backward_into(params, config, &cache, seed.slice(s![r, ..]), &mut grad);
        grad
    });
    let mut total = vec![T::zero(); params.len()];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    Ok(total)
}

/// Per-example gradient of `1/2 |f - y|^2` with respect to `f`: `f - y`.
pub fn loss_grad_output<T: Scalar>(outputs: ArrayView2<'_, T>, targets: ArrayView2<'_, T>) -> Result<Array2<T>> {
    if outputs.dim() != targets.dim() {
        return Err(Error::shape(
            format!("{:?}", targets.dim()),
            format!("{:?}", outputs.dim()),
        ));
    }
    Ok(&outputs - &targets)
}

/// Mean over the batch of `1/2 |f(x_i) - y_i|^2`.
pub fn loss<T: Scalar>(outputs: ArrayView2<'_, T>, targets: ArrayView2<'_, T>) -> Result<T> {
    let g = loss_grad_output(outputs, targets)?;
    let rows = T::from_usize_lossy(outputs.nrows().max(1));
    Ok(g.iter().map(|&v| v * v).sum::<T>() / (T::lit(2.0) * rows))
}

/// Gradient of the batch-mean loss `1/|B| sum_i 1/2 |f(x_i) - y_i|^2` with
/// respect to `theta`.
pub fn param_grad<T: Scalar>(
    params: &MlpParams<T>,
    config: &NetworkConfig,
    x: ArrayView2<'_, T>,
    y: ArrayView2<'_, T>,
    par: &Parallelism,
) -> Result<Vec<T>> {
    params.check(config)?;
    check_inputs(config, &x)?;
    if x.nrows() == 0 {
        return Err(Error::shape("a nonempty batch", 0));
    }
    if y.dim() != (x.nrows(), config.out_dim) {
        return Err(Error::shape(
            format!("targets {}x{}", x.nrows(), config.out_dim),
            format!("{:?}", y.dim()),
        ));
    }
    let parts = par.map_chunks(x.nrows(), |r| {
        let cache = forward_rows(params, config, x.slice(s![r.clone(), ..]));
        let g = &cache.output() - &y.slice(s![r, ..]);
        let mut grad = vec![T::zero(); params.len()];
        backward_into(params, config, &cache, g.view(), &mut grad);
        grad
    });
    let scale = T::one() / T::from_usize_lossy(x.nrows());
    let mut total = vec![T::zero(); params.len()];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    for t in &mut total {
        *t *= scale;
    }
    Ok(total)
}

/// Rows of `d f(x) / d theta` for a single coordinate, one reverse pass per
/// output channel.
pub fn output_jacobian<T: Scalar>(
    params: &MlpParams<T>,
    config: &NetworkConfig,
    x: ArrayView1<'_, T>,
) -> Result<PerExampleJacobian<T>> {
    params.check(config)?;
    if x.len() != config.in_dim {
        return Err(Error::shape(
            format!("{} coordinate components", config.in_dim),
            x.len(),
        ));
    }
    let x = x.insert_axis(Axis(0));
    let cache = forward_rows(params, config, x);
    let n = config.out_dim;
    let mut rows = Array2::zeros((n, params.len()));
    for c in 0..n {
        let mut seed = Array2::zeros((1, n));
        seed[[0, c]] = T::one();
        let mut grad = vec![T::zero(); params.len()];
        backward_into(params, config, &cache, seed.view(), &mut grad);
        rows.row_mut(c).assign(&Array1::from(grad));
    }
    Ok(PerExampleJacobian { rows })
}

/// Forward mode: `J(x_i) v` for every row, returned as `rows x out_dim`.
pub fn jvp<T: Scalar>(
    params: &MlpParams<T>,
    config: &NetworkConfig,
    x: ArrayView2<'_, T>,
    tangent: &[T],
    par: &Parallelism,
) -> Result<Array2<T>> {
    params.check(config)?;
    check_inputs(config, &x)?;
    if tangent.len() != params.len() {
        return Err(Error::shape(
            format!("tangent of length {}", params.len()),
            tangent.len(),
        ));
    }
    let depth = params.layout.len();
    let parts = par.map_chunks(x.nrows(), |r| {
        let mut h = encode(params, x.slice(s![r, ..]));
        let mut h_dot: Option<Array2<T>> = None;
        for layer in 0..depth {
            let l = params.layout[layer];
            let w_dot = ArrayView2::from_shape((l.fan_out, l.fan_in), &tangent[l.weight_offset..l.bias_offset])
                .expect("layout matches tangent");
            let b_dot = ArrayView1::from(&tangent[l.bias_offset..l.end()]);
            let a = affine(params, layer, h.view());
            let mut a_dot = h.dot(&w_dot.t());
            a_dot += &b_dot;
            if let Some(hd) = &h_dot {
                general_mat_mul(T::one(), hd, &params.weight(layer).t(), T::one(), &mut a_dot);
            }
            if layer + 1 == depth {
                return a_dot;
            }
            h_dot = Some(a_dot * activation_slope(config, &a));
            h = activate(config, &a);
        }
        unreachable!("depth >= 1")
    });
    concat_rows(parts, config.out_dim)
}
