//! Empirical neural tangent kernel and NINT scores.
//!
//! For per-example Jacobians `J_i = d f(x_i) / d theta` (each `n x P`), the
//! kernel block between examples `i` and `j` is `J_i J_j^T`. The NINT score
//! of example `i` is `s_i = |sum_j K(x_i, x_j) g_j|` where `g_j` is the
//! loss-output gradient. Because `sum_j J_i J_j^T g_j = J_i (sum_j J_j^T g_j)`,
//! [`nint_scores_factorized`] gets every score from one reverse pass over the
//! dataset (producing `v = J^T g`) and one forward-mode pass (`J_i v`),
//! never forming the `N x N` kernel. The exact kernel is kept for small
//! problems as an oracle and for dumping patches.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::metrics::format_value;
use crate::network::{self, MlpParams, NetworkConfig, PerExampleJacobian};
use crate::parallel::Parallelism;
use crate::scalar::Scalar;

/// Largest `N * n` for which the full kernel is materialized.
pub const EXACT_GUARD: usize = 4096;
/// Largest `N * n * n` for a single kernel row block.
pub const ROW_GUARD: usize = 1 << 22;

/// `(N n) x (N n)` kernel in example-major block order.
#[derive(Debug, Clone, PartialEq)]
pub struct NtkMatrix<T> {
    entries: Array2<T>,
    len: usize,
    out_dim: usize,
}

impl<T: Scalar> NtkMatrix<T> {
    pub fn from_entries(entries: Array2<T>, len: usize, out_dim: usize) -> Result<Self> {
        let side = len * out_dim;
        if entries.dim() != (side, side) {
            return Err(Error::shape(format!("{side}x{side}"), format!("{:?}", entries.dim())));
        }
        Ok(Self { entries, len, out_dim })
    }

    /// The identity kernel: scores reduce to `|g_i|`.
    pub fn identity(len: usize, out_dim: usize) -> Self {
        Self {
            entries: Array2::eye(len * out_dim),
            len,
            out_dim,
        }
    }

    pub fn entries(&self) -> ArrayView2<'_, T> {
        self.entries.view()
    }

    /// Number of examples `N`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// The `n x n` block `J_i J_j^T`.
    pub fn block(&self, i: usize, j: usize) -> ArrayView2<'_, T> {
        let n = self.out_dim;
        self.entries.slice(s![i * n..(i + 1) * n, j * n..(j + 1) * n])
    }

    /// Self-leverage `trace(J_i J_i^T) = |J_i|_F^2` per example.
    pub fn self_leverage(&self) -> Vec<T> {
        (0..self.len).map(|i| self.block(i, i).diag().sum()).collect()
    }

    pub fn max_asymmetry(&self) -> T {
        let e = &self.entries;
        let mut worst = T::zero();
        for a in 0..e.nrows() {
            for b in a + 1..e.ncols() {
                worst = worst.max((e[[a, b]] - e[[b, a]]).abs());
            }
        }
        worst
    }

    /// Restriction to the given examples, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> Result<Self> {
        let n = self.out_dim;
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len) {
            return Err(Error::shape(format!("indices below {}", self.len), bad));
        }
        let side = indices.len() * n;
        let entries = Array2::from_shape_fn((side, side), |(a, b)| {
            self.entries[[indices[a / n] * n + a % n, indices[b / n] * n + b % n]]
        });
        Ok(Self {
            entries,
            len: indices.len(),
            out_dim: n,
        })
    }

    /// Row-major CSV with 17 significant digits, preceded by a comment header.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# nint ntk v1 N={} n={}\n", self.len, self.out_dim);
        for row in self.entries.rows() {
            let line: Vec<String> = row.iter().map(|v| format_sig17(v.to_f64_lossy())).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// One text header line `N=<N> n=<n>` followed by little-endian `f64` entries.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = format!("N={} n={}\n", self.len, self.out_dim).into_bytes();
        for v in self.entries.iter() {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<NtkMatrix<f64>> {
        let bad = |why: &str| Error::decode("<ntk binary>", why);
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header"))?;
        let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| bad("header is not UTF-8"))?;
        let mut len = None;
        let mut out_dim = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("N", v)) => len = v.parse().ok(),
                Some(("n", v)) => out_dim = v.parse().ok(),
                _ => return Err(bad("unknown header field")),
            }
        }
        let (len, out_dim): (usize, usize) = (
            len.ok_or_else(|| bad("missing N"))?,
            out_dim.ok_or_else(|| bad("missing n"))?,
        );
        let side = len * out_dim;
        let payload = &bytes[newline + 1..];
        if payload.len() != side * side * 8 {
            return Err(bad("payload length does not match header"));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        NtkMatrix::from_entries(
            Array2::from_shape_vec((side, side), values).expect("length checked"),
            len,
            out_dim,
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_binary()).map_err(|e| Error::io(path, e))
    }
}

fn format_sig17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format_value(v)
    }
}

/// Per-coordinate selection scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector<T> {
    pub scores: Vec<T>,
    pub iteration_computed: usize,
}

impl<T: Scalar> ScoreVector<T> {
    pub fn new(scores: Vec<T>, iteration_computed: usize) -> Result<Self> {
        if scores.iter().any(|s| !(s.is_finite() && *s >= T::zero())) {
            return Err(Error::NonFinite("scores"));
        }
        Ok(Self {
            scores,
            iteration_computed,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn guard(what: &'static str, requested: usize, limit: usize) -> Result<()> {
    if requested > limit {
        return Err(Error::GuardExceeded { what, requested, limit });
    }
    Ok(())
}

/// Jacobians of every row of `x`, stacked into an `(N n) x P` matrix.
fn stacked_jacobians<T: Scalar>(
    params: &MlpParams<T>,
    config: &NetworkConfig,
    x: ArrayView2<'_, T>,
) -> Result<Array2<T>> {
    let n = config.out_dim;
    let mut stacked = Array2::zeros((x.nrows() * n, params.len()));
    for (i, row) in x.rows().into_iter().enumerate() {
        let PerExampleJacobian { rows } = network::output_jacobian(params, config, row)?;
        stacked.slice_mut(s![i * n..(i + 1) * n, ..]).assign(&rows);
    }
    Ok(stacked)
}

/// Exact kernel over all rows of `x`. Requires `N n <= 4096`.
pub fn ntk_exact<T: Scalar>(
    params: &MlpParams<T>,
    config: &NetworkConfig,
    x: ArrayView2<'_, T>,
) -> Result<NtkMatrix<T>> {
    guard("exact NTK", x.nrows() * config.out_dim, EXACT_GUARD)?;
    let jac = stacked_jacobians(params, config, x)?;
    let mut entries = jac.dot(&jac.t());
    // mirror the upper triangle so the result is exactly symmetric
    let side = entries.nrows();
    for a in 0..side {
        for b in a + 1..side {
            entries[[b, a]] = entries[[a, b]];
        }
    }
    NtkMatrix::from_entries(entries, x.nrows(), config.out_dim)
}

/// The `n x (N n)` row block `[J_i J_1^T, ..., J_i J_N^T]` without forming
/// the full kernel.
pub fn ntk_row<T: Scalar>(
    params: &MlpParams<T>,
    config: &NetworkConfig,
    xi: ArrayView1<'_, T>,
    x: ArrayView2<'_, T>,
) -> Result<Array2<T>> {
    let n = config.out_dim;
    guard("NTK row", x.nrows() * n * n, ROW_GUARD)?;
    let ji = network::output_jacobian(params, config, xi)?.rows;
    let mut row = Array2::zeros((n, x.nrows() * n));
    for (j, xj) in x.rows().into_iter().enumerate() {
        let jj = network::output_jacobian(params, config, xj)?.rows;
        row.slice_mut(s![.., j * n..(j + 1) * n]).assign(&ji.dot(&jj.t()));
    }
    Ok(row)
}

/// Exact kernel restricted to the rows of `x` listed in `indices`.
pub fn ntk_patch<T: Scalar>(
    params: &MlpParams<T>,
    config: &NetworkConfig,
    x: ArrayView2<'_, T>,
    indices: &[usize],
) -> Result<NtkMatrix<T>> {
    guard("NTK patch", indices.len() * config.out_dim, EXACT_GUARD)?;
    if let Some(&bad) = indices.iter().find(|&&i| i >= x.nrows()) {
        return Err(Error::shape(format!("indices below {}", x.nrows()), bad));
    }
    let rows = x.select(ndarray::Axis(0), indices);
    ntk_exact(params, config, rows.view())
}

fn check_gradient<T: Scalar>(g: &ArrayView2<'_, T>, len: usize, out_dim: usize) -> Result<()> {
    if g.dim() != (len, out_dim) {
        return Err(Error::shape(format!("g {len}x{out_dim}"), format!("{:?}", g.dim())));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("loss-output gradient"));
    }
    Ok(())
}

fn row_norms<T: Scalar>(m: &Array2<T>) -> Vec<T> {
    m.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect()
}

/// Explicit scores `|K(x_i, :) g|` from a materialized kernel.
pub fn scores_from_kernel<T: Scalar>(kernel: &NtkMatrix<T>, g: ArrayView2<'_, T>) -> Result<ScoreVector<T>> {
    check_gradient(&g, kernel.len, kernel.out_dim)?;
    let flat = g.iter().copied().collect::<ndarray::Array1<T>>();
    let kg = kernel.entries.dot(&flat);
    let per_example = kg
        .into_shape_with_order((kernel.len, kernel.out_dim))
        .expect("block layout");
    ScoreVector::new(row_norms(&per_example), 0)
}

/// NINT scores over all rows of `x`: `s_i = |J_i v|` with `v = sum_j J_j^T g_j`.
pub fn nint_scores_factorized<T: Scalar>(
    params: &MlpParams<T>,
    config: &NetworkConfig,
    x: ArrayView2<'_, T>,
    g: ArrayView2<'_, T>,
    par: &Parallelism,
) -> Result<ScoreVector<T>> {
    check_gradient(&g, x.nrows(), config.out_dim)?;
    let v = network::vjp_sum(params, config, x, g, par)?;
    let jv = network::jvp(params, config, x, &v, par)?;
    ScoreVector::new(row_norms(&jv), 0)
}

/// Human-readable `rows x cols` grid of values, one CSV line per row.
pub fn grid_csv<T: Scalar>(values: &[T], cols: usize) -> String {
    let mut out = String::from("# nint self-leverage v1\n");
    for row in values.chunks(cols.max(1)) {
        let line: Vec<String> = row.iter().map(|v| format_sig17(v.to_f64_lossy())).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}
