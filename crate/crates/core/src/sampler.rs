//! Per-iteration coordinate selection and batch-size schedules.
//!
//! Every selector returns distinct in-range indices sorted ascending, so a
//! batch covering all coordinates is indistinguishable from full-batch
//! training.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use rand::{seq::index, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ntk::ScoreVector;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Full,
    Uniform,
    ErrorTopk,
    Nint,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Full, Strategy::Uniform, Strategy::ErrorTopk, Strategy::Nint];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Full => "full",
            Strategy::Uniform => "uniform",
            Strategy::ErrorTopk => "error_topk",
            Strategy::Nint => "nint",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown strategy `{s}` (expected full, uniform, error_topk or nint)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheduler {
    Constant,
    Step,
    Linear,
}

impl Scheduler {
    pub fn name(self) -> &'static str {
        match self {
            Scheduler::Constant => "constant",
            Scheduler::Step => "step",
            Scheduler::Linear => "linear",
        }
    }
}

impl FromStr for Scheduler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Scheduler::Constant),
            "step" => Ok(Scheduler::Step),
            "linear" => Ok(Scheduler::Linear),
            other => Err(Error::Config(format!(
                "unknown scheduler `{other}` (expected constant, step or linear)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    /// Batch size as a fraction of the dataset, in `(0, 1]`.
    pub batch_fraction: f64,
    /// Share of each batch drawn uniformly at random.
    pub xi: f64,
    /// Iterations between NTK score refreshes.
    pub alpha: usize,
    /// Decay rate of the NTK share; `+inf` drops it to zero after `t = 0`.
    pub lambda_decay: f64,
    pub scheduler: Scheduler,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Nint,
            batch_fraction: 0.2,
            xi: 0.7,
            alpha: 10,
            lambda_decay: 1.0,
            scheduler: Scheduler::Constant,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    /// Checks the ranges and that the base batch is non-empty for `len` coordinates.
    pub fn validate(&self, len: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return fail(format!(
                "sampler.batch_fraction must be in (0, 1], got {}",
                self.batch_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return fail(format!("sampler.xi must be in [0, 1], got {}", self.xi));
        }
        if self.alpha == 0 {
            return fail("sampler.alpha must be at least 1".into());
        }
        if self.lambda_decay.is_nan() || self.lambda_decay < 0.0 {
            return fail(format!("sampler.lambda_decay must be >= 0, got {}", self.lambda_decay));
        }
        if base_batch(self.batch_fraction, len) < 1 {
            return fail(format!(
                "sampler.batch_fraction {} selects no coordinates out of {len}",
                self.batch_fraction
            ));
        }
        Ok(())
    }
}

fn base_batch(fraction: f64, len: usize) -> usize {
    (fraction * len as f64).round() as usize
}

/// Batch size at iteration `t` of a run of `total` iterations over `len` coordinates.
pub fn batch_size_at(config: &SamplerConfig, t: usize, total: usize, len: usize) -> usize {
    let base = base_batch(config.batch_fraction, len);
    let size = match config.scheduler {
        Scheduler::Constant => base,
        Scheduler::Step if 2 * t >= total => base.saturating_mul(2),
        Scheduler::Step => base,
        Scheduler::Linear => {
            let progress = if total == 0 {
                1.0
            } else {
                (t as f64 / total as f64).min(1.0)
            };
            (base as f64 + (len as f64 - base as f64) * progress).round() as usize
        }
    };
    size.clamp(1, len.max(1))
}

/// Shares of the batch given to each pool at one iteration; they sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolRatios {
    pub random: f64,
    pub ntk: f64,
    pub error: f64,
}

pub fn ntk_decay(lambda: f64, alpha: usize, t: usize) -> f64 {
    if t == 0 {
        1.0
    } else {
        (-lambda * t as f64 / alpha as f64).exp()
    }
}

pub fn pool_ratios(config: &SamplerConfig, t: usize) -> PoolRatios {
    let guided = 1.0 - config.xi;
    let ntk = guided * ntk_decay(config.lambda_decay, config.alpha, t);
    PoolRatios {
        random: config.xi,
        ntk,
        error: guided - ntk,
    }
}

/// Number of indices each pool contributes to a batch of `batch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolCounts {
    pub ntk: usize,
    pub error: usize,
    pub random: usize,
}

pub fn pool_counts(ratios: &PoolRatios, batch: usize) -> PoolCounts {
    let share = |r: f64| (r * batch as f64).round() as usize;
    let ntk = share(ratios.ntk).min(batch);
    let random = share(ratios.random).min(batch - ntk);
    PoolCounts {
        ntk,
        error: batch - ntk - random,
        random,
    }
}

fn check_batch(batch: usize, len: usize) -> Result<()> {
    if batch == 0 || batch > len {
        return Err(Error::BatchTooLarge { batch, len });
    }
    Ok(())
}

/// Deterministic stream for iteration `t` of a run seeded with `seed`.
pub fn iteration_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

pub fn select_full(len: usize) -> Vec<usize> {
    (0..len).collect()
}

/// `batch` distinct indices drawn uniformly without replacement.
pub fn select_uniform(seed: u64, t: usize, len: usize, batch: usize) -> Result<Vec<usize>> {
    check_batch(batch, len)?;
    let mut picked = index::sample(&mut iteration_rng(seed, t), len, batch).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Per-row Euclidean norms of the loss-output gradient.
pub fn gradient_norms<T: Scalar>(g: ArrayView2<'_, T>) -> Result<Vec<T>> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("loss-output gradient"));
    }
    Ok(g.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect())
}

/// Ranks `candidates` by `key` descending, ties by ascending index, and keeps `k`.
fn top_k<T: Scalar>(key: &[T], candidates: impl Iterator<Item = usize>, k: usize) -> Vec<usize> {
    let mut ranked: Vec<usize> = candidates.collect();
    ranked.sort_unstable_by(|&a, &b| key[b].partial_cmp(&key[a]).expect("finite keys").then(a.cmp(&b)));
    ranked.truncate(k);
    ranked
}

/// Indices of the `batch` largest per-row gradient norms.
pub fn select_error_topk<T: Scalar>(g: ArrayView2<'_, T>, batch: usize) -> Result<Vec<usize>> {
    check_batch(batch, g.nrows())?;
    let norms = gradient_norms(g)?;
    let mut picked = top_k(&norms, 0..norms.len(), batch);
    picked.sort_unstable();
    Ok(picked)
}

/// Cached NTK scores plus the counter used to audit refreshes.
#[derive(Debug, Clone)]
pub struct SelectionState<T> {
    cached_scores: Option<ScoreVector<T>>,
    last_ntk_iteration: Option<usize>,
    score_calls: usize,
}

impl<T> Default for SelectionState<T> {
    fn default() -> Self {
        Self {
            cached_scores: None,
            last_ntk_iteration: None,
            score_calls: 0,
        }
    }
}

impl<T: Scalar> SelectionState<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cached_scores(&self) -> Option<&ScoreVector<T>> {
        self.cached_scores.as_ref()
    }

    pub fn last_ntk_iteration(&self) -> Option<usize> {
        self.last_ntk_iteration
    }

    /// How many times fresh scores have been requested.
    pub fn score_calls(&self) -> usize {
        self.score_calls
    }

    fn refresh_scores<F>(&mut self, t: usize, alpha: usize, len: usize, score_fn: F) -> Result<&ScoreVector<T>>
    where
        F: FnOnce() -> Result<ScoreVector<T>>,
    {
        let stale = match self.last_ntk_iteration {
            Some(last) => t.saturating_sub(last) >= alpha,
            None => true,
        };
        if stale || self.cached_scores.is_none() {
            let mut fresh = score_fn()?;
            self.score_calls += 1;
            if fresh.len() != len {
                return Err(Error::shape(format!("{len} scores"), fresh.len()));
            }
            fresh.iteration_computed = t;
            self.cached_scores = Some(fresh);
            self.last_ntk_iteration = Some(t);
        }
        Ok(self.cached_scores.as_ref().expect("just cached"))
    }

    /// Hybrid selection: NTK-score top picks, then error top picks among the
    /// rest, then uniform draws from what remains.
    pub fn select_nint<F>(
        &mut self,
        config: &SamplerConfig,
        t: usize,
        g: ArrayView2<'_, T>,
        batch: usize,
        score_fn: F,
    ) -> Result<Vec<usize>>
    where
        F: FnOnce() -> Result<ScoreVector<T>>,
    {
        let len = g.nrows();
        check_batch(batch, len)?;
        let norms = gradient_norms(g)?;
        let counts = pool_counts(&pool_ratios(config, t), batch);
        let scores = self.refresh_scores(t, config.alpha, len, score_fn)?;

        let mut taken = vec![false; len];
        let mut picked = Vec::with_capacity(batch);
        for i in top_k(&scores.scores, 0..len, counts.ntk) {
            taken[i] = true;
            picked.push(i);
        }
        let open: Vec<usize> = (0..len).filter(|&i| !taken[i]).collect();
        for i in top_k(&norms, open.into_iter(), counts.error) {
            taken[i] = true;
            picked.push(i);
        }
        let remaining: Vec<usize> = (0..len).filter(|&i| !taken[i]).collect();
        let draws = index::sample(&mut iteration_rng(config.seed, t), remaining.len(), counts.random);
        picked.extend(draws.into_iter().map(|k| remaining[k]));

        picked.sort_unstable();
        Ok(picked)
    }

    /// Dispatches on the configured strategy. `score_fn` runs only for NINT.
    pub fn select<F>(
        &mut self,
        config: &SamplerConfig,
        t: usize,
        g: ArrayView2<'_, T>,
        batch: usize,
        score_fn: F,
    ) -> Result<Vec<usize>>
    where
        F: FnOnce() -> Result<ScoreVector<T>>,
    {
        let len = g.nrows();
        match config.strategy {
            Strategy::Full => Ok(select_full(len)),
            Strategy::Uniform => select_uniform(config.seed, t, len, batch),
            Strategy::ErrorTopk => select_error_topk(g, batch),
            Strategy::Nint => self.select_nint(config, t, g, batch, score_fn),
        }
    }
}

/// Pool ratios `(ntk, error)` reported in the training log for a strategy.
pub fn logged_ratios(config: &SamplerConfig, t: usize) -> (f64, f64) {
    match config.strategy {
        Strategy::Nint => {
            let r = pool_ratios(config, t);
            (r.ntk, r.error)
        }
        Strategy::ErrorTopk => (0.0, 1.0),
        Strategy::Full | Strategy::Uniform => (0.0, 0.0),
    }
}
