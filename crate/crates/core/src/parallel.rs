//! Data-parallel execution over fixed-size row chunks.
//!
//! Work is always split into the same chunks and partial results are
//! combined in chunk order, so output is bit-identical whether the chunks run
//! on one thread or many.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per work unit.
pub const CHUNK_ROWS: usize = 256;

/// Environment variable capping the worker count; 0 selects sequential mode.
pub const THREADS_ENV: &str = "NINT_THREADS";

#[derive(Clone, Default)]
pub struct Parallelism {
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Parallelism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Parallelism").field("threads", &self.threads()).finish()
    }
}

impl Parallelism {
    pub fn sequential() -> Self {
        Self { pool: None }
    }

    pub fn with_threads(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Ok(Self::sequential());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Self {
            pool: Some(Arc::new(pool)),
        })
    }

    /// Reads [`THREADS_ENV`]; unset means one worker per available core.
    pub fn from_env() -> Result<Self> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => {
                let threads = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
                Self::with_threads(threads)
            }
            Err(_) => Self::with_threads(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }

    pub fn threads(&self) -> usize {
        self.pool.as_ref().map_or(0, |p| p.current_num_threads())
    }

    /// Applies `f` to each chunk of `0..len` and returns the results in chunk order.
    pub fn map_chunks<R, F>(&self, len: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(Range<usize>) -> R + Sync,
    {
        let ranges: Vec<Range<usize>> = (0..len)
            .step_by(CHUNK_ROWS)
            .map(|start| start..(start + CHUNK_ROWS).min(len))
            .collect();
        match &self.pool {
            Some(pool) if ranges.len() > 1 => pool.install(|| ranges.into_par_iter().map(&f).collect()),
            _ => ranges.into_iter().map(f).collect(),
        }
    }
}
