//! Parallel-map capability with deterministic ordering.
//!
//! Estimators split their work into fixed-size batches (independent of the
//! thread count), hand the batch indices to an [`Executor`], and reduce the
//! per-batch partials in index order. An executor only decides *where* a
//! batch runs; the output of `map` is always ordered by index.

use alloc::vec::Vec;
use core::ops::Range;

/// Default number of Monte Carlo draws (or paths) per batch.
pub const BATCH: usize = 2048;

pub trait Executor: Sync {
    /// Evaluates `f(0), …, f(count − 1)` and returns the results in index
    /// order.
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every task on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(f).collect()
    }
}

/// Number of batches of size `batch` needed to cover `n` items.
pub fn batch_count(n: usize, batch: usize) -> usize {
    n.div_ceil(batch)
}

/// Item range of batch `index`.
pub fn batch_range(n: usize, batch: usize, index: usize) -> Range<usize> {
    let start = index * batch;
    start..(start + batch).min(n)
}
