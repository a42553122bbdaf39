//! Batch execution over independent work items.
//!
//! With the `parallel` feature (on by default) batches run on a rayon pool;
//! without it every batch runs sequentially on the calling thread. Results are
//! always returned in input order, so output never depends on scheduling.

/// How a batch of independent items is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Run on a thread pool. `workers = None` uses rayon's global pool.
    #[default]
    Parallel,
    ParallelWith { workers: usize },
}

impl Execution {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(0) | None => Execution::Parallel,
            Some(1) => Execution::Sequential,
            Some(n) => Execution::ParallelWith { workers: n },
        }
    }

    /// Whether this build can actually run batches concurrently.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Apply `f` to every item, preserving order.
pub fn map_batch<T, R, F>(items: &[T], execution: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match execution {
        Execution::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        #[cfg(feature = "parallel")]
        Execution::ParallelWith { workers } => {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(f).collect()),
                Err(_) => items.iter().map(f).collect(),
            }
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel | Execution::ParallelWith { .. } => items.iter().map(f).collect(),
    }
}

/// Apply `f` to every index in `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, execution: Execution, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    map_batch(&idx, execution, |&i| f(i))
}
