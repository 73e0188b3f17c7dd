//! Replicate execution: rayon-backed when the `parallel` feature is on,
//! with a sequential path that is always available.
//!
//! Results are always returned in replicate order, so any fold over them
//! is independent of the worker count.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Executor {
    Sequential,
    /// Parallel over replicates; `threads = None` uses the ambient rayon pool.
    /// Without the `parallel` feature this runs sequentially.
    #[default]
    Parallel,
    ParallelWith {
        threads: usize,
    },
}

impl Executor {
    pub fn with_threads(threads: Option<usize>) -> Self {
        match threads {
            Some(0) | None => Executor::Parallel,
            Some(1) => Executor::Sequential,
            Some(t) => Executor::ParallelWith { threads: t },
        }
    }

    /// Evaluates `task(i)` for each index in `indices` and returns the
    /// results in the order of `indices`.
    pub fn map<T, F>(&self, indices: &[u64], task: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        match self {
            Executor::Sequential => indices.iter().map(|&i| task(i)).collect(),
            #[cfg(feature = "parallel")]
            Executor::Parallel => par_map(indices, &task),
            #[cfg(feature = "parallel")]
            Executor::ParallelWith { threads } => {
                match rayon::ThreadPoolBuilder::new().num_threads(*threads).build() {
                    Ok(pool) => pool.install(|| par_map(indices, &task)),
                    Err(_) => par_map(indices, &task),
                }
            }
            #[cfg(not(feature = "parallel"))]
            _ => indices.iter().map(|&i| task(i)).collect(),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(indices: &[u64], task: &F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    indices.par_iter().map(|&i| task(i)).collect()
}
