//! Thread-pool execution of per-instance work.

use rayon::prelude::*;
use xpe_core::{Executor, Result};

/// Runs tasks on a dedicated rayon pool; results come back in index order,
/// so output does not depend on the thread count.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// `threads = 0` uses the available parallelism.
    pub fn new(threads: usize) -> std::result::Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for RayonExecutor {
    fn map<T, F>(&self, n: usize, task: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        // collect everything, then report the lowest-index error
        let results: Vec<Result<T>> = self.pool.install(|| (0..n).into_par_iter().map(task).collect());
        results.into_iter().collect()
    }
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
