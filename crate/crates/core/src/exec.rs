//! Execution strategy for independent per-instance work.
//!
//! Results are always returned in index order, so any executor yields the
//! same output as [`Sequential`] as long as each task seeds its own RNG.

use alloc::vec::Vec;

use crate::error::Result;

pub trait Executor {
    fn map<T, F>(&self, n: usize, task: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send;
}

/// Runs tasks one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, task: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        (0..n).map(task).collect()
    }
}
