use dasmc_core::engine::Executor;
use rayon::prelude::*;

use crate::error::{CliError, CliResult};

/// Executor backed by a private rayon pool.
pub struct PoolExecutor {
    pool: rayon::ThreadPool,
}

impl PoolExecutor {
    /// `None` uses one worker per available core.
    pub fn new(workers: Option<usize>) -> CliResult<Self> {
        if workers == Some(0) {
            return Err(CliError::invalid("workers", "must be positive"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Runtime(format!("starting worker pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for PoolExecutor {
    fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_index_order() {
        let exec = PoolExecutor::new(Some(4)).unwrap();
        assert_eq!(exec.workers(), 4);
        let out = exec.map(1000, |i| i * i);
        assert!(out.iter().enumerate().all(|(i, &v)| v == i * i));
    }

    #[test]
    fn zero_workers_rejected() {
        assert_eq!(PoolExecutor::new(Some(0)).err().unwrap().exit_code(), 1);
    }
}
