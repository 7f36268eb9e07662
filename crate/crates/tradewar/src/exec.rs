use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};
use tradewar_core::Executor;

use crate::error::{Error, Result};

/// A fixed-size worker pool. Results come back in index order, so outputs do
/// not depend on the number of workers.
pub struct Threads {
    pool: ThreadPool,
}

impl Threads {
    pub fn new(workers: usize) -> Result<Self> {
        let n = if workers == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { workers };
        let pool = ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Error::Invalid(e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Threads {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}
