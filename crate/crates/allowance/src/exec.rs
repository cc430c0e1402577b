use allowance_core::Executor;
use rayon::prelude::*;

/// Environment variable consulted when `--workers` is absent.
pub const WORKERS_ENV: &str = "ALLOWANCE_WORKERS";

/// Runs index-ordered maps on a dedicated rayon pool; results are returned
/// in index order, so output does not depend on the worker count.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    pub fn new(workers: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
        Ok(RayonExecutor { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for RayonExecutor {
    fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, n: usize, f: F) -> Vec<T> {
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }
}

/// `flag`, else the environment variable, else 0 (one worker per core).
pub fn resolve_workers(flag: Option<usize>) -> Result<usize, String> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| format!("{WORKERS_ENV}: expected a worker count, got {v:?}")),
        Err(_) => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use allowance_core::Sequential;

    #[test]
    fn parallel_map_keeps_index_order() {
        let exec = RayonExecutor::new(4).unwrap();
        let f = |i: usize| (i as f64).sqrt() * 3.0;
        assert_eq!(exec.map(1000, f), Sequential.map(1000, f));
        assert_eq!(exec.workers(), 4);
    }

    #[test]
    fn explicit_flag_wins() {
        assert_eq!(resolve_workers(Some(3)), Ok(3));
    }
}
