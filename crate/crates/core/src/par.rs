//! Index-parallel map with a sequential fallback.
//!
//! Work items are identified by their index and results come back in index
//! order, so every reduction over them is independent of scheduling. With the
//! `parallel` feature disabled, [`Execution::Parallel`] runs sequentially.

use std::sync::OnceLock;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "MLAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Map `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        Execution::Parallel => parallel_map(n, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    pool().install(|| (0..n).into_par_iter().map(f).collect())
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

static REQUESTED: OnceLock<usize> = OnceLock::new();

/// Request a worker count (e.g. from `--threads`). `MLAB_THREADS` wins over
/// this; the first call fixes the value for the process.
pub fn set_threads(n: usize) {
    let _ = REQUESTED.set(n);
}

/// Worker count: `MLAB_THREADS`, then [`set_threads`], then available cores.
pub fn threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .or_else(|| REQUESTED.get().copied().filter(|&n| n > 0))
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[cfg(feature = "parallel")]
fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads())
            .build()
            .expect("thread pool")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_matches_sequential() {
        let f = |i: u64| i.wrapping_mul(2654435761) % 1000;
        assert_eq!(
            map_indexed(Execution::Sequential, 500, f),
            map_indexed(Execution::Parallel, 500, f)
        );
    }
}
