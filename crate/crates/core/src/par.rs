//! Data-parallel map with a sequential fallback when the `parallel` feature
//! is off. Results always come back in input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return items.par_iter().map(f).collect();

    #[cfg(not(feature = "parallel"))]
    return items.iter().map(f).collect();
}

pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();

    #[cfg(not(feature = "parallel"))]
    return (0..n).map(f).collect();
}

pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    return rayon::current_num_threads();

    #[cfg(not(feature = "parallel"))]
    return 1;
}

/// Runs `f` on a pool of `jobs` threads (sequentially when `jobs == 1` or the
/// `parallel` feature is off).
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }

    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        f()
    }
}
