//! Trial-loop execution: rayon when the `parallel` feature is on,
//! sequential otherwise.
//!
//! Results come back indexed by trial, so aggregation is identical under
//! both backends and any scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map a closure over trial indices `0..trials`, in parallel when built
/// with the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn map_trials<T, F>(trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..trials).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_trials<T, F>(trials: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    map_trials_seq(trials, f)
}

/// Sequential reference path, always available (the benchmark baseline).
pub fn map_trials_seq<T, F>(trials: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..trials).map(f).collect()
}

/// Resolve the worker count: explicit request, then the
/// `SPIKED_DETECT_THREADS` environment variable, then all available
/// cores; then size the global pool accordingly. Returns the resolved
/// count (1 when built without the `parallel` feature).
pub fn configure_threads(requested: Option<usize>) -> usize {
    let from_env = || {
        std::env::var("SPIKED_DETECT_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0)
    };
    let n = requested.filter(|&n| n > 0).or_else(from_env);
    #[cfg(feature = "parallel")]
    {
        let n = n.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|p| p.get())
                .unwrap_or(1)
        });
        // Ignore the error when a pool already exists (tests, repeat calls).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        1
    }
}
