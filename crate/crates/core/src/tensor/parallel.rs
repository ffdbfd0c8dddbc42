//! Thread-count control for the kernels.
//!
//! Kernels split work into fixed-size chunks whose boundaries never depend
//! on the number of threads, so every output element is produced by the same
//! sequence of floating-point operations whatever the pool size.

use crate::error::{Error, Result};

/// Environment variable consulted by [`threads_from_env`].
pub const THREADS_ENV: &str = "CSRNET_THREADS";

/// Runs `f` inside a dedicated pool of `threads` workers (0 = hardware default).
pub fn with_threads<R, F>(threads: usize, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Number of workers in the pool the caller is running on.
pub fn current_threads() -> usize {
    rayon::current_num_threads()
}

pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok()
}
