//! Index-parallel map with a sequential fallback.
//!
//! Callers express data-parallel work as "compute item `i` for `i` in
//! `0..n`" and always receive the results in index order, so any reduction
//! they perform afterwards is deterministic regardless of thread count.

use std::sync::atomic::{AtomicU8, Ordering};

/// Execution strategy for [`map_indexed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

static MODE: AtomicU8 = AtomicU8::new(1);

/// Below this many items the rayon hand-off costs more than it saves.
#[cfg(feature = "parallel")]
const MIN_PARALLEL_ITEMS: usize = 4;

pub fn set_mode(mode: ExecMode) {
    MODE.store(matches!(mode, ExecMode::Parallel) as u8, Ordering::Relaxed);
}

/// Effective mode: always sequential when built without `parallel`.
pub fn mode() -> ExecMode {
    if cfg!(feature = "parallel") && MODE.load(Ordering::Relaxed) == 1 {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    }
}

/// Returns `[f(0), f(1), ..., f(n-1)]`.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n >= MIN_PARALLEL_ITEMS && mode() == ExecMode::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Fallible variant of [`map_indexed`]; the first error by index wins.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(n, f).into_iter().collect()
}
