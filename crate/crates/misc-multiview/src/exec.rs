//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the maps run on rayon's pool;
//! without it they run as plain loops. Results are always placed by index
//! and any floating-point reduction happens afterwards in index order, so
//! output bits do not depend on the feature flag or the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..len).map(f)` collected in index order.
pub(crate) fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Fallible variant of [`map_indexed`]; returns the error of the smallest
/// failing index so error reporting is deterministic too.
pub(crate) fn try_map_indexed<T, E, F>(len: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    let results = map_indexed(len, f);
    let mut out = Vec::with_capacity(len);
    for item in results {
        out.push(item?);
    }
    Ok(out)
}
