//! Order-preserving map that fans out over rayon when the `parallel` feature
//! is on.

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Caps the worker pool used for channel-parallel work; `0` picks the core
/// count. Only the first call takes effect.
#[cfg(feature = "parallel")]
pub fn configure_threads(threads: usize) -> crate::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| crate::Error::Param(format!("cannot configure worker threads: {e}")))
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_threads: usize) -> crate::Result<()> {
    Ok(())
}
