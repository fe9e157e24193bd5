//! Data-parallel helpers that fall back to plain iteration when the
//! `parallel` feature is off. Results are always returned in input order.

/// Maps `f` over `items`, in parallel when enabled.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Maps `f` over `0..n`, in parallel when enabled.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Caps the global worker pool. Returns false if the pool was already
/// initialized or the crate was built without `parallel`.
pub fn configure_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

/// Reads `DGM_DTE_THREADS` and applies it if set to a positive integer.
pub fn configure_from_env() -> Option<usize> {
    let n = std::env::var("DGM_DTE_THREADS").ok()?.trim().parse::<usize>().ok()?;
    if n == 0 {
        return None;
    }
    configure_threads(n);
    Some(n)
}

pub fn enabled() -> bool {
    cfg!(feature = "parallel")
}
