//! Data-parallel helpers with a sequential fallback (`--no-default-features`).
//!
//! Every helper here is deterministic: outputs are written by index and
//! floating-point reductions use a fixed chunking, so results are bitwise
//! identical for any thread count, including the sequential build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk size for deterministic reductions. Fixed (not derived from the
/// thread count) so partial sums are always grouped the same way.
pub const REDUCE_CHUNK: usize = 1024;

/// `(0..n).map(f)` collected in index order.
pub fn map_range<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// `items.iter().enumerate().map(f)` collected in index order.
pub fn map_indexed<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(usize, &T) -> R + Sync + Send,
) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

/// Sum of `f(i)` for `i in 0..n`, reduced over fixed-size chunks. The chunk
/// partials are folded sequentially in chunk order, so the result does not
/// depend on how work was scheduled.
pub fn sum_range(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let partial = |c: usize| -> f64 {
        let start = c * REDUCE_CHUNK;
        let end = (start + REDUCE_CHUNK).min(n);
        let mut acc = 0.0;
        for i in start..end {
            acc += f(i);
        }
        acc
    };
    let partials: Vec<f64> = map_range(chunks, partial);
    partials.into_iter().sum()
}

/// Number of worker threads the parallel build will use; 1 in the
/// sequential build.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Cap the global worker count. A no-op in the sequential build; calling it
/// twice keeps the first configuration.
pub fn configure_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
    }
}

/// Run `f` inside a dedicated pool of `n` threads (sequentially when the
/// `parallel` feature is off). Used by benches and determinism tests.
pub fn with_thread_pool<R: Send>(n: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        f()
    }
}
