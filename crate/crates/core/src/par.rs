//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the helpers dispatch to rayon. Both
//! paths evaluate every item independently and combine partial results in a
//! fixed order, so results are bit-identical whichever path runs.
//! [`with_sequential`] forces the fallback on the calling thread, which is
//! how the benchmarks compare the two paths inside one binary.

use std::cell::Cell;
use std::ops::Range;

/// Points per partial sum in [`chunked_sum`].
pub const SUM_CHUNK: usize = 4096;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with parallel dispatch disabled on this thread.
pub fn with_sequential<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

/// Whether the helpers below will use rayon on this thread.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// Evaluates `f(i)` for `i in 0..n`, preserving order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() && n > 1 {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Like [`map_range`] for fallible items; the first error in index order wins.
pub fn try_map_range<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_range(n, f).into_iter().collect()
}

/// Deterministic sum over `0..n`: partial sums over fixed chunks of
/// [`SUM_CHUNK`] indices, added left to right.
pub fn chunked_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(Range<usize>) -> f64 + Sync + Send,
{
    let n_chunks = n.div_ceil(SUM_CHUNK);
    let partials = map_range(n_chunks, |c| {
        let lo = c * SUM_CHUNK;
        f(lo..(lo + SUM_CHUNK).min(n))
    });
    partials.into_iter().sum()
}
