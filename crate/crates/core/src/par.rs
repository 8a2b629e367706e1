//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper produces bit-identical results in both modes: work is split
//! into fixed index ranges and partial results are combined in index order.
//! Without the `parallel` feature everything runs sequentially.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

static EXEC: AtomicU8 = AtomicU8::new(1);

/// Select the execution mode process-wide. Results never depend on it.
pub fn set_exec(e: Exec) {
    EXEC.store(matches!(e, Exec::Parallel) as u8, Ordering::Relaxed);
}

pub fn exec() -> Exec {
    if cfg!(feature = "parallel") && EXEC.load(Ordering::Relaxed) == 1 {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

/// Sizes the global worker pool. Only the first call has an effect; speed
/// changes, results do not.
pub fn init_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if n == 1 {
        set_exec(Exec::Sequential);
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    if exec() == Exec::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Applies `f(i, &mut xs[i])` to every element.
pub fn for_each_mut<T: Send>(xs: &mut [T], f: impl Fn(usize, &mut T) + Sync + Send) {
    #[cfg(feature = "parallel")]
    if exec() == Exec::Parallel {
        use rayon::prelude::*;
        xs.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
        return;
    }
    xs.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

/// Chunk length used by reductions. Fixed, so sums do not depend on threads.
pub const CHUNK: usize = 4096;

/// Sum of `f(i)` over `0..n`, accumulated per fixed chunk and then in order.
pub fn chunked_sum(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    let chunks = n.div_ceil(CHUNK);
    let partial = map_range(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        (lo..hi).map(&f).sum::<f64>()
    });
    partial.into_iter().sum()
}

/// Dot product with a fixed summation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    chunked_sum(a.len(), |i| a[i] * b[i])
}

/// Maximum of `f(i)` over `0..n` (0 for an empty range).
pub fn chunked_max(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    let chunks = n.div_ceil(CHUNK);
    map_range(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        (lo..hi).map(&f).fold(0.0, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max)
}
