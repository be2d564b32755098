//! Data-parallel helpers with deterministic reductions.
//!
//! All floating-point reductions accumulate in fixed-size chunks: partial
//! sums are formed per chunk and then combined in chunk order. The result is
//! bit-identical whether the chunks run on one thread or many, and identical
//! between the `parallel` feature and the sequential fallback.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static PARALLEL_ENABLED: AtomicBool = AtomicBool::new(true);

/// Runtime switch for the parallel code paths. Has no effect when the
/// `parallel` feature is compiled out.
pub fn set_parallel(enabled: bool) {
    PARALLEL_ENABLED.store(enabled, Ordering::Relaxed);
}

/// Whether parallel execution is active (feature compiled in and enabled).
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && PARALLEL_ENABLED.load(Ordering::Relaxed)
}

/// Chunk length for deterministic reductions.
const CHUNK: usize = 2048;

/// Element count below which the data-parallel paths dispatch sequentially;
/// the per-element kernels are memory-bound and fork-join overhead dominates
/// below this size (measured with the kernel benches).
#[cfg(feature = "parallel")]
const PAR_MIN: usize = 32_768;

fn chunk_sum<F>(lo: usize, hi: usize, f: &F) -> f64
where
    F: Fn(usize) -> f64,
{
    let mut acc = 0.0;
    for i in lo..hi {
        acc += f(i);
    }
    acc
}

/// Sum `f(i)` for `i in 0..n`, chunk-deterministically.
pub fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let n_chunks = n.div_ceil(CHUNK).max(1);
    let partial = |c: usize| chunk_sum(c * CHUNK, ((c + 1) * CHUNK).min(n), &f);
    #[cfg(feature = "parallel")]
    if parallel_enabled() && n > PAR_MIN {
        let partials: Vec<f64> = (0..n_chunks).into_par_iter().map(partial).collect();
        return partials.iter().sum();
    }
    (0..n_chunks).map(partial).sum()
}

/// Dot product of two slices, chunk-deterministically.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum_indexed(a.len(), |i| a[i] * b[i])
}

/// Build a `Vec<f64>` of length `n` from `f(i)`.
pub fn map_vec<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() && n > PAR_MIN {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Overwrite `out[i] = f(i)` for all `i`.
pub fn fill_with<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() && out.len() > PAR_MIN {
        out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
        return;
    }
    for (i, v) in out.iter_mut().enumerate() {
        *v = f(i);
    }
}

/// Map an arbitrary job over items, preserving order in the output.
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Maximum of `f(i)` over `0..n`, or `f64::NEG_INFINITY` for `n = 0`.
pub fn max_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() && n > PAR_MIN {
        return (0..n)
            .into_par_iter()
            .map(f)
            .reduce(|| f64::NEG_INFINITY, f64::max);
    }
    (0..n).map(f).fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_match_between_modes() {
        let n = 10_000;
        let f = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        let was = parallel_enabled();
        set_parallel(true);
        let a = sum_indexed(n, f);
        set_parallel(false);
        let b = sum_indexed(n, f);
        set_parallel(was);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn max_over_empty_is_neg_inf() {
        assert_eq!(max_indexed(0, |_| 1.0), f64::NEG_INFINITY);
    }
}
