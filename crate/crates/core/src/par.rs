//! Conditional data parallelism.
//!
//! With the default `parallel` feature the heavy loops (convolutions, batch
//! maps, large elementwise ops) run on rayon; without it everything is
//! sequential with identical results. Parallel execution only kicks in above
//! a size threshold so small tensors skip scheduling overhead.
//!
//! Determinism note: work is only ever split over *independent* output
//! regions (output channels, batch items, disjoint slices), and results are
//! written into pre-allocated buffers at fixed positions — never reduced in
//! arrival order — so thread count cannot change a single bit of output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum element count before an elementwise loop is worth parallelising.
pub(crate) const PAR_THRESHOLD: usize = 1 << 14;

/// Explicit execution mode for the low-level kernels that want to expose the
/// choice (used by the benchmark suite to compare both paths in one build).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl ExecMode {
    /// Default mode for a workload of `n` independent units.
    pub fn auto(n: usize) -> ExecMode {
        if cfg!(feature = "parallel") && n >= PAR_THRESHOLD {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

pub(crate) fn map_slice(a: &[f64], f: impl Fn(f64) -> f64 + Sync + Send) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    if a.len() >= PAR_THRESHOLD {
        return a.par_iter().map(|&x| f(x)).collect();
    }
    a.iter().map(|&x| f(x)).collect()
}

pub(crate) fn zip_slices(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    if a.len() >= PAR_THRESHOLD {
        return a
            .par_iter()
            .zip(b.par_iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
    }
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Run `f(i)` for `i in 0..n`, collecting results in index order.
/// `mode` selects the execution path; `Parallel` silently degrades to
/// sequential when the crate is built without the `parallel` feature.
pub fn map_indexed<T: Send>(n: usize, mode: ExecMode, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Fill disjoint same-length chunks of `out` from `f(chunk_index, chunk)`.
/// Chunk `i` always covers `out[i*chunk_len .. (i+1)*chunk_len]`.
pub fn fill_chunks(
    out: &mut [f64],
    chunk_len: usize,
    mode: ExecMode,
    f: impl Fn(usize, &mut [f64]) + Sync + Send,
) {
    debug_assert!(chunk_len > 0 && out.len() % chunk_len == 0);
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        out.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, chunk)| f(i, chunk));
        return;
    }
    let _ = mode;
    for (i, chunk) in out.chunks_mut(chunk_len).enumerate() {
        f(i, chunk);
    }
}
