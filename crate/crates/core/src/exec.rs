//! Deterministic work splitting.
//!
//! Floating-point reductions are grouped into fixed-size chunks whose
//! boundaries depend only on the problem size, never on the thread count.
//! Each chunk is reduced sequentially in index order and chunk partials are
//! merged in chunk order, so the computed bits are identical whether the
//! chunks run on one thread or many.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Accumulation chunk for reductions over data points. Instances with
/// n <= CHUNK reduce in a single chunk, i.e. plain left-to-right summation.
pub const CHUNK: usize = 512;

pub fn chunk_ranges(len: usize, chunk: usize) -> Vec<Range<usize>> {
    assert!(chunk > 0);
    (0..len)
        .step_by(chunk)
        .map(|start| start..(start + chunk).min(len))
        .collect()
}

/// Map a function over fixed chunk ranges, returning partials in chunk order.
pub(crate) fn map_chunks<T, F>(len: usize, chunk: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let ranges = chunk_ranges(len, chunk);
    #[cfg(feature = "parallel")]
    if parallel {
        return ranges.into_par_iter().map(f).collect();
    }
    let _ = parallel;
    ranges.into_iter().map(f).collect()
}

/// Map a function over indices, returning outputs in index order. Used where
/// each index produces an independent value (neighbor rows, replicates),
/// so ordering alone guarantees determinism.
pub(crate) fn map_indices<T, F>(len: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..len).map(f).collect()
}

/// Sum chunk partial vectors element-wise, in chunk order.
pub(crate) fn merge_partials(mut partials: Vec<Vec<f64>>) -> Vec<f64> {
    let mut it = partials.drain(..);
    let mut acc = it.next().unwrap_or_default();
    for part in it {
        debug_assert_eq!(acc.len(), part.len());
        for (a, p) in acc.iter_mut().zip(&part) {
            *a += p;
        }
    }
    acc
}
