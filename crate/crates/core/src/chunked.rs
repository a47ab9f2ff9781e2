//! Deterministic chunk-parallel reductions.
//!
//! Work over an index space is split into fixed-size chunks; each chunk is
//! accumulated independently (possibly on different threads) and the partial
//! results are merged left-to-right in chunk order. The result is therefore
//! byte-identical for any thread count, including a single thread.

use rayon::prelude::*;

/// Records per chunk. Fixed so that chunk boundaries never depend on the
/// thread pool; small enough that subsample-sized loops still spread across
/// the pool.
pub const CHUNK: usize = 1024;

/// Chunked fold over `0..bound`.
///
/// `fill(start, end, acc)` accumulates the half-open index range into a fresh
/// accumulator; partials are merged in ascending chunk order.
pub fn fold_indexed<T, E, Make, Fill, Merge>(
    bound: usize,
    make: Make,
    fill: Fill,
    mut merge: Merge,
) -> Result<T, E>
where
    T: Send,
    E: Send,
    Make: Fn() -> T + Sync,
    Fill: Fn(usize, usize, &mut T) -> Result<(), E> + Sync,
    Merge: FnMut(&mut T, T),
{
    let n_chunks = bound.div_ceil(CHUNK).max(1);
    let partials: Result<Vec<T>, E> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = ((c + 1) * CHUNK).min(bound);
            let mut acc = make();
            fill(start, end, &mut acc)?;
            Ok(acc)
        })
        .collect();
    let mut parts = partials?.into_iter();
    let mut total = parts.next().expect("at least one chunk");
    for p in parts {
        merge(&mut total, p);
    }
    Ok(total)
}
