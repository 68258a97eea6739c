//! Deterministic chunked map-reduce.
//!
//! Work is split into fixed-size index ranges; partial results are combined
//! by a pairwise tree in range order. The result is bit-identical for any
//! thread count.

use std::ops::Range;

use rayon::prelude::*;

/// Samples per work unit for dataset passes.
pub const CHUNK: usize = 2048;

pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<Range<usize>> {
    let chunk = chunk.max(1);
    (0..n).step_by(chunk).map(|s| s..(s + chunk).min(n)).collect()
}

/// Combines `items` pairwise: ((a+b)+(c+d))+... in index order.
pub fn tree_reduce<A, F>(mut items: Vec<A>, combine: F) -> Option<A>
where
    F: Fn(A, A) -> A,
{
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

pub fn map_reduce<A, M, F>(n: usize, chunk: usize, map: M, combine: F) -> Option<A>
where
    A: Send,
    M: Fn(Range<usize>) -> A + Sync + Send,
    F: Fn(A, A) -> A,
{
    let parts: Vec<A> = chunk_ranges(n, chunk).into_par_iter().map(map).collect();
    tree_reduce(parts, combine)
}
