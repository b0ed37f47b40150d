//! Data-parallel execution helpers with schedule-independent results.
//!
//! Everything here produces bitwise-identical output whether the `parallel`
//! feature is enabled or not, and regardless of how many threads rayon uses.
//! The rule that makes this work: reductions are chunked at fixed boundaries
//! ([`CHUNK`] items, index order) with Neumaier-compensated summation inside
//! each chunk, and chunk totals are combined sequentially in index order.
//! Per-element maps preserve index order by construction.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed chunk size for all chunked maps and reductions.
pub const CHUNK: usize = 4096;

/// Map `f` over `items`, preserving order.
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Map `f` over indices `0..len`, preserving order.
pub fn map_indices<U, F>(len: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Apply `f` to every element in place. Elements are independent; `f` must
/// not communicate across them.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(&mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter_mut().for_each(f);
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter_mut().for_each(f);
    }
}

/// Apply `f` to `chunk_len`-sized chunks of `items`, passing the chunk
/// index. The chunk boundaries are the same in sequential and parallel
/// builds, so per-chunk state (RNG streams, partial sums) is schedule
/// independent.
pub fn for_each_chunk_mut<T, F>(items: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk_len > 0, "chunk length must be positive");
    #[cfg(feature = "parallel")]
    {
        items
            .par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        items
            .chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
}

/// Neumaier-compensated sum of a slice, sequential.
pub fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Chunked compensated sum: Neumaier inside fixed chunks (parallel when
/// enabled), chunk totals combined sequentially in index order.
pub fn sum(values: &[f64]) -> f64 {
    let partials: Vec<f64> = {
        #[cfg(feature = "parallel")]
        {
            values.par_chunks(CHUNK).map(neumaier_sum).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            values.chunks(CHUNK).map(neumaier_sum).collect()
        }
    };
    neumaier_sum(&partials)
}

/// Chunked compensated sum of `f(item)` over a slice.
pub fn sum_by<T, F>(items: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync + Send,
{
    let partials: Vec<f64> = {
        #[cfg(feature = "parallel")]
        {
            items
                .par_chunks(CHUNK)
                .map(|c| {
                    let vals: Vec<f64> = c.iter().map(&f).collect();
                    neumaier_sum(&vals)
                })
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            items
                .chunks(CHUNK)
                .map(|c| {
                    let vals: Vec<f64> = c.iter().map(&f).collect();
                    neumaier_sum(&vals)
                })
                .collect()
        }
    };
    neumaier_sum(&partials)
}
