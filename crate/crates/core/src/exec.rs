//! Parallel execution helpers with a bitwise-deterministic mode.
//!
//! Reductions are computed over fixed-size index chunks. In deterministic
//! mode (the default) the per-chunk partial sums are combined in chunk
//! order, so the result is bitwise identical for any worker count and
//! identical to the sequential build (`--no-default-features`). In fast
//! mode the partials are combined in whatever order the scheduler
//! produces; values may differ in the last ulp between runs.
//!
//! Elementwise map operations are deterministic in either mode because
//! each output element depends only on its own index.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used by all reductions. Fixed so that the grouping of
/// floating-point additions never depends on the worker count.
pub const CHUNK: usize = 4096;

static DETERMINISTIC: AtomicBool = AtomicBool::new(true);

/// Enable or disable deterministic reductions process-wide.
pub fn set_deterministic(on: bool) {
    DETERMINISTIC.store(on, Ordering::Relaxed);
}

/// Current deterministic-mode flag.
pub fn deterministic() -> bool {
    DETERMINISTIC.load(Ordering::Relaxed)
}

#[inline]
fn chunk_sum(n: usize, c: usize, f: &(impl Fn(usize) -> f64 + Sync)) -> f64 {
    let start = c * CHUNK;
    let end = (start + CHUNK).min(n);
    let mut acc = 0.0;
    for i in start..end {
        acc += f(i);
    }
    acc
}

/// Sum of `f(i)` for `i` in `0..n`, accumulated in f64.
pub fn sum_indexed(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    let chunks = n.div_ceil(CHUNK);
    #[cfg(feature = "parallel")]
    {
        if deterministic() {
            let partials: Vec<f64> = (0..chunks)
                .into_par_iter()
                .map(|c| chunk_sum(n, c, &f))
                .collect();
            partials.iter().sum()
        } else {
            (0..chunks).into_par_iter().map(|c| chunk_sum(n, c, &f)).sum()
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut total = 0.0;
        for c in 0..chunks {
            total += chunk_sum(n, c, &f);
        }
        total
    }
}

/// Two sums over the same index range in one pass.
pub fn sum2_indexed(n: usize, f: impl Fn(usize) -> (f64, f64) + Sync) -> (f64, f64) {
    let chunks = n.div_ceil(CHUNK);
    let chunk_sum2 = |c: usize| {
        let start = c * CHUNK;
        let end = (start + CHUNK).min(n);
        let (mut a, mut b) = (0.0, 0.0);
        for i in start..end {
            let (x, y) = f(i);
            a += x;
            b += y;
        }
        (a, b)
    };
    #[cfg(feature = "parallel")]
    {
        if deterministic() {
            let partials: Vec<(f64, f64)> =
                (0..chunks).into_par_iter().map(chunk_sum2).collect();
            partials.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y))
        } else {
            (0..chunks)
                .into_par_iter()
                .map(chunk_sum2)
                .reduce(|| (0.0, 0.0), |(a, b), (x, y)| (a + x, b + y))
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut total = (0.0, 0.0);
        for c in 0..chunks {
            let (x, y) = chunk_sum2(c);
            total.0 += x;
            total.1 += y;
        }
        total
    }
}

/// Fill `out[i] = f(i)` for every index. Deterministic in both modes.
pub fn map_indexed<T: Send + Sync>(out: &mut [T], f: impl Fn(usize) -> T + Sync) {
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (k, slot) in chunk.iter_mut().enumerate() {
                *slot = f(base + k);
            }
        });
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f(i);
        }
    }
}

/// Run `f` on every item of `items` in parallel when available.
pub fn for_each_item<T: Send, F: Fn(&mut T) + Sync>(items: &mut [T], f: F) {
    #[cfg(feature = "parallel")]
    {
        items.par_iter_mut().for_each(|it| f(it));
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter_mut().for_each(|it| f(it));
    }
}
