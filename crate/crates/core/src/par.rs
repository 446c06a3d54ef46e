//! Replicate orchestration.
//!
//! Replicates are grouped into fixed-size chunks. Each chunk is folded
//! sequentially and chunk results are merged in index order, so the result
//! does not depend on the number of worker threads, or on whether the
//! `parallel` feature is enabled at all.

use crate::rng::{stream_rng, StreamRng};

const CHUNK: u64 = 256;

/// Run `reps` replicates and collect one value per replicate, in index order.
pub fn replicate<T, F>(seed: u64, reps: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut StreamRng) -> T + Sync + Send,
{
    replicate_range(seed, 0..reps, f)
}

/// As [`replicate`] for the replicate indices in `range`.
pub fn replicate_range<T, F>(seed: u64, range: std::ops::Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut StreamRng) -> T + Sync + Send,
{
    let run = |i: u64| {
        let mut rng = stream_rng(seed, i);
        f(i, &mut rng)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        range.into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        range.map(run).collect()
    }
}

/// Fold replicates into a mergeable accumulator.
///
/// `step` must only depend on its arguments; `merge` must be associative.
/// Chunk boundaries are fixed, so any associative `merge` gives bit-identical
/// results for every worker count.
pub fn replicate_fold<A, I, S, M>(seed: u64, reps: u64, init: I, step: S, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    S: Fn(&mut A, u64, &mut StreamRng) + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    let chunks = reps.div_ceil(CHUNK);
    let fold_chunk = |c: u64| {
        let mut acc = init();
        let end = ((c + 1) * CHUNK).min(reps);
        for i in c * CHUNK..end {
            let mut rng = stream_rng(seed, i);
            step(&mut acc, i, &mut rng);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<A> = {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(fold_chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<A> = (0..chunks).map(fold_chunk).collect();
    parts.into_iter().fold(init(), merge)
}

/// Run `f` on a pool of `workers` threads (0 = rayon default). Without the
/// `parallel` feature this just calls `f`.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}
