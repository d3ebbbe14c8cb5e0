//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper here produces bit-identical results regardless of the
//! execution mode or the number of worker threads: reductions are done
//! over fixed-size chunks whose partial sums are combined in chunk order.

use serde::{Deserialize, Serialize};

/// Chunk length used by the deterministic reductions.
pub const REDUCE_CHUNK: usize = 256;

/// How inner loops (force assembly, sparse products, sweeps) are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise
    /// identical to `Sequential`.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// `out[i] = f(i)` for every index.
pub fn fill<T, F>(exec: Exec, out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
        return;
    }
    let _ = exec;
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Collects `f(i)` for `i in 0..n`, preserving index order.
pub fn map<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Sum of `f(i)` for `i in 0..n` with a thread-count independent order.
pub fn sum<F>(exec: Exec, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let chunk = |c: usize| {
        let lo = c * REDUCE_CHUNK;
        let hi = (lo + REDUCE_CHUNK).min(n);
        (lo..hi).fold(0.0, |acc, i| acc + f(i))
    };
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return map(exec, chunks, chunk).iter().fold(0.0, |a, b| a + b);
    }
    let _ = exec;
    (0..chunks).map(chunk).fold(0.0, |a, b| a + b)
}

/// Deterministic dot product.
pub fn dot(exec: Exec, a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum(exec, a.len(), |i| a[i] * b[i])
}
