//! Data-parallel helpers. With the `parallel` feature these run on the rayon
//! pool; without it they fall back to plain iterators. Outputs are always
//! collected in input order, so results do not depend on the mode.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Name of the active execution mode, used to label benchmark groups.
pub const MODE: &str = if cfg!(feature = "parallel") {
    "rayon"
} else {
    "sequential"
};

/// Maps `f` over `items` and collects the results in order.
#[cfg(feature = "parallel")]
pub fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n` and collects the results in order.
#[cfg(feature = "parallel")]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Fills `out` in chunks of `chunk` elements; `f` receives the chunk's
/// starting offset.
#[cfg(feature = "parallel")]
pub fn fill_chunks<F>(out: &mut [f64], chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    out.par_chunks_mut(chunk.max(1))
        .enumerate()
        .for_each(|(i, c)| f(i * chunk.max(1), c));
}

#[cfg(not(feature = "parallel"))]
pub fn fill_chunks<F>(out: &mut [f64], chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    out.chunks_mut(chunk.max(1))
        .enumerate()
        .for_each(|(i, c)| f(i * chunk.max(1), c));
}
