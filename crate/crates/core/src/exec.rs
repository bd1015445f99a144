//! Execution strategy for the embarrassingly parallel parts of the crate:
//! oracle validation probes, model-error sampling, theory checks over traces,
//! and batch runs over independent (problem, seed) pairs.
//!
//! The solver loop itself is strictly sequential; only sample sweeps fan out.
//! Parallel mode maps each item independently and collects results in input
//! order, so outputs are bitwise identical to the sequential path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How to sweep an index range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for ExecMode {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        ExecMode::Parallel
    }

    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        ExecMode::Sequential
    }
}

/// Maps `f` over `0..n`, preserving index order in the output.
pub fn map_indexed<U, F>(mode: ExecMode, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<'a, T, U, F>(mode: ExecMode, items: &'a [T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&'a T) -> U + Sync + Send,
{
    match mode {
        ExecMode::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => items.par_iter().map(f).collect(),
    }
}
