//! Execution policy shared by every data-parallel loop in the crate.
//!
//! With the `parallel` feature (default) the loops run on a rayon pool of the
//! requested size; without it every policy degrades to the sequential path.
//! Results are always collected in index order so the policy never changes
//! what a caller observes.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Parallelism {
    #[default]
    Sequential,
    /// A dedicated pool with this many workers; `0` picks rayon's default.
    Threads(usize),
}

impl Parallelism {
    pub fn from_threads(threads: usize) -> Self {
        if threads == 1 {
            Parallelism::Sequential
        } else {
            Parallelism::Threads(threads)
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && matches!(self, Parallelism::Threads(_))
    }
}

/// `(0..n).map(f)` under the given policy, results in index order.
pub fn map_indexed<T, F>(par: Parallelism, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    match par {
        Parallelism::Threads(threads) if cfg!(feature = "parallel") => par_map(threads, n, f),
        _ => (0..n).map(f).collect(),
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(threads: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build();
    match pool {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        // no pool available: run inline rather than fail
        Err(_) => (0..n).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(_threads: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = map_indexed(Parallelism::Sequential, 100, |i| Ok(i * i)).unwrap();
        let par = map_indexed(Parallelism::Threads(4), 100, |i| Ok(i * i)).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn errors_propagate() {
        let r = map_indexed(Parallelism::Threads(2), 10, |i| {
            if i == 7 {
                Err(crate::Error::input("boom"))
            } else {
                Ok(i)
            }
        });
        assert!(r.is_err());
    }
}
