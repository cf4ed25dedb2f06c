//! Node-parallel sweeps.
//!
//! Every sweep writes each node exactly once from read-only inputs, so the
//! serial and parallel paths produce bit-identical results.

use rayon::prelude::*;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Serial,
    Parallel,
}

pub fn for_each_mut<T, F>(exec: Execution, data: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    match exec {
        Execution::Serial => data.iter_mut().enumerate().for_each(|(k, x)| f(k, x)),
        Execution::Parallel => data.par_iter_mut().enumerate().for_each(|(k, x)| f(k, x)),
    }
}
