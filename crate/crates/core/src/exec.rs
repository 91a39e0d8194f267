//! Data-parallel map over independent runs.
//!
//! A single simulation is sequential and deterministic; parallelism only
//! spreads independent runs (sweep entries, randomized suites) over threads.
//! Without the `parallel` feature every mode runs sequentially.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run things in parallel.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `items.iter().map(f).collect()`, possibly spread over the rayon pool.
/// Output order always matches input order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree_and_keep_order() {
        let items: Vec<u64> = (0..257).collect();
        let seq = map(Execution::Sequential, &items, |x| x * x + 1);
        let par = map(Execution::Parallel, &items, |x| x * x + 1);
        assert_eq!(seq, par);
        assert_eq!(seq[3], 10);
    }
}
