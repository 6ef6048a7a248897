//! Data-parallel map used by every embarrassingly parallel loop in the
//! crate (time-1 matrix columns, hull samples, random trials).
//!
//! With the `parallel` feature the work runs on the rayon pool; without it,
//! or with [`Execution::Sequential`], it runs in order on the calling thread.
//! Results are always returned in index order, so reductions over them are
//! deterministic regardless of the execution mode.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// `(0..n).map(f).collect()`, possibly in parallel.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Like [`Execution::map`] for fallible work; the first error in index
    /// order is returned.
    pub fn try_map<T, E, F>(self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }

    /// Number of chunks worth splitting `n` items into.
    pub fn chunks(self, n: usize) -> usize {
        let threads = match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => rayon::current_num_threads(),
            _ => 1,
        };
        threads.clamp(1, n.max(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let f = |i: usize| (i * i) as f64 / 3.0;
        let seq = Execution::Sequential.map(257, f);
        let par = Execution::Parallel.map(257, f);
        assert_eq!(seq, par);
        assert_eq!(seq[16], 256.0 / 3.0);
    }

    #[test]
    fn try_map_reports_first_error() {
        let r: Result<Vec<usize>, usize> =
            Execution::Parallel.try_map(100, |i| if i % 30 == 29 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(29));
    }
}
