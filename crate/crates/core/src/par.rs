//! Data-parallel map with results in index order. Uses a rayon pool when the
//! `parallel` feature is on and more than one thread is requested; otherwise
//! runs sequentially. Output never depends on the thread count.

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "LANECRAFT_THREADS";

/// Thread cap from `LANECRAFT_THREADS`, if set to a positive integer.
pub fn env_thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// `requested` limited by the environment cap and the machine, at least 1.
pub fn effective_threads(requested: usize) -> usize {
    let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut n = requested.max(1).min(hw);
    if let Some(cap) = env_thread_cap() {
        n = n.min(cap);
    }
    n
}

pub struct Workers {
    threads: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Workers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workers").field("threads", &self.threads).finish()
    }
}

impl Workers {
    /// A pool of exactly `threads` threads (1 means sequential).
    pub fn new(threads: usize) -> Self {
        let threads = threads.max(1);
        #[cfg(feature = "parallel")]
        {
            let pool = (threads > 1).then(|| rayon::ThreadPoolBuilder::new().num_threads(threads).build().ok()).flatten();
            let threads = if pool.is_some() { threads } else { 1 };
            Workers { threads, pool }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Workers { threads: 1 }
        }
    }

    pub fn sequential() -> Self {
        Workers::new(1)
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// `(0..n).map(f)` with results in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }

    /// Applies `f` to each item with its index; results in index order.
    pub fn map_mut<S, T, F>(&self, items: &mut [S], f: F) -> Vec<T>
    where
        S: Send,
        T: Send,
        F: Fn(usize, &mut S) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter_mut().enumerate().map(|(i, s)| f(i, s)).collect());
        }
        items.iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
    }
}
