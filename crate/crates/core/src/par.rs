//! Data-parallel helpers with a sequential fallback when the `parallel`
//! feature is disabled. Results always come back in input order.

pub use self::imp::{current_threads, map_collect};

#[cfg(feature = "parallel")]
mod imp {
    use rayon::prelude::*;

    pub fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        items.par_iter().map(f).collect()
    }

    pub fn current_threads() -> usize {
        rayon::current_num_threads()
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
    where
        F: Fn(&T) -> R,
    {
        items.iter().map(f).collect()
    }

    pub fn current_threads() -> usize {
        1
    }
}
