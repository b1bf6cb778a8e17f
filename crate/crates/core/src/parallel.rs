//! Point-parallel maps with a sequential fallback.

/// How independent per-point work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    /// Rayon when the `parallel` feature is enabled, sequential otherwise.
    #[default]
    Auto,
    Sequential,
}

pub fn map<T, U, F>(exec: Exec, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match exec {
        Exec::Sequential => items.iter().map(f).collect(),
        Exec::Auto => auto_map(items, f),
    }
}

#[cfg(feature = "parallel")]
fn auto_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn auto_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Configures the global thread pool; a no-op without the `parallel` feature.
pub fn set_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let a = map(Exec::Auto, &xs, |x| x.sqrt());
        let b = map(Exec::Sequential, &xs, |x| x.sqrt());
        assert_eq!(a, b);
    }
}
