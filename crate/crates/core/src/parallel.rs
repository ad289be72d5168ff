//! Order-preserving parallel map with an explicit worker bound.

/// Maps `f` over `items` with at most `workers` threads; output order always
/// matches input order, so results never depend on scheduling.
#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("could not start {workers} workers ({e}); running serially");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: &[T], _workers: usize, f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Worker count from `CRIQA_WORKERS`, defaulting to 1.
pub fn default_workers() -> usize {
    std::env::var("CRIQA_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|n: &usize| *n > 0)
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order_for_any_worker_count() {
        let items: Vec<u64> = (0..50).collect();
        let serial = par_map(&items, 1, |v| v * v);
        assert_eq!(par_map(&items, 4, |v| v * v), serial);
    }
}
