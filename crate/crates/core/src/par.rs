//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) `Exec::Parallel` runs on the
//! ambient rayon pool. Without it, or with `Exec::Sequential`, everything runs
//! on the calling thread. Results are always returned in input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution mode for the data-parallel loops of this crate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Exec {
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    /// True when work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, exec: Exec, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// `items.iter().map(f).collect()`, possibly in parallel.
pub fn map_slice<A, T, F>(items: &[A], exec: Exec, f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Fills `out[i] = f(i)`, possibly in parallel.
pub fn fill_indexed<T, F>(out: &mut [T], exec: Exec, f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        out.par_iter_mut().enumerate().for_each(|(i, x)| *x = f(i));
        return;
    }
    let _ = exec;
    for (i, x) in out.iter_mut().enumerate() {
        *x = f(i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let seq = map_range(1000, Exec::Sequential, |i| i * i);
        let par = map_range(1000, Exec::Parallel, |i| i * i);
        assert_eq!(seq, par);
        let items: Vec<u64> = (0..257).collect();
        assert_eq!(
            map_slice(&items, Exec::Parallel, |x| x + 1),
            map_slice(&items, Exec::Sequential, |x| x + 1)
        );
        let mut a = vec![0usize; 100];
        let mut b = vec![0usize; 100];
        fill_indexed(&mut a, Exec::Parallel, |i| 3 * i);
        fill_indexed(&mut b, Exec::Sequential, |i| 3 * i);
        assert_eq!(a, b);
    }
}
