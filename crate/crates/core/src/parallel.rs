//! Data-parallel helpers with deterministic sequential twins.
//!
//! With the `parallel` feature enabled (the default) the indexed maps fan out
//! over rayon; without it they run sequentially. Results are collected in
//! index order either way, and callers reduce collected values in that order,
//! so outputs are bit-identical across both builds. The `_seq` twins are
//! always compiled and public so benchmarks can compare the two paths in one
//! binary.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Result;

/// Applies `f` to every index in `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential twin of [`map_indexed`].
pub fn map_indexed_seq<T, F>(n: usize, mut f: F) -> Vec<T>
where
    F: FnMut(usize) -> T,
{
    (0..n).map(&mut f).collect()
}

/// Fallible [`map_indexed`]; on failure the error with the lowest index wins,
/// so the reported error does not depend on the schedule.
pub fn try_map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        let collected: Vec<Result<T>> = (0..n).into_par_iter().map(f).collect();
        collected.into_iter().collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        try_map_indexed_seq(n, f)
    }
}

/// Sequential twin of [`try_map_indexed`].
pub fn try_map_indexed_seq<T, F>(n: usize, mut f: F) -> Result<Vec<T>>
where
    F: FnMut(usize) -> Result<T>,
{
    (0..n).map(&mut f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn map_indexed_preserves_index_order() {
        let squares = map_indexed(100, |i| i * i);
        let expected = map_indexed_seq(100, |i| i * i);
        assert_eq!(squares, expected);
    }

    #[test]
    fn try_map_reports_lowest_index_error() {
        let result = try_map_indexed(64, |i| {
            if i % 10 == 3 {
                Err(Error::EmptyInput { what: "probe" }.at_row(i))
            } else {
                Ok(i)
            }
        });
        match result {
            Err(Error::AtRow { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected row error, got {other:?}"),
        }
    }
}
