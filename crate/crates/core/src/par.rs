//! Data-parallel helpers. With the `parallel` feature these run on the rayon
//! pool; without it they are plain sequential iterators with the same output.
//!
//! Only order-preserving maps and order-independent reductions (min/max) are
//! exposed, so results are bit-identical between the two builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..len).map(f).collect()`
pub fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// `items.iter().map(f).collect()`
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Rows of a `rows x cols` matrix filled by `f(i, j)`, row-major.
pub fn fill_matrix<F>(rows: usize, cols: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let mut out = vec![0.0; rows * cols];
    if cols == 0 {
        return out;
    }
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(i, j);
            }
        });
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(cols).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(i, j);
            }
        });
    }
    out
}

/// Maximum of `f(i)` over `0..len`, `f64::NEG_INFINITY` when empty. NaNs are ignored.
pub fn max_range<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len)
            .into_par_iter()
            .map(f)
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Minimum of `f(i)` over `0..len`, `f64::INFINITY` when empty. NaNs are ignored.
pub fn min_range<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    -max_range(len, |i| -f(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helpers_match_sequential() {
        let v = map_range(10, |i| i * i);
        assert_eq!(v, (0..10).map(|i| i * i).collect::<Vec<_>>());
        let m = fill_matrix(3, 4, |i, j| (i * 4 + j) as f64);
        assert_eq!(m, (0..12).map(|k| k as f64).collect::<Vec<_>>());
        assert_eq!(max_range(5, |i| i as f64), 4.0);
        assert_eq!(min_range(5, |i| i as f64 + 1.0), 1.0);
        assert_eq!(max_range(0, |i| i as f64), f64::NEG_INFINITY);
    }
}
