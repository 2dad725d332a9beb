//! Data-parallel building blocks.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run the same closures sequentially. Every helper here is a map over
//! independent cells or lanes, so results never depend on how the work is
//! partitioned.

use ndarray::{ArrayView3, ArrayViewMut1, ArrayViewMut3, Axis, Zip};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f(k)` for `k in 0..len` and collects the results in order.
pub(crate) fn map_range<T, F>(len: usize, f: F) -> Vec<T>
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

/// Applies `f` to every 1-D lane of `a` running along `axis`.
pub(crate) fn for_each_lane<F>(mut a: ArrayViewMut3<'_, f64>, axis: usize, f: F)
where
    F: Fn(ArrayViewMut1<'_, f64>) + Sync + Send,
{
    let zip = Zip::from(a.lanes_mut(Axis(axis)));
    #[cfg(feature = "parallel")]
    zip.par_for_each(f);
    #[cfg(not(feature = "parallel"))]
    zip.for_each(f);
}

/// `out[k] = f(a[k], b[k])` elementwise.
pub(crate) fn zip2<F>(out: ArrayViewMut3<'_, f64>, a: ArrayView3<'_, f64>, b: ArrayView3<'_, f64>, f: F)
where
    F: Fn(f64, f64) -> f64 + Sync + Send,
{
    let zip = Zip::from(out).and(a).and(b);
    #[cfg(feature = "parallel")]
    zip.par_for_each(|o, &x, &y| *o = f(x, y));
    #[cfg(not(feature = "parallel"))]
    zip.for_each(|o, &x, &y| *o = f(x, y));
}

/// `out[k] = f(out[k], a[k])` elementwise.
pub(crate) fn update<F>(out: ArrayViewMut3<'_, f64>, a: ArrayView3<'_, f64>, f: F)
where
    F: Fn(f64, f64) -> f64 + Sync + Send,
{
    let zip = Zip::from(out).and(a);
    #[cfg(feature = "parallel")]
    zip.par_for_each(|o, &x| *o = f(*o, x));
    #[cfg(not(feature = "parallel"))]
    zip.for_each(|o, &x| *o = f(*o, x));
}
