//! Brute-force distance to the obstacle boundary.

use ndarray::{Array2, ArrayView2};

/// For each cell, the smallest Euclidean distance in unit coordinates
/// `(i / nx_scale, j / ny_scale)` to an obstacle cell that touches a free
/// cell through one of its four edges. `None` where no such cell exists.
pub fn oracle_boundary_distance(mask: ArrayView2<'_, bool>, nx_scale: f64, ny_scale: f64) -> Array2<Option<f64>> {
    let (nx, ny) = mask.dim();
    let free = |i: isize, j: isize| {
        i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny && !mask[(i as usize, j as usize)]
    };
    let mut sites = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let (a, b) = (i as isize, j as isize);
            if mask[(i, j)] && (free(a - 1, b) || free(a + 1, b) || free(a, b - 1) || free(a, b + 1)) {
                sites.push((i as f64, j as f64));
            }
        }
    }
    Array2::from_shape_fn((nx, ny), |(i, j)| {
        sites
            .iter()
            .map(|(si, sj)| {
                let dx = (i as f64 - si) / nx_scale;
                let dy = (j as f64 - sj) / ny_scale;
                (dx * dx + dy * dy).sqrt()
            })
            .reduce(f64::min)
    })
}
