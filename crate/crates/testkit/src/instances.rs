//! Test densities.

use dynot_core::grid::{validate_and_normalize, GridDims, SpatialGrid};
use ndarray::Array2;

/// Unnormalized isotropic Gaussian sampled at `(i / N, j / M)`.
pub fn gaussian(dims: GridDims, center: [f64; 2], sigma: f64) -> SpatialGrid {
    let (nx, ny) = dims.spatial_shape();
    let sx = dims.n(0) as f64;
    let sy = if dims.dim() == 2 { dims.n(1) as f64 } else { 1.0 };
    Array2::from_shape_fn((nx, ny), |(i, j)| {
        let dx = i as f64 / sx - center[0];
        let dy = if dims.dim() == 2 { j as f64 / sy - center[1] } else { 0.0 };
        (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
    })
}

/// Two unit-mass Gaussians with the same width at `c0` and `c1`.
pub fn gaussian_pair(dims: GridDims, c0: [f64; 2], c1: [f64; 2], sigma: f64, floor: f64) -> (SpatialGrid, SpatialGrid) {
    let pair = validate_and_normalize(&gaussian(dims, c0, sigma), &gaussian(dims, c1, sigma), floor, true)
        .expect("gaussians are valid densities");
    (pair.f0, pair.f1)
}

/// Density-weighted mean position of a spatial slab in unit coordinates.
pub fn barycenter(g: ndarray::ArrayView2<'_, f64>, dims: GridDims) -> [f64; 2] {
    let sx = dims.n(0) as f64;
    let sy = if dims.dim() == 2 { dims.n(1) as f64 } else { 1.0 };
    let (mut bx, mut by, mut mass) = (0.0, 0.0, 0.0);
    for ((i, j), &v) in g.indexed_iter() {
        bx += v * i as f64 / sx;
        by += v * j as f64 / sy;
        mass += v;
    }
    [bx / mass, by / mass]
}
