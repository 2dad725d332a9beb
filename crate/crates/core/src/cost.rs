//! Kinetic energy evaluation, weight maps and velocity extraction.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};

use crate::error::{Error, Result};
use crate::grid::{compensated_sum, CenteredField, GridDims};
use crate::prox::CostModel;

/// Cells with `f <= 0` and momentum above this count as carrying momentum.
pub const MOMENTUM_EPS: f64 = 1e-12;
/// Stand-in for `+inf` in telemetry energies.
pub const INFEASIBLE_PENALTY: f64 = 1e15;
/// Below this density the velocity is reported as zero.
pub const DEFAULT_VELOCITY_EPS: f64 = 1e-12;

/// Per-cell energy `w j_beta(m, f)`, or `None` where it is infinite.
fn cell_energy(s: f64, f: f64, beta: f64, w: f64) -> Option<f64> {
    if w.is_infinite() {
        return (s == 0.0 && f == 0.0).then_some(0.0);
    }
    if beta == 0.0 {
        // closure of |m|^2 / 2 on f >= 0
        return (f >= 0.0).then_some(0.5 * w * s);
    }
    if f > 0.0 {
        let fb = if beta == 1.0 { f } else { f.powf(beta) };
        Some(w * s / (2.0 * fb))
    } else if f == 0.0 && s == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// `(index, |m|^2, f)` for every cell in storage order.
fn cells(v: &CenteredField) -> Vec<((usize, usize, usize), f64, f64)> {
    let d = v.dims().dim();
    v.f()
        .indexed_iter()
        .map(|(idx, &f)| {
            let s = (0..d).map(|a| v.m(a)[idx] * v.m(a)[idx]).sum();
            (idx, s, f)
        })
        .collect()
}

/// `sum_k w_k j_beta(m_k, f_k)` in storage order with compensated summation;
/// `+inf` when any cell is outside the domain of `j_beta`.
pub fn energy(v: &CenteredField, cost: &CostModel) -> Result<f64> {
    cost.check_dims(v.dims())?;
    let mut terms = Vec::with_capacity(v.dims().centered_len());
    for (idx, s, f) in cells(v) {
        match cell_energy(s, f, cost.beta(), cost.weight(idx)) {
            Some(e) => terms.push(e),
            None => return Ok(f64::INFINITY),
        }
    }
    Ok(compensated_sum(terms))
}

/// Energy with finite stand-ins for infeasible cells, for logging.
///
/// Cells with `f <= 0` and `|m| <= 1e-12` contribute 0, other cells outside
/// the domain contribute [`INFEASIBLE_PENALTY`]. Returns the value and the
/// number of penalized cells.
pub fn telemetry_energy(v: &CenteredField, cost: &CostModel) -> Result<(f64, usize)> {
    cost.check_dims(v.dims())?;
    let mut infeasible = 0;
    let terms: Vec<f64> = cells(v)
        .into_iter()
        .map(|(idx, s, f)| {
            if f <= 0.0 && s.sqrt() <= MOMENTUM_EPS {
                return 0.0;
            }
            cell_energy(s, f, cost.beta(), cost.weight(idx)).unwrap_or_else(|| {
                infeasible += 1;
                INFEASIBLE_PENALTY
            })
        })
        .collect();
    Ok((compensated_sum(terms), infeasible))
}

/// How a mask becomes a weight grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Uniform,
    Obstacle,
    Distance,
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(WeightMode::Uniform),
            "obstacle" => Ok(WeightMode::Obstacle),
            "distance" => Ok(WeightMode::Distance),
            other => Err(Error::Configuration(format!("unknown weight mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for WeightMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightMode::Uniform => "uniform",
            WeightMode::Obstacle => "obstacle",
            WeightMode::Distance => "distance",
        })
    }
}

/// Largest slice (in cells) handled by the exact distance computation.
pub const EXACT_DISTANCE_MAX_CELLS: usize = 128 * 128;

/// Weight grid over the centered nodes from an obstacle mask of the same
/// shape (`true` = obstacle).
///
/// `Distance` uses `1 + d(x, boundary)` with `x` in unit coordinates `i / N`
/// and the boundary taken as the obstacle cells that have a spatial
/// 4-neighbour outside the obstacle. Without any obstacle every mode gives 1.
pub fn build_weights(mask: ArrayView3<'_, bool>, dims: GridDims, mode: WeightMode) -> Result<Array3<f64>> {
    if mask.dim() != dims.centered_shape() {
        return Err(Error::Dimension(format!(
            "mask has shape {:?}, expected {:?}",
            mask.shape(),
            dims.centered_shape()
        )));
    }
    if mode == WeightMode::Uniform {
        return Ok(Array3::ones(mask.raw_dim()));
    }
    for (t, slab) in mask.axis_iter(Axis(2)).enumerate() {
        if slab.iter().all(|&b| b) {
            return Err(Error::Degenerate(format!("obstacle mask covers the whole domain at time index {t}")));
        }
    }
    let mut out = Array3::ones(mask.raw_dim());
    let mut previous: Option<(ArrayView2<'_, bool>, Array2<f64>)> = None;
    for (t, slab) in mask.axis_iter(Axis(2)).enumerate() {
        let w = match (&previous, mode) {
            (Some((prev, w)), _) if *prev == slab => w.clone(),
            (_, WeightMode::Obstacle) => slab.mapv(|b| if b { f64::INFINITY } else { 1.0 }),
            _ => {
                let dist = if slab.len() <= EXACT_DISTANCE_MAX_CELLS {
                    boundary_distance_exact(slab, dims)
                } else {
                    boundary_distance_sweep(slab, dims)
                };
                let mut w = dist.mapv(|d| 1.0 + d);
                w.zip_mut_with(&slab, |w, &b| {
                    if b {
                        *w = f64::INFINITY
                    }
                });
                w
            }
        };
        out.index_axis_mut(Axis(2), t).assign(&w);
        previous = Some((slab, w));
    }
    Ok(out)
}

fn boundary_cells(mask: ArrayView2<'_, bool>) -> Vec<(usize, usize)> {
    let (nx, ny) = mask.dim();
    let mut out = Vec::new();
    for ((i, j), &b) in mask.indexed_iter() {
        if !b {
            continue;
        }
        let outside = (i > 0 && !mask[(i - 1, j)])
            || (i + 1 < nx && !mask[(i + 1, j)])
            || (j > 0 && !mask[(i, j - 1)])
            || (j + 1 < ny && !mask[(i, j + 1)]);
        if outside {
            out.push((i, j));
        }
    }
    out
}

fn unit_distance(dims: GridDims, a: (usize, usize), b: (usize, usize)) -> f64 {
    let dx = (a.0 as f64 - b.0 as f64) / dims.n(0) as f64;
    let dy = if dims.dim() == 2 {
        (a.1 as f64 - b.1 as f64) / dims.n(1) as f64
    } else {
        0.0
    };
    (dx * dx + dy * dy).sqrt()
}

/// Exact distance from every cell to the nearest boundary cell (0 without one).
pub fn boundary_distance_exact(mask: ArrayView2<'_, bool>, dims: GridDims) -> Array2<f64> {
    let sites = boundary_cells(mask);
    Array2::from_shape_fn(mask.raw_dim(), |p| {
        sites
            .iter()
            .map(|&q| unit_distance(dims, p, q))
            .fold(f64::INFINITY, f64::min)
    })
    .mapv(|d| if d.is_finite() { d } else { 0.0 })
}

/// Nearest-site propagation in a forward and a backward raster sweep over
/// the 8-neighbourhood. Each cell keeps the closest site offered by an
/// already visited neighbour, so the result is exact except where the nearest
/// site is reachable only through cells that prefer a different site; the
/// error there is a small fraction of a cell.
pub fn boundary_distance_sweep(mask: ArrayView2<'_, bool>, dims: GridDims) -> Array2<f64> {
    let (nx, ny) = mask.dim();
    let mut nearest: Array2<Option<(usize, usize)>> = Array2::from_elem((nx, ny), None);
    for q in boundary_cells(mask) {
        nearest[q] = Some(q);
    }
    let offer = |nearest: &mut Array2<Option<(usize, usize)>>, p: (usize, usize), from: (isize, isize)| {
        let (i, j) = (p.0 as isize + from.0, p.1 as isize + from.1);
        if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
            return;
        }
        if let Some(site) = nearest[(i as usize, j as usize)] {
            let better = nearest[p].is_none_or(|cur| unit_distance(dims, p, site) < unit_distance(dims, p, cur));
            if better {
                nearest[p] = Some(site);
            }
        }
    };
    for i in 0..nx {
        for j in 0..ny {
            for d in [(-1, -1), (-1, 0), (-1, 1), (0, -1)] {
                offer(&mut nearest, (i, j), d);
            }
        }
        for j in (0..ny).rev() {
            offer(&mut nearest, (i, j), (0, 1));
        }
    }
    for i in (0..nx).rev() {
        for j in (0..ny).rev() {
            for d in [(1, 1), (1, 0), (1, -1), (0, 1)] {
                offer(&mut nearest, (i, j), d);
            }
        }
        for j in 0..ny {
            offer(&mut nearest, (i, j), (0, -1));
        }
    }
    Array2::from_shape_fn((nx, ny), |p| nearest[p].map_or(0.0, |q| unit_distance(dims, p, q)))
}

/// `v = m / f` where `f > eps`, zero elsewhere; one array per component.
pub fn velocity_field(v: &CenteredField, eps: f64) -> Vec<Array3<f64>> {
    let f = v.f();
    (0..v.dims().dim())
        .map(|a| {
            let mut out = v.m(a).to_owned();
            out.zip_mut_with(&f, |m, &f| *m = if f > eps { *m / f } else { 0.0 });
            out
        })
        .collect()
}
