//! Proximal maps and projections used by the splitting schemes.

mod constraints;
mod coupling;
mod pointwise;
mod poisson;

use ndarray::{Array3, ArrayView3};

use crate::error::{Error, Result};
use crate::grid::{CenteredField, GridDims};
use crate::par;

pub use constraints::{centered_divergence, project_centered_constraints, project_constraints};
pub use coupling::project_coupling;
pub use pointwise::{project_paraboloid, prox_j, prox_j_beta, prox_root_residual};
pub use poisson::PoissonBackend;

pub(crate) use pointwise::{paraboloid_scalar, prox_scalar};

/// Default lower bound `c` on finite weights.
pub const DEFAULT_WEIGHT_LOWER_BOUND: f64 = 1e-6;

/// Cost exponent and per-cell weights of the generalized kinetic energy
/// `w |m|^2 / (2 f^beta)`.
///
/// Infinite weights are kept as a separate obstacle mask; the weight array
/// then holds 1 on those cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    beta: f64,
    weights: Option<Array3<f64>>,
    obstacle: Option<Array3<bool>>,
    lower_bound: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::quadratic()
    }
}

impl CostModel {
    /// `beta = 1`, unit weights: the plain Benamou–Brenier energy.
    pub fn quadratic() -> Self {
        CostModel {
            beta: 1.0,
            weights: None,
            obstacle: None,
            lower_bound: DEFAULT_WEIGHT_LOWER_BOUND,
        }
    }

    pub fn with_beta(beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Domain(format!("beta must lie in [0, 1], got {beta}")));
        }
        Ok(CostModel {
            beta,
            ..CostModel::quadratic()
        })
    }

    /// Attaches a weight grid over the centered nodes. Entries must be `+inf`
    /// or finite and above `lower_bound`.
    pub fn with_weights(mut self, weights: Array3<f64>, lower_bound: f64) -> Result<Self> {
        if !(lower_bound > 0.0) {
            return Err(Error::Validation(format!("weight lower bound must be positive, got {lower_bound}")));
        }
        if let Some((idx, w)) = weights
            .indexed_iter()
            .find(|(_, w)| !(**w > lower_bound) || w.is_nan())
        {
            return Err(Error::Validation(format!(
                "weight {w} at {idx:?} is not above the lower bound {lower_bound}"
            )));
        }
        let obstacle = weights.mapv(|w| w == f64::INFINITY);
        let finite = weights.mapv(|w| if w.is_finite() { w } else { 1.0 });
        self.obstacle = obstacle.iter().any(|&b| b).then_some(obstacle);
        self.weights = Some(finite);
        self.lower_bound = lower_bound;
        Ok(self)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    /// True when every weight is 1.
    pub fn is_unweighted(&self) -> bool {
        self.obstacle.is_none() && self.weights.as_ref().is_none_or(|w| w.iter().all(|&x| x == 1.0))
    }

    pub fn obstacle_mask(&self) -> Option<ArrayView3<'_, bool>> {
        self.obstacle.as_ref().map(|m| m.view())
    }

    /// Weight of a centered cell, `+inf` on obstacles.
    pub fn weight(&self, idx: (usize, usize, usize)) -> f64 {
        if let Some(mask) = &self.obstacle {
            if mask[idx] {
                return f64::INFINITY;
            }
        }
        self.weights.as_ref().map_or(1.0, |w| w[idx])
    }

    /// Full weight grid including infinite entries.
    pub fn weight_grid(&self, dims: GridDims) -> Array3<f64> {
        Array3::from_shape_fn(dims.centered_shape(), |idx| self.weight(idx))
    }

    pub(crate) fn check_dims(&self, dims: GridDims) -> Result<()> {
        if let Some(w) = &self.weights {
            if w.dim() != dims.centered_shape() {
                return Err(Error::Dimension(format!(
                    "weights have shape {:?}, expected {:?}",
                    w.shape(),
                    dims.centered_shape()
                )));
            }
        }
        Ok(())
    }
}

fn check_step(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("prox step must be positive and finite, got {gamma}")))
    }
}

/// Applies `f(|m|^2, f, weight) -> (factor, f')` cell by cell, producing
/// `(factor * m, f')`.
fn map_cells<F>(v: &CenteredField, cost: &CostModel, cell: F) -> Result<CenteredField>
where
    F: Fn(f64, f64, f64) -> (f64, f64) + Sync + Send,
{
    let dims = v.dims();
    cost.check_dims(dims)?;
    if let Some(bad) = v.f().iter().chain((0..dims.dim()).flat_map(|a| v.m(a).into_iter())).find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite prox input {bad}")));
    }
    let (nx, ny, nt) = dims.centered_shape();
    let d = dims.dim();
    let f_in = v.f();
    let m_in: Vec<ArrayView3<'_, f64>> = (0..d).map(|a| v.m(a)).collect();
    // one x-slab per task
    let slabs = par::map_range(nx, |i| {
        let mut out = Vec::with_capacity(ny * nt * (d + 1));
        for j in 0..ny {
            for k in 0..nt {
                let idx = (i, j, k);
                let s: f64 = m_in.iter().map(|m| m[idx] * m[idx]).sum();
                let (factor, f) = cell(s, f_in[idx], cost.weight(idx));
                out.push(f);
                for m in &m_in {
                    out.push(factor * m[idx]);
                }
            }
        }
        out
    });
    let mut res = CenteredField::zeros(dims);
    for (i, slab) in slabs.into_iter().enumerate() {
        let mut it = slab.into_iter();
        for j in 0..ny {
            for k in 0..nt {
                res.f_mut()[(i, j, k)] = it.next().unwrap();
                for a in 0..d {
                    res.m_mut(a)[(i, j, k)] = it.next().unwrap();
                }
            }
        }
    }
    Ok(res)
}

/// Cellwise prox of `gamma * J` under `cost`.
pub fn prox_energy(v: &CenteredField, gamma: f64, cost: &CostModel) -> Result<CenteredField> {
    check_step(gamma)?;
    let beta = cost.beta();
    map_cells(v, cost, |s, f, w| prox_scalar(s, f, gamma * w, beta))
}

/// Prox of `J* / gamma`, by Moreau's identity `x - prox_{gamma J}(gamma x) / gamma`.
///
/// For the unweighted quadratic cost this is the cellwise projection onto
/// the paraboloid `|a|^2 + 2b <= 0`, which is what gets evaluated then.
pub fn prox_energy_conjugate(x: &CenteredField, gamma: f64, cost: &CostModel) -> Result<CenteredField> {
    check_step(gamma)?;
    if cost.beta() == 1.0 && cost.is_unweighted() {
        return map_cells(x, cost, |s, b, _| {
            let (scale, shift) = paraboloid_scalar(s, b);
            (scale, b - shift)
        });
    }
    let beta = cost.beta();
    map_cells(x, cost, |s, b, w| {
        let (factor, f) = prox_scalar(gamma * gamma * s, gamma * b, gamma * w, beta);
        (1.0 - factor, b - f / gamma)
    })
}

/// Precomputed factorizations for one grid: the coupling line solves and the
/// two Poisson operators (staggered and centered constraint sets).
#[derive(Debug)]
pub struct ProxScratch {
    dims: GridDims,
    coupling: Vec<coupling::TridiagonalFactor>,
    staggered: poisson::NeumannPoisson,
    centered: poisson::NeumannPoisson,
}

impl ProxScratch {
    pub fn new(dims: GridDims, backend: PoissonBackend) -> Self {
        let (nx, ny, nt) = dims.centered_shape();
        let scales = [dims.scale(0), dims.scale(1), dims.scale(2)];
        ProxScratch {
            dims,
            coupling: coupling::coupling_factors(dims),
            staggered: poisson::NeumannPoisson::new([nx, ny, nt], scales, backend),
            centered: poisson::NeumannPoisson::new([nx, ny, nt - 1], scales, backend),
        }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn backend(&self) -> PoissonBackend {
        self.staggered.backend()
    }

    pub(crate) fn coupling(&self) -> &[coupling::TridiagonalFactor] {
        &self.coupling
    }

    pub(crate) fn staggered_poisson(&self) -> &poisson::NeumannPoisson {
        &self.staggered
    }

    pub(crate) fn centered_poisson(&self) -> &poisson::NeumannPoisson {
        &self.centered
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldOps;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_centered(dims: GridDims, rng: &mut ChaCha8Rng) -> CenteredField {
        let mut v = CenteredField::zeros(dims);
        for c in v.components_mut() {
            c.mapv_inplace(|_| rng.random_range(-2.0..2.0));
        }
        v
    }

    #[test]
    fn fixed_points_are_kept() {
        let dims = GridDims::new_2d(3, 3, 3).unwrap();
        let mut v = CenteredField::zeros(dims);
        v.f_mut().fill(0.8);
        let out = prox_energy(&v, 0.3, &CostModel::quadratic()).unwrap();
        assert!(out.max_abs_diff(&v) < 1e-15);
    }

    #[test]
    fn infinite_weights_zero_everything() {
        let dims = GridDims::new_1d(4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_centered(dims, &mut rng);
        let cost = CostModel::quadratic()
            .with_weights(Array3::from_elem(dims.centered_shape(), f64::INFINITY), 1e-6)
            .unwrap();
        let out = prox_energy(&v, 1.0, &cost).unwrap();
        assert_eq!(out, CenteredField::zeros(dims));
    }

    #[test]
    fn field_prox_is_cellwise() {
        let dims = GridDims::new_2d(3, 4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = random_centered(dims, &mut rng);
        let out = prox_energy(&v, 0.4, &CostModel::quadratic()).unwrap();
        for ((idx, &f), (&m0, &m1)) in v.f().indexed_iter().zip(v.m(0).iter().zip(v.m(1).iter())) {
            let (m, fs) = prox_j([m0, m1], f, 0.4).unwrap();
            assert_eq!(out.f()[idx], fs);
            assert_eq!(out.m(0)[idx], m[0]);
            assert_eq!(out.m(1)[idx], m[1]);
        }
    }

    #[test]
    fn conjugate_paths_agree() {
        let dims = GridDims::new_2d(3, 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_centered(dims, &mut rng);
        let cost = CostModel::quadratic();
        let g = 0.7;
        let direct = prox_energy_conjugate(&x, g, &cost).unwrap();
        let mut scaled = x.clone();
        scaled.scale(g);
        let mut moreau = prox_energy(&scaled, g, &cost).unwrap();
        moreau.scale(-1.0 / g);
        moreau.axpy(1.0, &x);
        assert!(direct.max_abs_diff(&moreau) < 1e-10);
    }

    #[test]
    fn weights_below_bound_are_rejected() {
        let w = Array3::from_elem((2, 1, 2), 1e-7);
        assert!(CostModel::quadratic().with_weights(w, 1e-6).is_err());
        assert!(CostModel::with_beta(1.5).is_err());
    }
}
