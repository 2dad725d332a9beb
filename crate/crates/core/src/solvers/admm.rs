//! ADMM on the dual of the centered-grid problem.
//!
//! The dual reads `min_s K(s) + H(B s)` with `K` the conjugate of the
//! constraint indicator, `H = J*` and `B = -A*`. The variable `s` only enters
//! through `B s`, so the state stores that image instead of `s` itself.

use crate::error::Result;
use crate::field::FieldOps;
use crate::grid::CenteredField;
use crate::prox::{project_centered_constraints, prox_energy_conjugate, ProxScratch};

use super::Problem;

/// `(B s, q, u)` of the scaled-form ADMM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub bs: CenteredField,
    pub q: CenteredField,
    pub u: CenteredField,
    pub iteration: usize,
}

impl AdmmState {
    /// State matching the Douglas–Rachford pair `(z, w)` at step `gamma`:
    /// `u = z / gamma`, `q = (w - z) / gamma`.
    pub fn from_douglas_rachford(z: &CenteredField, w: &CenteredField, gamma: f64) -> Self {
        let mut u = z.clone();
        u.scale(1.0 / gamma);
        let q = CenteredField::lincomb(1.0 / gamma, w, -1.0 / gamma, z);
        AdmmState {
            bs: CenteredField::zeros(z.dims()),
            q,
            u,
            iteration: 0,
        }
    }
}

/// One iteration:
/// `B s+ = prox^B_{K/gamma}(q - u)` evaluated through the metric-prox identity
/// `B prox^B_{K/gamma}(z) = z - prox_{gamma K* o B*}(gamma z) / gamma`,
/// `q+ = prox_{H/gamma}(B s+ + u)`, `u+ = u + B s+ - q+`.
pub fn admm_dual_step(state: &mut AdmmState, gamma: f64, problem: &Problem, scratch: &ProxScratch) -> Result<()> {
    let z = CenteredField::lincomb(1.0, &state.q, -1.0, &state.u);
    // K* o B* is the indicator of {x : A x = -y}, i.e. of -C
    let mut arg = z.clone();
    arg.scale(-gamma);
    let proj = project_centered_constraints(&arg, problem.boundary(), scratch)?;
    let mut bs = z;
    bs.axpy(1.0 / gamma, &proj);

    let mut shifted = bs.clone();
    shifted.axpy(1.0, &state.u);
    let q = prox_energy_conjugate(&shifted, gamma, problem.cost())?;
    let mut u = shifted;
    u.axpy(-1.0, &q);

    state.bs = bs;
    state.q = q;
    state.u = u;
    state.iteration += 1;
    Ok(())
}
