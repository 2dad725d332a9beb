//! Projection onto `{(U, V) : V = I(U)}`.
//!
//! `I* I` acts on each staggered component along that component's own axis,
//! so `Id + I* I` splits into one tridiagonal system per grid line.

use ndarray::ArrayViewMut1;

use crate::error::{Error, Result};
use crate::field::FieldOps;
use crate::grid::{CenteredField, GridDims, StaggeredField};
use crate::operators::{interpolate, interpolate_adjoint};
use crate::par;

/// Thomas factorization of the `len x len` matrix `Id + I* I`: diagonal 1.25 at
/// both ends and 1.5 inside, off-diagonals 0.25.
#[derive(Debug, Clone)]
pub(crate) struct TridiagonalFactor {
    /// Modified super-diagonal `c'`.
    upper: Vec<f64>,
    /// Pivots.
    pivot: Vec<f64>,
}

const OFF: f64 = 0.25;

impl TridiagonalFactor {
    pub(crate) fn new(len: usize) -> Self {
        let diag = |i: usize| if i == 0 || i + 1 == len { 1.25 } else { 1.5 };
        let mut upper = vec![0.0; len];
        let mut pivot = vec![0.0; len];
        for i in 0..len {
            let prev = if i == 0 { 0.0 } else { OFF * upper[i - 1] };
            pivot[i] = diag(i) - prev;
            upper[i] = OFF / pivot[i];
        }
        TridiagonalFactor { upper, pivot }
    }

    pub(crate) fn len(&self) -> usize {
        self.pivot.len()
    }

    pub(crate) fn solve_in_place(&self, mut x: ArrayViewMut1<'_, f64>) {
        let n = self.len();
        x[0] /= self.pivot[0];
        for i in 1..n {
            x[i] = (x[i] - OFF * x[i - 1]) / self.pivot[i];
        }
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] -= self.upper[i] * next;
        }
    }
}

/// One factor per staggered component: momentum axes first, then time.
pub(crate) fn coupling_factors(dims: GridDims) -> Vec<TridiagonalFactor> {
    let mut out: Vec<_> = (0..dims.dim())
        .map(|a| TridiagonalFactor::new(dims.n(a) + 2))
        .collect();
    out.push(TridiagonalFactor::new(dims.p() + 2));
    out
}

/// `(Ũ, Ṽ)` with `Ũ = (Id + I* I)^-1 (U + I* V)` and `Ṽ = I(Ũ)`.
pub fn project_coupling(
    u: &StaggeredField,
    v: &CenteredField,
    scratch: &super::ProxScratch,
) -> Result<(StaggeredField, CenteredField)> {
    let dims = scratch.dims();
    if u.dims() != dims || v.dims() != dims {
        return Err(Error::Dimension(format!(
            "coupling projection prepared for {dims:?}, got fields on {:?} and {:?}",
            u.dims(),
            v.dims()
        )));
    }
    let mut out = interpolate_adjoint(v);
    out.axpy(1.0, u);
    let factors = scratch.coupling();
    for a in 0..dims.dim() {
        let factor = &factors[a];
        par::for_each_lane(out.m_mut(a), a, |lane| factor.solve_in_place(lane));
    }
    let factor = &factors[dims.dim()];
    par::for_each_lane(out.f_mut(), 2, |lane| factor.solve_in_place(lane));
    let vt = interpolate(&out);
    Ok((out, vt))
}
