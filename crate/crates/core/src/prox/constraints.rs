//! Orthogonal projections onto the affine continuity-equation constraints.
//!
//! The boundary operator selects coordinates, so the joint projection pins the
//! boundary samples and then projects the remaining (interior) samples onto the
//! affine set where the divergence vanishes. The interior normal operator is a
//! Neumann Laplacian on the node box.

use ndarray::{s, Array3, Axis};

use crate::error::{Error, Result};
use crate::field::FieldOps;
use crate::grid::{write_boundary, BoundaryValues, CenteredField, GridDims, StaggeredField};
use crate::operators::{divergence, divergence_adjoint, zero_boundary};
use crate::par;

use super::ProxScratch;

fn check_compatible(b0: &BoundaryValues) -> Result<()> {
    let flux = b0.net_flux();
    let scale = b0.flux_scale().max(f64::MIN_POSITIVE);
    if !(flux.abs() <= 1e-12 * scale) {
        return Err(Error::Feasibility(format!(
            "boundary data carries net flux {flux:e} (relative {:e}); the masses of f0 and f1 must agree",
            flux.abs() / scale
        )));
    }
    Ok(())
}

/// Projection onto `{U : div U = 0, b(U) = b0}`.
pub fn project_constraints(u: &StaggeredField, b0: &BoundaryValues, scratch: &ProxScratch) -> Result<StaggeredField> {
    let dims = scratch.dims();
    if u.dims() != dims || b0.dims() != dims {
        return Err(Error::Dimension(format!(
            "constraint projection prepared for {dims:?}, got field on {:?} and boundary on {:?}",
            u.dims(),
            b0.dims()
        )));
    }
    check_compatible(b0)?;
    let mut out = u.clone();
    write_boundary(&mut out, b0)?;
    let r = divergence(&out);
    let p = scratch.staggered_poisson().solve(r.view())?;
    let mut correction = divergence_adjoint(p.view(), dims)?;
    zero_boundary(&mut correction);
    out.axpy(-1.0, &correction);
    Ok(out)
}

/// Continuity residual of a centered field.
///
/// Row `(x, j)` for `j = 1..=P` (stored at time index `j - 1`) reads
/// `sum_a N_a (m_a[i] - m_a[i-1]) + P (f[j] - f[j-1])` with momentum taken at
/// time `j` and `m_a[-1] = 0`.
pub fn centered_divergence(v: &CenteredField) -> Array3<f64> {
    let dims = v.dims();
    let (nx, ny, nt) = dims.centered_shape();
    let mut out = Array3::zeros((nx, ny, nt - 1));
    let pt = dims.scale(2);
    let f = v.f();
    par::zip2(
        out.view_mut(),
        f.slice(s![.., .., 1..]),
        f.slice(s![.., .., ..nt - 1]),
        |a, b| pt * (a - b),
    );
    for a in 0..dims.dim() {
        let sa = dims.scale(a);
        let m = v.m(a);
        let m = m.slice(s![.., .., 1..]);
        let len = m.len_of(Axis(a));
        par::update(out.view_mut(), m.view(), |o, x| o + sa * x);
        par::update(
            out.slice_axis_mut(Axis(a), (1..len).into()),
            m.slice_axis(Axis(a), (0..len - 1).into()),
            |o, x| o - sa * x,
        );
    }
    out
}

/// Pins the boundary samples of the centered constraint: `f` at the first and
/// last time, and the momentum at the last node along its own axis.
fn pin_centered(v: &mut CenteredField, b0: &BoundaryValues) {
    let dims = v.dims();
    let p = dims.p();
    let mut f = v.f_mut();
    f.index_axis_mut(Axis(2), 0).assign(b0.f0());
    f.index_axis_mut(Axis(2), p).assign(b0.f1());
    for a in 0..dims.dim() {
        let mut m = v.m_mut(a);
        let last = m.len_of(Axis(a)) - 1;
        m.index_axis_mut(Axis(a), last).fill(0.0);
    }
}

/// Projection onto the centered-grid constraint set
/// `{V : centered_divergence(V) = 0, f(0) = f0, f(1) = f1, m = 0 on the far wall}`.
pub fn project_centered_constraints(
    v: &CenteredField,
    b0: &BoundaryValues,
    scratch: &ProxScratch,
) -> Result<CenteredField> {
    let dims = scratch.dims();
    if v.dims() != dims || b0.dims() != dims {
        return Err(Error::Dimension(format!(
            "centered projection prepared for {dims:?}, got field on {:?} and boundary on {:?}",
            v.dims(),
            b0.dims()
        )));
    }
    check_compatible(b0)?;
    let mut out = v.clone();
    pin_centered(&mut out, b0);
    let r = centered_divergence(&out);
    let q = scratch.centered_poisson().solve(r.view())?;
    apply_centered_correction(&mut out, &q, dims);
    Ok(out)
}

/// Subtracts the adjoint of the interior constraint rows applied to `q`.
fn apply_centered_correction(v: &mut CenteredField, q: &Array3<f64>, dims: GridDims) {
    let nt = dims.p() + 1;
    let pt = dims.scale(2);
    {
        let mut f = v.f_mut();
        let mut interior = f.slice_mut(s![.., .., 1..nt - 1]);
        par::update(interior.view_mut(), q.slice(s![.., .., ..nt - 2]), |o, x| o - pt * x);
        par::update(interior, q.slice(s![.., .., 1..]), |o, x| o + pt * x);
    }
    for a in 0..dims.dim() {
        let sa = dims.scale(a);
        let mut m = v.m_mut(a);
        let mut m = m.slice_mut(s![.., .., 1..]);
        let len = m.len_of(Axis(a));
        let mut free = m.slice_axis_mut(Axis(a), (0..len - 1).into());
        par::update(free.view_mut(), q.slice_axis(Axis(a), (0..len - 1).into()), |o, x| o - sa * x);
        par::update(free, q.slice_axis(Axis(a), (1..len).into()), |o, x| o + sa * x);
    }
}
