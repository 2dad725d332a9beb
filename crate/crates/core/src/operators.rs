//! Midpoint interpolation, space-time divergence, their adjoints, and
//! operator-norm estimation by power iteration.

use ndarray::{s, Array3, ArrayView3, ArrayViewMut3, Axis, Slice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::FieldOps;
use crate::grid::{extract_boundary, write_boundary, CenteredField, GridDims, StaggeredField};
use crate::par;

/// Seed of the power-iteration start vector.
const POWER_SEED: u64 = 0x0b_b0_7d_11;

fn lo(len: usize) -> Slice {
    Slice::from(0..len - 1)
}

fn hi(len: usize) -> Slice {
    Slice::from(1..len)
}

/// Average of neighbouring samples along `axis`: `out[i] = (a[i] + a[i+1]) / 2`.
fn average_into(out: ArrayViewMut3<'_, f64>, a: ArrayView3<'_, f64>, axis: usize) {
    let len = a.len_of(Axis(axis));
    par::zip2(
        out,
        a.slice_axis(Axis(axis), lo(len)),
        a.slice_axis(Axis(axis), hi(len)),
        |x, y| 0.5 * (x + y),
    );
}

/// Transpose of [`average_into`]: each sample receives half of each adjacent
/// centered sample.
fn spread_half(c: ArrayView3<'_, f64>, axis: usize) -> Array3<f64> {
    let mut shape = [0; 3];
    shape.copy_from_slice(c.shape());
    shape[axis] += 1;
    let len = shape[axis];
    let mut out = Array3::zeros(shape);
    par::update(out.slice_axis_mut(Axis(axis), lo(len)), c, |o, v| o + 0.5 * v);
    par::update(out.slice_axis_mut(Axis(axis), hi(len)), c, |o, v| o + 0.5 * v);
    out
}

/// Midpoint interpolation from the staggered to the centered grid.
pub fn interpolate(u: &StaggeredField) -> CenteredField {
    let dims = u.dims();
    let mut v = CenteredField::zeros(dims);
    for a in 0..dims.dim() {
        average_into(v.m_mut(a), u.m(a), a);
    }
    average_into(v.f_mut(), u.f(), 2);
    v
}

/// Adjoint of [`interpolate`].
pub fn interpolate_adjoint(v: &CenteredField) -> StaggeredField {
    let dims = v.dims();
    let m = (0..dims.dim()).map(|a| spread_half(v.m(a), a)).collect();
    let f = spread_half(v.f(), 2);
    StaggeredField::from_parts(dims, m, f).expect("adjoint preserves staggered shapes")
}

/// Space-time divergence `sum_a N_a (m_a[i] - m_a[i-1]) + P (f[j] - f[j-1])`
/// evaluated on centered nodes.
pub fn divergence(u: &StaggeredField) -> Array3<f64> {
    let dims = u.dims();
    let mut out = Array3::zeros(dims.centered_shape());
    let mut add_difference = |src: ArrayView3<'_, f64>, axis: usize| {
        let scale = dims.scale(axis);
        let len = src.len_of(Axis(axis));
        let hi = src.slice_axis(Axis(axis), hi(len));
        let lo = src.slice_axis(Axis(axis), lo(len));
        let mut diff = Array3::zeros(out.raw_dim());
        par::zip2(diff.view_mut(), hi, lo, |x, y| scale * (x - y));
        par::update(out.view_mut(), diff.view(), |o, d| o + d);
    };
    for a in 0..dims.dim() {
        add_difference(u.m(a), a);
    }
    add_difference(u.f(), 2);
    out
}

/// Adjoint of [`divergence`]: `m_a[k] = N_a (p[k-1] - p[k])` with `p` zero
/// outside the centered grid, and likewise along time for `f`.
pub fn divergence_adjoint(p: ArrayView3<'_, f64>, dims: GridDims) -> Result<StaggeredField> {
    if p.dim() != dims.centered_shape() {
        return Err(Error::Dimension(format!(
            "divergence adjoint expects {:?}, got {:?}",
            dims.centered_shape(),
            p.shape()
        )));
    }
    let negative_difference = |axis: usize| {
        let scale = dims.scale(axis);
        let mut shape = [0; 3];
        shape.copy_from_slice(p.shape());
        shape[axis] += 1;
        let len = shape[axis];
        let mut out = Array3::zeros(shape);
        par::update(out.slice_axis_mut(Axis(axis), hi(len)), p, |o, v| o + scale * v);
        par::update(out.slice_axis_mut(Axis(axis), lo(len)), p, |o, v| o - scale * v);
        out
    };
    let m = (0..dims.dim()).map(negative_difference).collect();
    let f = negative_difference(2);
    StaggeredField::from_parts(dims, m, f)
}

/// Zeroes every non-boundary staggered sample, i.e. applies `b* b`.
pub(crate) fn boundary_mask(u: &StaggeredField) -> StaggeredField {
    let mut out = StaggeredField::zeros(u.dims());
    write_boundary(&mut out, &extract_boundary(u)).expect("same dims");
    out
}

/// Interior (non-boundary) samples of `u` kept, boundary samples zeroed.
pub(crate) fn zero_boundary(u: &mut StaggeredField) {
    let dims = u.dims();
    for a in 0..dims.dim() {
        let mut m = u.m_mut(a);
        let last = m.len_of(Axis(a)) - 1;
        m.index_axis_mut(Axis(a), 0).fill(0.0);
        m.index_axis_mut(Axis(a), last).fill(0.0);
    }
    let mut f = u.f_mut();
    let last = f.len_of(Axis(2)) - 1;
    f.slice_mut(s![.., .., 0]).fill(0.0);
    f.slice_mut(s![.., .., last]).fill(0.0);
}

/// Linear maps on staggered fields whose norm can be estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearOperator {
    Identity,
    Zero,
    Interpolation,
    Divergence,
    /// The constraint map `U -> (div U, b(U))`.
    Constraint,
}

impl LinearOperator {
    /// Applies `A* A` to `u`.
    pub fn normal(&self, u: &StaggeredField) -> StaggeredField {
        match self {
            LinearOperator::Identity => u.clone(),
            LinearOperator::Zero => StaggeredField::zeros(u.dims()),
            LinearOperator::Interpolation => interpolate_adjoint(&interpolate(u)),
            LinearOperator::Divergence => {
                divergence_adjoint(divergence(u).view(), u.dims()).expect("centered shape")
            }
            LinearOperator::Constraint => {
                let mut out = divergence_adjoint(divergence(u).view(), u.dims()).expect("centered shape");
                out.axpy(1.0, &boundary_mask(u));
                out
            }
        }
    }
}

/// Largest singular value of `op` on `dims` by power iteration on `A* A`.
///
/// Stops once the relative change of the estimate drops to `tol`. The start
/// vector comes from a fixed seed so repeated calls agree bitwise.
pub fn estimate_op_norm(op: LinearOperator, dims: GridDims, tol: f64, max_iter: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut x = StaggeredField::zeros(dims);
    for c in x.components_mut() {
        c.mapv_inplace(|_| rng.random::<f64>() - 0.5);
    }
    x.scale(1.0 / x.norm());
    let mut estimate = 0.0f64;
    for it in 0..max_iter {
        let y = op.normal(&x);
        let ny = y.norm();
        if ny == 0.0 {
            return Ok(0.0);
        }
        let next = x.dot(&y).max(0.0).sqrt();
        x = y;
        x.scale(1.0 / ny);
        if it > 0 && (next - estimate).abs() <= tol * next {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::NotConverged {
        estimate,
        iterations: max_iter,
    })
}

/// `‖I‖` to near machine precision, as needed for primal-dual step sizes.
pub fn interpolation_norm(dims: GridDims) -> Result<f64> {
    estimate_op_norm(LinearOperator::Interpolation, dims, 1e-13, 200_000)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldOps;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_staggered(dims: GridDims, rng: &mut ChaCha8Rng) -> StaggeredField {
        let mut u = StaggeredField::zeros(dims);
        for c in u.components_mut() {
            c.mapv_inplace(|_| rng.random::<f64>() * 2.0 - 1.0);
        }
        u
    }

    fn random_centered(dims: GridDims, rng: &mut ChaCha8Rng) -> CenteredField {
        let mut v = CenteredField::zeros(dims);
        for c in v.components_mut() {
            c.mapv_inplace(|_| rng.random::<f64>() * 2.0 - 1.0);
        }
        v
    }

    #[test]
    fn constant_interpolates_to_constant() {
        let dims = GridDims::new_2d(4, 3, 5).unwrap();
        let mut u = StaggeredField::zeros(dims);
        for c in u.components_mut() {
            c.fill(2.5);
        }
        let v = interpolate(&u);
        assert!(v.components().all(|c| c.iter().all(|&x| x == 2.5)));
    }

    #[test]
    fn single_spike_spreads_to_two_neighbours() {
        let dims = GridDims::new_1d(4, 2).unwrap();
        for i0 in 0..6 {
            let mut u = StaggeredField::zeros(dims);
            u.m_mut(0).slice_mut(s![i0, 0, ..]).fill(1.0);
            let v = interpolate(&u);
            for i in 0..5 {
                let expect = if i + 1 == i0 || i == i0 { 0.5 } else { 0.0 };
                assert_eq!(v.m(0)[[i, 0, 1]], expect, "spike at storage {i0}, node {i}");
            }
        }
    }

    #[test]
    fn adjoint_of_time_spike() {
        let dims = GridDims::new_1d(3, 4).unwrap();
        let mut v = CenteredField::zeros(dims);
        v.f_mut().slice_mut(s![.., .., 2]).fill(1.0);
        let u = interpolate_adjoint(&v);
        // centered j0 = 2 touches staggered j = 1 and 2, storage 2 and 3
        for j in 0..6 {
            let expect = if j == 2 || j == 3 { 0.5 } else { 0.0 };
            assert_eq!(u.f()[[1, 0, j]], expect);
        }
        assert_eq!(interpolate_adjoint(&CenteredField::zeros(dims)), StaggeredField::zeros(dims));
    }

    #[test]
    fn divergence_of_constants_vanishes() {
        let dims = GridDims::new_2d(3, 4, 3).unwrap();
        let mut u = StaggeredField::zeros(dims);
        u.m_mut(0).fill(1.3);
        u.m_mut(1).fill(-0.2);
        u.f_mut().fill(7.0);
        assert!(divergence(&u).iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn divergence_of_linear_momentum_is_one() {
        let n = 6;
        let dims = GridDims::new_1d(n, 3).unwrap();
        let mut u = StaggeredField::zeros(dims);
        for ((i, _, _), v) in u.m_mut(0).indexed_iter_mut() {
            *v = (i as f64 - 1.0) / n as f64;
        }
        u.f_mut().fill(0.4);
        assert!(divergence(&u).iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn divergence_adjoint_of_constant() {
        let dims = GridDims::new_1d(3, 2).unwrap();
        let p = Array3::from_elem(dims.centered_shape(), 2.0);
        let u = divergence_adjoint(p.view(), dims).unwrap();
        let m = u.m(0);
        for j in 0..3 {
            assert_eq!(m[[0, 0, j]], -6.0);
            assert_eq!(m[[4, 0, j]], 6.0);
            for i in 1..4 {
                assert_eq!(m[[i, 0, j]], 0.0);
            }
        }
        assert_eq!(u.f()[[0, 0, 0]], -4.0);
        assert_eq!(u.f()[[0, 0, 3]], 4.0);
        assert_eq!(u.f()[[0, 0, 1]], 0.0);
        let zero = divergence_adjoint(Array3::zeros(dims.centered_shape()).view(), dims).unwrap();
        assert_eq!(zero, StaggeredField::zeros(dims));
    }

    #[test]
    fn divergence_adjoint_rejects_wrong_shape() {
        let dims = GridDims::new_1d(3, 2).unwrap();
        assert!(divergence_adjoint(Array3::zeros((3, 1, 3)).view(), dims).is_err());
    }

    #[test]
    fn adjoint_identities_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dims in [GridDims::new_1d(7, 5).unwrap(), GridDims::new_2d(4, 6, 3).unwrap()] {
            for _ in 0..20 {
                let u = random_staggered(dims, &mut rng);
                let v = random_centered(dims, &mut rng);
                let lhs = interpolate(&u).dot(&v);
                let rhs = u.dot(&interpolate_adjoint(&v));
                assert!((lhs - rhs).abs() <= 1e-12 * u.norm() * v.norm());

                let p = Array3::from_shape_fn(dims.centered_shape(), |_| rng.random::<f64>() - 0.5);
                let lhs: f64 = divergence(&u).iter().zip(p.iter()).map(|(a, b)| a * b).sum();
                let rhs = u.dot(&divergence_adjoint(p.view(), dims).unwrap());
                let pn = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((lhs - rhs).abs() <= 1e-12 * u.norm() * pn);
            }
        }
    }

    #[test]
    fn divergence_ignores_constant_shifts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = GridDims::new_2d(3, 3, 4).unwrap();
        let u = random_staggered(dims, &mut rng);
        let mut shifted = u.clone();
        shifted.m_mut(1).mapv_inplace(|x| x + 0.7);
        shifted.f_mut().mapv_inplace(|x| x - 1.1);
        let a = divergence(&u);
        let b = divergence(&shifted);
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn norm_of_identity_and_zero() {
        let dims = GridDims::new_1d(5, 5).unwrap();
        let one = estimate_op_norm(LinearOperator::Identity, dims, 1e-12, 10).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        assert_eq!(estimate_op_norm(LinearOperator::Zero, dims, 1e-12, 10).unwrap(), 0.0);
    }

    #[test]
    fn interpolation_norm_is_below_one() {
        let dims = GridDims::new_2d(6, 5, 7).unwrap();
        let n = interpolation_norm(dims).unwrap();
        assert!(n <= 1.0 + 1e-9 && n > 0.9);
        // the averaging stencil along an axis of n+2 samples has top singular
        // value cos(pi / (2 (n + 2)))
        let exact = (std::f64::consts::PI / (2.0 * 9.0)).cos();
        assert!((n - exact).abs() < 1e-9, "{n} vs {exact}");
    }

    #[test]
    fn power_iteration_reports_non_convergence() {
        let dims = GridDims::new_2d(6, 5, 7).unwrap();
        match estimate_op_norm(LinearOperator::Divergence, dims, 1e-15, 3) {
            Err(Error::NotConverged { iterations, estimate }) => {
                assert_eq!(iterations, 3);
                assert!(estimate > 0.0);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }
}
