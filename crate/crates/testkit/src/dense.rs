//! Dense operator matrices assembled from independently written stencils,
//! and the dense constrained least-squares projection.

use std::fmt;

use dynot_core::grid::{BoundaryValues, CenteredField, GridDims, StaggeredField};
use nalgebra::{DMatrix, DVector};
use ndarray::Array3;

/// Largest number of staggered unknowns the dense paths accept.
pub const MAX_DENSE_UNKNOWNS: usize = 5000;

const REFINEMENT_SWEEPS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    TooLarge { unknowns: usize },
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::TooLarge { unknowns } => {
                write!(f, "{unknowns} unknowns exceed the dense limit of {MAX_DENSE_UNKNOWNS}")
            }
        }
    }
}

impl std::error::Error for OracleError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenseOp {
    /// Staggered to centered midpoint averages.
    Interpolation,
    /// Staggered field to centered-node divergence.
    Divergence,
    /// Staggered field to its boundary samples.
    Boundary,
}

/// Shapes of the staggered blocks, momentum components first.
fn staggered_blocks(dims: GridDims) -> Vec<[usize; 3]> {
    let (nx, ny, nt) = (dims.n(0) + 1, if dims.dim() == 2 { dims.n(1) + 1 } else { 1 }, dims.p() + 1);
    let mut out = vec![[nx + 1, ny, nt]];
    if dims.dim() == 2 {
        out.push([nx, ny + 1, nt]);
    }
    out.push([nx, ny, nt + 1]);
    out
}

fn centered_shape(dims: GridDims) -> [usize; 3] {
    let ny = if dims.dim() == 2 { dims.n(1) + 1 } else { 1 };
    [dims.n(0) + 1, ny, dims.p() + 1]
}

struct Layout {
    shapes: Vec<[usize; 3]>,
    offsets: Vec<usize>,
    len: usize,
}

impl Layout {
    fn new(shapes: Vec<[usize; 3]>) -> Self {
        let mut offsets = Vec::new();
        let mut len = 0;
        for s in &shapes {
            offsets.push(len);
            len += s[0] * s[1] * s[2];
        }
        Layout { shapes, offsets, len }
    }

    fn index(&self, block: usize, p: [usize; 3]) -> usize {
        let s = self.shapes[block];
        self.offsets[block] + (p[0] * s[1] + p[1]) * s[2] + p[2]
    }

    fn cells(&self, block: usize) -> impl Iterator<Item = [usize; 3]> {
        let s = self.shapes[block];
        (0..s[0]).flat_map(move |x| (0..s[1]).flat_map(move |y| (0..s[2]).map(move |t| [x, y, t])))
    }
}

fn staggered_layout(dims: GridDims) -> Layout {
    Layout::new(staggered_blocks(dims))
}

fn centered_layout(dims: GridDims) -> Layout {
    Layout::new(vec![centered_shape(dims); dims.dim() + 1])
}

fn check_size(dims: GridDims) -> Result<(), OracleError> {
    let unknowns = staggered_layout(dims).len;
    if unknowns > MAX_DENSE_UNKNOWNS {
        return Err(OracleError::TooLarge { unknowns });
    }
    Ok(())
}

fn flatten(arrays: &[&Array3<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        arrays.iter().map(|a| a.len()).sum(),
        arrays.iter().flat_map(|a| a.iter().copied()),
    )
}

fn unflatten(x: &DVector<f64>, shapes: &[[usize; 3]]) -> Vec<Array3<f64>> {
    let mut start = 0;
    shapes
        .iter()
        .map(|s| {
            let len = s[0] * s[1] * s[2];
            let a = Array3::from_shape_vec((s[0], s[1], s[2]), x.as_slice()[start..start + len].to_vec())
                .expect("block length matches shape");
            start += len;
            a
        })
        .collect()
}

/// Staggered field as a flat vector: `m_0`, (`m_1`), `f`, each row-major.
pub fn flatten_staggered(u: &StaggeredField) -> DVector<f64> {
    let m: Vec<_> = (0..u.dims().dim()).map(|a| u.m(a).to_owned()).collect();
    let f = u.f().to_owned();
    let mut refs: Vec<&Array3<f64>> = m.iter().collect();
    refs.push(&f);
    flatten(&refs)
}

/// Centered field as a flat vector in the same block order.
pub fn flatten_centered(v: &CenteredField) -> DVector<f64> {
    let m: Vec<_> = (0..v.dims().dim()).map(|a| v.m(a).to_owned()).collect();
    let f = v.f().to_owned();
    let mut refs: Vec<&Array3<f64>> = m.iter().collect();
    refs.push(&f);
    flatten(&refs)
}

pub fn unflatten_staggered(x: &DVector<f64>, dims: GridDims) -> StaggeredField {
    let mut blocks = unflatten(x, &staggered_blocks(dims));
    let f = blocks.pop().expect("density block");
    StaggeredField::from_parts(dims, blocks, f).expect("oracle layout matches staggered shapes")
}

pub fn unflatten_centered(x: &DVector<f64>, dims: GridDims) -> CenteredField {
    let mut blocks = unflatten(x, &vec![centered_shape(dims); dims.dim() + 1]);
    let f = blocks.pop().expect("density block");
    CenteredField::from_parts(dims, blocks, f).expect("oracle layout matches centered shapes")
}

fn shift(p: [usize; 3], axis: usize) -> [usize; 3] {
    let mut q = p;
    q[axis] += 1;
    q
}

/// Time axis sits at position 2 in the storage order.
fn block_axis(dims: GridDims, block: usize) -> usize {
    if block == dims.dim() {
        2
    } else {
        block
    }
}

fn interpolation(dims: GridDims) -> DMatrix<f64> {
    let st = staggered_layout(dims);
    let ce = centered_layout(dims);
    let mut a = DMatrix::zeros(ce.len, st.len);
    for block in 0..=dims.dim() {
        let axis = block_axis(dims, block);
        for p in ce.cells(block) {
            let row = ce.index(block, p);
            a[(row, st.index(block, p))] += 0.5;
            a[(row, st.index(block, shift(p, axis)))] += 0.5;
        }
    }
    a
}

fn divergence(dims: GridDims) -> DMatrix<f64> {
    let st = staggered_layout(dims);
    let ce = centered_layout(dims);
    let mut a = DMatrix::zeros(ce.cells(0).count(), st.len);
    for (row, p) in ce.cells(0).enumerate() {
        for block in 0..=dims.dim() {
            let axis = block_axis(dims, block);
            let scale = if axis == 2 { dims.p() } else { dims.n(axis) } as f64;
            a[(row, st.index(block, shift(p, axis)))] += scale;
            a[(row, st.index(block, p))] -= scale;
        }
    }
    a
}

/// Staggered indices of the boundary samples, in the order used by
/// [`boundary_targets`].
fn boundary_indices(dims: GridDims) -> Vec<usize> {
    let st = staggered_layout(dims);
    let mut out = Vec::new();
    for block in 0..=dims.dim() {
        let axis = block_axis(dims, block);
        let last = st.shapes[block][axis] - 1;
        for p in st.cells(block) {
            if p[axis] == 0 || p[axis] == last {
                out.push(st.index(block, p));
            }
        }
    }
    out
}

fn boundary_targets(dims: GridDims, b0: &BoundaryValues) -> Vec<f64> {
    let st = staggered_layout(dims);
    let mut out = Vec::new();
    for block in 0..=dims.dim() {
        let axis = block_axis(dims, block);
        let last = st.shapes[block][axis] - 1;
        for p in st.cells(block) {
            if p[axis] != 0 && p[axis] != last {
                continue;
            }
            let value = if axis == 2 {
                let g = if p[2] == 0 { b0.f0() } else { b0.f1() };
                g[(p[0], p[1])]
            } else {
                let side = usize::from(p[axis] != 0);
                let other = if axis == 0 { p[1] } else { p[0] };
                b0.momentum_slab(axis, side)[(other, p[2])]
            };
            out.push(value);
        }
    }
    out
}

fn boundary(dims: GridDims) -> DMatrix<f64> {
    let st = staggered_layout(dims);
    let idx = boundary_indices(dims);
    let mut a = DMatrix::zeros(idx.len(), st.len);
    for (row, &col) in idx.iter().enumerate() {
        a[(row, col)] = 1.0;
    }
    a
}

/// Dense matrix of a staggered-domain operator, columns indexed by
/// [`flatten_staggered`] order.
pub fn oracle_dense_op(op: DenseOp, dims: GridDims) -> Result<DMatrix<f64>, OracleError> {
    check_size(dims)?;
    Ok(match op {
        DenseOp::Interpolation => interpolation(dims),
        DenseOp::Divergence => divergence(dims),
        DenseOp::Boundary => boundary(dims),
    })
}

/// Largest singular value.
pub fn dense_norm(a: &DMatrix<f64>) -> f64 {
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Nearest staggered field to `u` with zero divergence and boundary `b0`,
/// from `x = u - A^+ (A u - y)` with `A` the stacked divergence and boundary
/// rows and `A^+` its SVD pseudo-inverse.
pub fn oracle_project(u: &StaggeredField, b0: &BoundaryValues) -> Result<StaggeredField, OracleError> {
    let dims = u.dims();
    check_size(dims)?;
    let d = divergence(dims);
    let b = boundary(dims);
    let mut a = DMatrix::zeros(d.nrows() + b.nrows(), d.ncols());
    a.rows_mut(0, d.nrows()).copy_from(&d);
    a.rows_mut(d.nrows(), b.nrows()).copy_from(&b);
    let mut y = DVector::zeros(a.nrows());
    for (k, v) in boundary_targets(dims, b0).into_iter().enumerate() {
        y[d.nrows() + k] = v;
    }
    let mut x = flatten_staggered(u);
    let svd = a.clone().svd(true, true);
    let cutoff = 1e-10 * svd.singular_values.iter().copied().fold(0.0, f64::max);
    // a few refinement sweeps: a single pseudo-inverse solve can leave
    // residuals near 1e-7 when the SVD is slightly inaccurate
    for _ in 0..REFINEMENT_SWEEPS {
        let residual = &a * &x - &y;
        let correction = svd.solve(&residual, cutoff).expect("both factors were computed");
        x -= correction;
    }
    Ok(unflatten_staggered(&x, dims))
}

/// `A x - y` of the stacked constraint system, max norm.
pub fn constraint_residual(u: &StaggeredField, b0: &BoundaryValues) -> Result<f64, OracleError> {
    let dims = u.dims();
    check_size(dims)?;
    let x = flatten_staggered(u);
    let div = divergence(dims) * &x;
    let mut worst = div.amax();
    for (&i, t) in boundary_indices(dims).iter().zip(boundary_targets(dims, b0)) {
        worst = worst.max((x[i] - t).abs());
    }
    Ok(worst)
}
