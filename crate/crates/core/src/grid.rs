//! Space-time grids and the fields that live on them.
//!
//! Every field is stored as a 3-axis array indexed `(x, y, t)`. One-dimensional
//! problems use a singleton `y` axis, so the same code paths serve `d = 1` and
//! `d = 2`.
//!
//! Staggered arrays are 0-based: the staggered sample with index `-1` along its
//! shifted axis lives at storage index `0`, and staggered index `s` lives at
//! storage index `s + 1`.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, ArrayViewMut3, Axis};

use crate::error::{Error, Result};

/// Density samples over the spatial grid, shape `(N+1, M+1)` (`M+1 = 1` in 1-D).
pub type SpatialGrid = Array2<f64>;

/// Grid sizes: `N+1` (and `M+1` in 2-D) spatial samples, `P+1` time samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridDims {
    d: usize,
    n: [usize; 2],
    p: usize,
}

impl GridDims {
    pub fn new_1d(n: usize, p: usize) -> Result<Self> {
        Self::new(1, [n, 0], p)
    }

    pub fn new_2d(n: usize, m: usize, p: usize) -> Result<Self> {
        Self::new(2, [n, m], p)
    }

    fn new(d: usize, n: [usize; 2], p: usize) -> Result<Self> {
        if n[0] < 2 || (d == 2 && n[1] < 2) {
            return Err(Error::Validation(format!(
                "spatial sizes must be at least 2, got {:?}",
                &n[..d]
            )));
        }
        if p < 1 {
            return Err(Error::Validation("time size P must be at least 1".into()));
        }
        Ok(GridDims { d, n, p })
    }

    /// Spatial dimension, 1 or 2.
    pub fn dim(&self) -> usize {
        self.d
    }

    /// `N` for axis 0, `M` for axis 1.
    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `(N+1, M+1)` with `M+1 = 1` in 1-D.
    pub fn spatial_shape(&self) -> (usize, usize) {
        (self.n[0] + 1, self.n[1] + 1)
    }

    pub fn centered_shape(&self) -> (usize, usize, usize) {
        (self.n[0] + 1, self.n[1] + 1, self.p + 1)
    }

    pub fn centered_len(&self) -> usize {
        let (a, b, c) = self.centered_shape();
        a * b * c
    }

    /// Shape of the staggered momentum component `a`: axis `a` gains one sample.
    pub fn staggered_m_shape(&self, a: usize) -> (usize, usize, usize) {
        let (mut x, mut y, t) = self.centered_shape();
        match a {
            0 => x += 1,
            1 => y += 1,
            _ => panic!("momentum component {a} out of range"),
        }
        (x, y, t)
    }

    pub fn staggered_f_shape(&self) -> (usize, usize, usize) {
        let (x, y, t) = self.centered_shape();
        (x, y, t + 1)
    }

    /// Total number of staggered unknowns.
    pub fn staggered_len(&self) -> usize {
        let (x, y, t) = self.staggered_f_shape();
        let mut len = x * y * t;
        for a in 0..self.d {
            let (x, y, t) = self.staggered_m_shape(a);
            len += x * y * t;
        }
        len
    }

    /// Divergence scale factor of a storage axis: `N`, `M` or `P`.
    pub fn scale(&self, axis: usize) -> f64 {
        match axis {
            0 | 1 => self.n[axis] as f64,
            2 => self.p as f64,
            _ => panic!("axis {axis} out of range"),
        }
    }
}

fn shape3(a: &Array3<f64>) -> (usize, usize, usize) {
    let s = a.shape();
    (s[0], s[1], s[2])
}

/// Momentum and density co-located on the centered grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredField {
    dims: GridDims,
    m: Vec<Array3<f64>>,
    f: Array3<f64>,
}

impl CenteredField {
    pub fn zeros(dims: GridDims) -> Self {
        let shape = dims.centered_shape();
        CenteredField {
            dims,
            m: (0..dims.dim()).map(|_| Array3::zeros(shape)).collect(),
            f: Array3::zeros(shape),
        }
    }

    pub fn from_parts(dims: GridDims, m: Vec<Array3<f64>>, f: Array3<f64>) -> Result<Self> {
        let shape = dims.centered_shape();
        if m.len() != dims.dim() {
            return Err(Error::Dimension(format!(
                "expected {} momentum components, got {}",
                dims.dim(),
                m.len()
            )));
        }
        for arr in m.iter().chain(std::iter::once(&f)) {
            if shape3(arr) != shape {
                return Err(Error::Dimension(format!(
                    "centered component has shape {:?}, expected {shape:?}",
                    arr.shape()
                )));
            }
        }
        Ok(CenteredField { dims, m, f })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn m(&self, a: usize) -> ArrayView3<'_, f64> {
        self.m[a].view()
    }

    pub fn m_mut(&mut self, a: usize) -> ArrayViewMut3<'_, f64> {
        self.m[a].view_mut()
    }

    pub fn f(&self) -> ArrayView3<'_, f64> {
        self.f.view()
    }

    pub fn f_mut(&mut self) -> ArrayViewMut3<'_, f64> {
        self.f.view_mut()
    }

    pub fn into_parts(self) -> (Vec<Array3<f64>>, Array3<f64>) {
        (self.m, self.f)
    }

    pub(crate) fn components(&self) -> impl Iterator<Item = &Array3<f64>> {
        self.m.iter().chain(std::iter::once(&self.f))
    }

    pub(crate) fn components_mut(&mut self) -> impl Iterator<Item = &mut Array3<f64>> {
        self.m.iter_mut().chain(std::iter::once(&mut self.f))
    }
}

/// Momentum components and density on their shifted grids.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredField {
    dims: GridDims,
    m: Vec<Array3<f64>>,
    f: Array3<f64>,
}

impl StaggeredField {
    pub fn zeros(dims: GridDims) -> Self {
        StaggeredField {
            dims,
            m: (0..dims.dim())
                .map(|a| Array3::zeros(dims.staggered_m_shape(a)))
                .collect(),
            f: Array3::zeros(dims.staggered_f_shape()),
        }
    }

    pub fn from_parts(dims: GridDims, m: Vec<Array3<f64>>, f: Array3<f64>) -> Result<Self> {
        if m.len() != dims.dim() {
            return Err(Error::Dimension(format!(
                "expected {} momentum components, got {}",
                dims.dim(),
                m.len()
            )));
        }
        for (a, arr) in m.iter().enumerate() {
            if shape3(arr) != dims.staggered_m_shape(a) {
                return Err(Error::Dimension(format!(
                    "staggered momentum component {a} has shape {:?}, expected {:?}",
                    arr.shape(),
                    dims.staggered_m_shape(a)
                )));
            }
        }
        if shape3(&f) != dims.staggered_f_shape() {
            return Err(Error::Dimension(format!(
                "staggered density has shape {:?}, expected {:?}",
                f.shape(),
                dims.staggered_f_shape()
            )));
        }
        Ok(StaggeredField { dims, m, f })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn m(&self, a: usize) -> ArrayView3<'_, f64> {
        self.m[a].view()
    }

    pub fn m_mut(&mut self, a: usize) -> ArrayViewMut3<'_, f64> {
        self.m[a].view_mut()
    }

    pub fn f(&self) -> ArrayView3<'_, f64> {
        self.f.view()
    }

    pub fn f_mut(&mut self) -> ArrayViewMut3<'_, f64> {
        self.f.view_mut()
    }

    pub fn into_parts(self) -> (Vec<Array3<f64>>, Array3<f64>) {
        (self.m, self.f)
    }

    pub(crate) fn components(&self) -> impl Iterator<Item = &Array3<f64>> {
        self.m.iter().chain(std::iter::once(&self.f))
    }

    pub(crate) fn components_mut(&mut self) -> impl Iterator<Item = &mut Array3<f64>> {
        self.m.iter_mut().chain(std::iter::once(&mut self.f))
    }

    /// Linear-in-time density between `f0` and `f1` with zero momentum.
    ///
    /// The staggered sample `j = -1..=P` gets weight `(j+1)/(P+1)` on `f1`, so
    /// the temporal boundary slabs are exactly `f0` and `f1`.
    pub fn linear_interpolation(dims: GridDims, f0: &SpatialGrid, f1: &SpatialGrid) -> Result<Self> {
        check_spatial(dims, f0)?;
        check_spatial(dims, f1)?;
        let mut u = StaggeredField::zeros(dims);
        let steps = (dims.p() + 1) as f64;
        for (j, mut slab) in u.f.axis_iter_mut(Axis(2)).enumerate() {
            let s = j as f64 / steps;
            ndarray::Zip::from(&mut slab)
                .and(f0)
                .and(f1)
                .for_each(|o, &a, &b| *o = (1.0 - s) * a + s * b);
        }
        Ok(u)
    }
}

fn check_spatial(dims: GridDims, g: &SpatialGrid) -> Result<()> {
    let (nx, ny) = dims.spatial_shape();
    if g.dim() != (nx, ny) {
        return Err(Error::Dimension(format!(
            "spatial grid has shape {:?}, expected ({nx}, {ny})",
            g.shape()
        )));
    }
    Ok(())
}

/// Boundary values of a staggered field: two momentum slabs per spatial axis
/// and the initial/final density slabs.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValues {
    dims: GridDims,
    /// `m[a][0]` is the slab at staggered index `-1`, `m[a][1]` at index `N_a`.
    m: Vec<[Array2<f64>; 2]>,
    f0: SpatialGrid,
    f1: SpatialGrid,
}

impl BoundaryValues {
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn momentum_slab(&self, a: usize, side: usize) -> ArrayView2<'_, f64> {
        self.m[a][side].view()
    }

    pub fn f0(&self) -> &SpatialGrid {
        &self.f0
    }

    pub fn f1(&self) -> &SpatialGrid {
        &self.f1
    }

    /// Largest absolute entrywise difference, `+inf` on shape mismatch.
    pub fn max_abs_diff(&self, other: &BoundaryValues) -> f64 {
        if self.dims != other.dims {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        let mut visit = |a: &Array2<f64>, b: &Array2<f64>| {
            for (x, y) in a.iter().zip(b.iter()) {
                worst = worst.max((x - y).abs());
            }
        };
        for (sa, sb) in self.m.iter().zip(&other.m) {
            visit(&sa[0], &sb[0]);
            visit(&sa[1], &sb[1]);
        }
        visit(&self.f0, &other.f0);
        visit(&self.f1, &other.f1);
        worst
    }

    /// Net boundary flux that the divergence constraint must balance. Zero
    /// exactly when the constraint set is nonempty.
    pub fn net_flux(&self) -> f64 {
        let mut flux = self.dims.scale(2) * (compensated_sum(self.f1.iter().copied())
            - compensated_sum(self.f0.iter().copied()));
        for (a, slabs) in self.m.iter().enumerate() {
            flux += self.dims.scale(a)
                * (compensated_sum(slabs[1].iter().copied()) - compensated_sum(slabs[0].iter().copied()));
        }
        flux
    }

    /// Sum of absolute boundary values weighted like [`Self::net_flux`].
    pub(crate) fn flux_scale(&self) -> f64 {
        let abs_sum = |a: &Array2<f64>| a.iter().map(|v| v.abs()).sum::<f64>();
        let mut s = self.dims.scale(2) * (abs_sum(&self.f0) + abs_sum(&self.f1));
        for (a, slabs) in self.m.iter().enumerate() {
            s += self.dims.scale(a) * (abs_sum(&slabs[0]) + abs_sum(&slabs[1]));
        }
        s
    }
}

/// Reads the boundary slabs of `u`.
pub fn extract_boundary(u: &StaggeredField) -> BoundaryValues {
    let dims = u.dims;
    let m = (0..dims.dim())
        .map(|a| {
            let last = u.m[a].len_of(Axis(a)) - 1;
            [
                u.m[a].index_axis(Axis(a), 0).to_owned(),
                u.m[a].index_axis(Axis(a), last).to_owned(),
            ]
        })
        .collect();
    BoundaryValues {
        dims,
        m,
        f0: u.f.index_axis(Axis(2), 0).to_owned(),
        f1: u.f.index_axis(Axis(2), dims.p() + 1).to_owned(),
    }
}

/// Overwrites the boundary slabs of `u` with `b`.
pub fn write_boundary(u: &mut StaggeredField, b: &BoundaryValues) -> Result<()> {
    if u.dims != b.dims {
        return Err(Error::Dimension(format!(
            "boundary values for {:?} written into field on {:?}",
            b.dims, u.dims
        )));
    }
    let dims = u.dims;
    for a in 0..dims.dim() {
        let last = u.m[a].len_of(Axis(a)) - 1;
        u.m[a].index_axis_mut(Axis(a), 0).assign(&b.m[a][0]);
        u.m[a].index_axis_mut(Axis(a), last).assign(&b.m[a][1]);
    }
    u.f.index_axis_mut(Axis(2), 0).assign(&b.f0);
    u.f.index_axis_mut(Axis(2), dims.p() + 1).assign(&b.f1);
    Ok(())
}

/// Target boundary values `(0, 0, f0, f1)`.
pub fn assemble_boundary_target(dims: GridDims, f0: &SpatialGrid, f1: &SpatialGrid) -> Result<BoundaryValues> {
    check_spatial(dims, f0)?;
    check_spatial(dims, f1)?;
    for (name, g) in [("f0", f0), ("f1", f1)] {
        if let Some((idx, v)) = g.indexed_iter().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Validation(format!(
                "{name} has invalid entry {v} at {idx:?}; densities must be finite and nonnegative"
            )));
        }
    }
    let (_, _, nt) = dims.centered_shape();
    let m = (0..dims.dim())
        .map(|a| {
            let (x, y, _) = dims.centered_shape();
            let other = if a == 0 { y } else { x };
            [Array2::zeros((other, nt)), Array2::zeros((other, nt))]
        })
        .collect();
    Ok(BoundaryValues {
        dims,
        m,
        f0: f0.clone(),
        f1: f1.clone(),
    })
}

/// Densities prepared for transport, with the masses they had on input.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPair {
    pub f0: SpatialGrid,
    pub f1: SpatialGrid,
    pub mass0: f64,
    pub mass1: f64,
}

/// Enforces a density floor and unit mass on both inputs.
///
/// Each density is scaled to unit mass and then, if its smallest entry is
/// below `floor`, mixed with the uniform density just enough to lift that
/// entry to `floor`. With `normalize = false` only the floor is applied and the
/// two masses must already agree to `1e-12` (relative).
pub fn validate_and_normalize(
    f0: &SpatialGrid,
    f1: &SpatialGrid,
    floor: f64,
    normalize: bool,
) -> Result<NormalizedPair> {
    if f0.dim() != f1.dim() {
        return Err(Error::Dimension(format!(
            "f0 has shape {:?} but f1 has shape {:?}",
            f0.shape(),
            f1.shape()
        )));
    }
    if !(floor >= 0.0) || !floor.is_finite() {
        return Err(Error::Validation(format!("density floor must be a finite nonnegative number, got {floor}")));
    }
    let count = f0.len() as f64;
    if floor * count >= 1.0 {
        return Err(Error::Validation(format!(
            "floor {floor} is not below the uniform density 1/{count}"
        )));
    }
    let mut masses = [0.0; 2];
    let mut out = Vec::with_capacity(2);
    for (i, (name, g)) in [("f0", f0), ("f1", f1)].into_iter().enumerate() {
        if let Some(v) = g.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Validation(format!("{name} has invalid entry {v}")));
        }
        let mass = compensated_sum(g.iter().copied());
        if mass <= 0.0 {
            return Err(Error::Degenerate(format!("{name} has zero total mass")));
        }
        masses[i] = mass;
        let mut h = if normalize && mass != 1.0 { g.mapv(|v| v / mass) } else { g.clone() };
        let total = if normalize { 1.0 } else { mass };
        let min = h.iter().copied().fold(f64::INFINITY, f64::min);
        let level = floor * total;
        if min < level * (1.0 - 1e-12) {
            // mix with the uniform density: min((1-l) h + l/n) == level
            let uniform = total / count;
            let lambda = (level - min) / (uniform - min);
            h.mapv_inplace(|v| (1.0 - lambda) * v + lambda * uniform);
        }
        out.push(h);
    }
    if !normalize && (masses[0] - masses[1]).abs() > 1e-12 * masses[0].max(masses[1]) {
        return Err(Error::Validation(format!(
            "unnormalized densities must have equal mass, got {} and {}",
            masses[0], masses[1]
        )));
    }
    let f1 = out.pop().unwrap();
    let f0 = out.pop().unwrap();
    Ok(NormalizedPair {
        f0,
        f1,
        mass0: masses[0],
        mass1: masses[1],
    })
}

/// Sum of each time slice of `f` (last axis is time).
pub fn mass_per_slice(f: ArrayView3<'_, f64>) -> Vec<f64> {
    f.axis_iter(Axis(2))
        .map(|slab| compensated_sum(slab.iter().copied()))
        .collect()
}

/// Neumaier-compensated summation in iteration order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Staggered density without its two temporal boundary slabs.
#[cfg(test)]
pub(crate) fn staggered_interior_time(f: ArrayView3<'_, f64>) -> ArrayView3<'_, f64> {
    let nt = f.len_of(Axis(2));
    f.slice_move(ndarray::s![.., .., 1..nt - 1])
}
