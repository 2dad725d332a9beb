//! Vector-space operations shared by every iterate type.

use ndarray::Array3;

use crate::grid::{CenteredField, StaggeredField};
use crate::par;

/// Euclidean vector-space structure of a solver variable.
///
/// Reductions (`dot`, `norm`) run sequentially in storage order so their
/// results are independent of the thread count.
pub trait FieldOps: Clone {
    fn arrays(&self) -> Vec<&Array3<f64>>;
    fn arrays_mut(&mut self) -> Vec<&mut Array3<f64>>;

    /// `self += a * x`
    fn axpy(&mut self, a: f64, x: &Self) {
        for (dst, src) in self.arrays_mut().into_iter().zip(x.arrays()) {
            par::update(dst.view_mut(), src.view(), |o, v| o + a * v);
        }
    }

    fn scale(&mut self, a: f64) {
        for dst in self.arrays_mut() {
            dst.mapv_inplace(|v| a * v);
        }
    }

    /// `a * x + b * y`
    fn lincomb(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        let mut out = x.clone();
        for ((dst, xs), ys) in out.arrays_mut().into_iter().zip(x.arrays()).zip(y.arrays()) {
            par::zip2(dst.view_mut(), xs.view(), ys.view(), |p, q| a * p + b * q);
        }
        out
    }

    fn dot(&self, other: &Self) -> f64 {
        self.arrays()
            .into_iter()
            .zip(other.arrays())
            .map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| p * q).sum::<f64>())
            .sum()
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn max_abs(&self) -> f64 {
        self.arrays()
            .into_iter()
            .flat_map(|a| a.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        self.arrays()
            .into_iter()
            .zip(other.arrays())
            .flat_map(|(x, y)| x.iter().zip(y.iter()))
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()))
    }

    fn is_finite(&self) -> bool {
        self.arrays().into_iter().all(|a| a.iter().all(|v| v.is_finite()))
    }
}

impl FieldOps for StaggeredField {
    fn arrays(&self) -> Vec<&Array3<f64>> {
        self.components().collect()
    }

    fn arrays_mut(&mut self) -> Vec<&mut Array3<f64>> {
        self.components_mut().collect()
    }
}

impl FieldOps for CenteredField {
    fn arrays(&self) -> Vec<&Array3<f64>> {
        self.components().collect()
    }

    fn arrays_mut(&mut self) -> Vec<&mut Array3<f64>> {
        self.components_mut().collect()
    }
}

/// A staggered and a centered field treated as one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub u: StaggeredField,
    pub v: CenteredField,
}

impl FieldOps for FieldPair {
    fn arrays(&self) -> Vec<&Array3<f64>> {
        let mut out = self.u.arrays();
        out.extend(self.v.arrays());
        out
    }

    fn arrays_mut(&mut self) -> Vec<&mut Array3<f64>> {
        let mut out = self.u.arrays_mut();
        out.extend(self.v.arrays_mut());
        out
    }
}

/// Two copies of a [`FieldPair`], the variable of the symmetric splittings.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldQuad {
    pub primary: FieldPair,
    pub copy: FieldPair,
}

impl FieldOps for FieldQuad {
    fn arrays(&self) -> Vec<&Array3<f64>> {
        let mut out = self.primary.arrays();
        out.extend(self.copy.arrays());
        out
    }

    fn arrays_mut(&mut self) -> Vec<&mut Array3<f64>> {
        let mut out = self.primary.arrays_mut();
        out.extend(self.copy.arrays_mut());
        out
    }
}
