//! Neumann Poisson solves `L p = r` with `L = sum_a s_a^2 D_a^T D_a`, where
//! `D_a` is the forward difference along axis `a` of a box of nodes.
//!
//! The spectral backend diagonalizes `L` in the DCT-II basis. The conjugate
//! gradient backend applies the stencil matrix-free.

use std::sync::Arc;

use ndarray::{Array1, Array3, ArrayView3, Axis, Zip};
use rustdct::{DctPlanner, TransformType2And3};

use crate::error::{Error, Result};
use crate::par;

/// Linear solver used inside the constraint projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoissonBackend {
    /// Cosine-transform diagonalization (exact up to rounding).
    #[default]
    Spectral,
    /// Jacobi-preconditioned conjugate gradient to relative residual 1e-12.
    ConjugateGradient,
}

const CG_TOL: f64 = 1e-12;

pub(crate) struct NeumannPoisson {
    lens: [usize; 3],
    scales: [f64; 3],
    backend: PoissonBackend,
    plans: [Option<Arc<dyn TransformType2And3<f64>>>; 3],
    /// Eigenvalues of `L` indexed by cosine frequency; the zero mode holds 0.
    inv_eigen: Array3<f64>,
}

impl std::fmt::Debug for NeumannPoisson {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NeumannPoisson")
            .field("lens", &self.lens)
            .field("scales", &self.scales)
            .field("backend", &self.backend)
            .finish()
    }
}

fn axis_eigen(len: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(len, |k| {
        let c = (std::f64::consts::PI * k as f64 / len as f64).cos();
        scale * scale * (2.0 - 2.0 * c)
    })
}

impl NeumannPoisson {
    pub(crate) fn new(lens: [usize; 3], scales: [f64; 3], backend: PoissonBackend) -> Self {
        let mut planner = DctPlanner::new();
        let plans = [0, 1, 2].map(|a| (lens[a] > 1).then(|| planner.plan_dct2(lens[a])));
        let ev: Vec<Array1<f64>> = (0..3).map(|a| axis_eigen(lens[a], scales[a])).collect();
        let mut inv_eigen = Array3::from_shape_fn((lens[0], lens[1], lens[2]), |(i, j, k)| {
            let lam = ev[0][i] + ev[1][j] + ev[2][k];
            if lam > 0.0 {
                1.0 / lam
            } else {
                0.0
            }
        });
        inv_eigen[[0, 0, 0]] = 0.0;
        NeumannPoisson {
            lens,
            scales,
            backend,
            plans,
            inv_eigen,
        }
    }

    pub(crate) fn backend(&self) -> PoissonBackend {
        self.backend
    }

    /// Minimum-norm solution of `L p = r`; `r` must have (near) zero mean.
    pub(crate) fn solve(&self, r: ArrayView3<'_, f64>) -> Result<Array3<f64>> {
        if r.shape() != self.lens {
            return Err(Error::Dimension(format!(
                "Poisson right-hand side has shape {:?}, expected {:?}",
                r.shape(),
                self.lens
            )));
        }
        match self.backend {
            PoissonBackend::Spectral => Ok(self.solve_spectral(r)),
            PoissonBackend::ConjugateGradient => self.solve_cg(r),
        }
    }

    fn transform(&self, x: &mut Array3<f64>, inverse: bool) {
        for axis in 0..3 {
            let Some(plan) = &self.plans[axis] else { continue };
            let norm = 2.0 / self.lens[axis] as f64;
            par::for_each_lane(x.view_mut(), axis, |mut lane| {
                let mut buf: Vec<f64> = lane.iter().copied().collect();
                if inverse {
                    plan.process_dct3(&mut buf);
                    for (o, v) in lane.iter_mut().zip(&buf) {
                        *o = norm * v;
                    }
                } else {
                    plan.process_dct2(&mut buf);
                    for (o, v) in lane.iter_mut().zip(&buf) {
                        *o = *v;
                    }
                }
            });
        }
    }

    fn solve_spectral(&self, r: ArrayView3<'_, f64>) -> Array3<f64> {
        let mut x = r.to_owned();
        self.transform(&mut x, false);
        par::update(x.view_mut(), self.inv_eigen.view(), |v, w| v * w);
        self.transform(&mut x, true);
        x
    }

    /// `L p` by the stencil.
    pub(crate) fn apply(&self, p: ArrayView3<'_, f64>) -> Array3<f64> {
        let mut out = Array3::zeros(p.raw_dim());
        for axis in 0..3 {
            let len = self.lens[axis];
            if len < 2 {
                continue;
            }
            let s2 = self.scales[axis] * self.scales[axis];
            let lo = p.slice_axis(Axis(axis), (0..len - 1).into());
            let hi = p.slice_axis(Axis(axis), (1..len).into());
            let mut diff = Array3::zeros(lo.raw_dim());
            par::zip2(diff.view_mut(), hi, lo, |a, b| s2 * (a - b));
            par::update(out.slice_axis_mut(Axis(axis), (0..len - 1).into()), diff.view(), |o, d| o - d);
            par::update(out.slice_axis_mut(Axis(axis), (1..len).into()), diff.view(), |o, d| o + d);
        }
        out
    }

    fn diagonal(&self) -> Array3<f64> {
        let l = self.lens;
        Array3::from_shape_fn((l[0], l[1], l[2]), |idx| {
            let idx = [idx.0, idx.1, idx.2];
            (0..3)
                .filter(|&a| l[a] > 1)
                .map(|a| {
                    let deg = if idx[a] == 0 || idx[a] == l[a] - 1 { 1.0 } else { 2.0 };
                    deg * self.scales[a] * self.scales[a]
                })
                .sum()
        })
    }

    fn solve_cg(&self, r: ArrayView3<'_, f64>) -> Result<Array3<f64>> {
        let dot = |a: &Array3<f64>, b: &Array3<f64>| -> f64 { a.iter().zip(b.iter()).map(|(x, y)| x * y).sum() };
        let remove_mean = |a: &mut Array3<f64>| {
            let mean = a.iter().sum::<f64>() / a.len() as f64;
            a.mapv_inplace(|v| v - mean);
        };
        let diag = self.diagonal();
        let mut res = r.to_owned();
        remove_mean(&mut res);
        let r_norm = dot(&res, &res).sqrt();
        let mut x = Array3::zeros(r.raw_dim());
        if r_norm == 0.0 {
            return Ok(x);
        }
        let precondition = |res: &Array3<f64>| {
            let mut z = Array3::zeros(res.raw_dim());
            Zip::from(&mut z)
                .and(res)
                .and(&diag)
                .for_each(|z, &r, &d| *z = if d > 0.0 { r / d } else { 0.0 });
            remove_mean(&mut z);
            z
        };
        let mut z = precondition(&res);
        let mut dir = z.clone();
        let mut rz = dot(&res, &z);
        let max_iter = 20 * res.len() + 100;
        for _ in 0..max_iter {
            let q = self.apply(dir.view());
            let step = rz / dot(&dir, &q);
            x.scaled_add(step, &dir);
            res.scaled_add(-step, &q);
            if dot(&res, &res).sqrt() <= CG_TOL * r_norm {
                remove_mean(&mut x);
                return Ok(x);
            }
            z = precondition(&res);
            let rz_next = dot(&res, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            dir.mapv_inplace(|v| beta * v);
            dir += &z;
        }
        Err(Error::NotConverged {
            estimate: dot(&res, &res).sqrt() / r_norm,
            iterations: max_iter,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_zero_mean(shape: [usize; 3], rng: &mut ChaCha8Rng) -> Array3<f64> {
        let mut r = Array3::from_shape_fn((shape[0], shape[1], shape[2]), |_| rng.random::<f64>() - 0.5);
        let mean = r.mean().unwrap();
        r.mapv_inplace(|v| v - mean);
        r
    }

    #[test]
    fn both_backends_invert_the_stencil() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (lens, scales) in [([5, 1, 4], [4.0, 0.0, 3.0]), ([4, 6, 5], [3.0, 5.0, 4.0])] {
            for backend in [PoissonBackend::Spectral, PoissonBackend::ConjugateGradient] {
                let solver = NeumannPoisson::new(lens, scales, backend);
                let r = random_zero_mean(lens, &mut rng);
                let p = solver.solve(r.view()).unwrap();
                let back = solver.apply(p.view());
                let err = (&back - &r).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(err < 1e-11, "{backend:?}: {err}");
                assert!(p.sum().abs() < 1e-10);
            }
        }
    }

    #[test]
    fn backends_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lens = [6, 5, 7];
        let scales = [5.0, 4.0, 6.0];
        let r = random_zero_mean(lens, &mut rng);
        let a = NeumannPoisson::new(lens, scales, PoissonBackend::Spectral).solve(r.view()).unwrap();
        let b = NeumannPoisson::new(lens, scales, PoissonBackend::ConjugateGradient)
            .solve(r.view())
            .unwrap();
        let err = (&a - &b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn rejects_wrong_shape() {
        let solver = NeumannPoisson::new([3, 1, 3], [2.0, 0.0, 2.0], PoissonBackend::Spectral);
        assert!(solver.solve(Array3::zeros((3, 1, 4)).view()).is_err());
    }
}
