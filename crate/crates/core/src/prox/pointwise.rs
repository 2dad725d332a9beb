//! Proximal map of the kinetic energy `j_beta(m, f) = |m|^2 / (2 f^beta)` at a
//! single space-time cell, and projection onto the paraboloid
//! `{(a, b) : |a|^2 + 2b <= 0}`.

use crate::error::{Error, Result};

/// Left end of the root bracket.
const EPS_LO: f64 = 1e-300;
const MAX_ITER: usize = 200;

fn check_finite(m: &[f64], f: f64) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) && f.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-finite prox input m = {m:?}, f = {f}")))
    }
}

/// Root polynomial of the prox optimality system and its derivative.
///
/// `P(X) = X^(1-b) (X - ft) (X^b + g)^2 - (g/2) b s`, with `s = |m~|^2`.
#[derive(Debug, Clone, Copy)]
struct RootEquation {
    s: f64,
    ft: f64,
    g: f64,
    beta: f64,
}

impl RootEquation {
    fn eval(&self, x: f64) -> (f64, f64) {
        let RootEquation { s, ft, g, beta } = *self;
        if beta == 1.0 {
            let xg = x + g;
            let p = (x - ft) * xg * xg - 0.5 * g * s;
            let dp = xg * (3.0 * x + g - 2.0 * ft);
            (p, dp)
        } else {
            let xb = x.powf(beta);
            let x1b = x.powf(1.0 - beta);
            let q = xb + g;
            let p = x1b * (x - ft) * q * q - 0.5 * g * beta * s;
            let dp = (1.0 - beta) * (x - ft) * q * q / xb + x1b * q * q + 2.0 * beta * (x - ft) * q;
            (p, dp)
        }
    }

    fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }
}

/// Largest positive root of the prox equation, or `None` when there is none.
fn largest_positive_root(eq: RootEquation) -> Option<f64> {
    if eq.value(EPS_LO) >= 0.0 {
        return None;
    }
    let mut lo = EPS_LO;
    let mut hi = eq.ft.max(0.0) + eq.g + eq.s.sqrt();
    let mut p_hi = eq.value(hi);
    while p_hi < 0.0 {
        lo = hi;
        hi *= 2.0;
        p_hi = eq.value(hi);
    }
    if p_hi == 0.0 {
        return Some(hi);
    }
    let mut x = hi;
    for _ in 0..MAX_ITER {
        let (p, dp) = eq.eval(x);
        if p == 0.0 {
            return Some(x);
        }
        if p > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - p / dp;
        let next = if dp > 0.0 && newton > lo && newton < hi {
            newton
        } else if hi > 4.0 * lo {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * next || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Some(next);
        }
        x = next;
    }
    Some(x)
}

/// Solves the scalar prox problem for `s = |m~|^2`, returning `(factor, f*)`
/// such that the prox is `(factor * m~, f*)`.
///
/// `g` is the effective step (step times weight); `g = inf` forbids mass.
pub(crate) fn prox_scalar(s: f64, ft: f64, g: f64, beta: f64) -> (f64, f64) {
    if g.is_infinite() {
        return (0.0, 0.0);
    }
    if beta == 0.0 {
        // j_0 = |m|^2 / 2 on f >= 0: the density is clipped, the momentum shrunk.
        return (1.0 / (1.0 + g), ft.max(0.0));
    }
    let eq = RootEquation { s, ft, g, beta };
    match largest_positive_root(eq) {
        Some(f) => {
            let fb = if beta == 1.0 { f } else { f.powf(beta) };
            (fb / (fb + g), f)
        }
        None => (0.0, 0.0),
    }
}

/// Prox of `gamma * j` for the quadratic-over-linear kinetic energy.
///
/// Returns `(mu(f*), f*)` where `f*` is the largest real root of
/// `(X - f~)(X + gamma)^2 - gamma |m~|^2 / 2` when it is positive, and `(0, 0)`
/// otherwise.
pub fn prox_j<const D: usize>(m: [f64; D], f: f64, gamma: f64) -> Result<([f64; D], f64)> {
    prox_j_beta(m, f, gamma, 1.0, 1.0)
}

/// Prox of `gamma * weight * j_beta`.
///
/// `beta = 1` is [`prox_j`]. An infinite weight maps every input to `(0, 0)`.
/// For `beta = 0` the energy is the closed function `|m|^2 / 2` on `f >= 0`,
/// whose prox clips the density at zero.
pub fn prox_j_beta<const D: usize>(
    m: [f64; D],
    f: f64,
    gamma: f64,
    beta: f64,
    weight: f64,
) -> Result<([f64; D], f64)> {
    check_finite(&m, f)?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta must lie in [0, 1], got {beta}")));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("prox step must be positive and finite, got {gamma}")));
    }
    if !(weight > 0.0) {
        return Err(Error::Domain(format!("weight must be positive, got {weight}")));
    }
    let s = m.iter().map(|v| v * v).sum();
    let (factor, fs) = prox_scalar(s, f, gamma * weight, beta);
    Ok((m.map(|v| factor * v), fs))
}

/// Residual of the prox root equation at `x`, exposed for verification.
pub fn prox_root_residual(m_norm2: f64, f: f64, gamma: f64, beta: f64, x: f64) -> f64 {
    RootEquation {
        s: m_norm2,
        ft: f,
        g: gamma,
        beta,
    }
    .value(x)
}

/// Orthogonal projection onto `{(a, b) : |a|^2 + 2b <= 0}`.
///
/// Solved directly from the KKT system: `a' = a / (1 + 2l)`, `b' = b - 2l`
/// with `l >= 0` the root of `|a|^2 / (1 + 2l)^2 + 2b - 4l`, which is convex and
/// decreasing so Newton from `l = 0` increases monotonically to it.
pub fn project_paraboloid<const D: usize>(a: [f64; D], b: f64) -> ([f64; D], f64) {
    let (scale, shift) = paraboloid_scalar(a.iter().map(|v| v * v).sum(), b);
    (a.map(|v| scale * v), b - shift)
}

/// Returns `(1 / (1 + 2l), 2l)` for the projection of `(a, b)` with `|a|^2 = s`.
pub(crate) fn paraboloid_scalar(s: f64, b: f64) -> (f64, f64) {
    if s + 2.0 * b <= 0.0 {
        return (1.0, 0.0);
    }
    let g = |l: f64| {
        let q = 1.0 + 2.0 * l;
        (s / (q * q) + 2.0 * b - 4.0 * l, -4.0 * s / (q * q * q) - 4.0)
    };
    let mut lo = 0.0f64;
    let mut hi = 0.25 * (s + 2.0 * b);
    let mut l = 0.0;
    for _ in 0..MAX_ITER {
        let (v, dv) = g(l);
        if v == 0.0 {
            break;
        }
        if v > 0.0 {
            lo = l;
        } else {
            hi = l;
        }
        let mut next = l - v / dv;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - l).abs() <= 4.0 * f64::EPSILON * next.max(f64::MIN_POSITIVE) {
            l = next;
            break;
        }
        l = next;
    }
    (1.0 / (1.0 + 2.0 * l), 2.0 * l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn phi(m: &[f64], f: f64, mt: &[f64], ft: f64, gamma: f64, beta: f64) -> f64 {
        let dist: f64 = m.iter().zip(mt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + (f - ft) * (f - ft);
        let s: f64 = m.iter().map(|v| v * v).sum();
        let j = if f > 0.0 {
            s / (2.0 * f.powf(beta))
        } else if s == 0.0 && f == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        0.5 * dist + gamma * j
    }

    /// Bisection for the largest root on [lo, hi], independent of the Newton path.
    fn bisect(lo: f64, hi: f64, p: impl Fn(f64) -> f64) -> f64 {
        let (mut a, mut b) = (lo, hi);
        assert!(p(a) < 0.0 && p(b) > 0.0);
        while b - a > 1e-14 {
            let c = 0.5 * (a + b);
            if p(c) < 0.0 {
                a = c
            } else {
                b = c
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn zero_momentum_positive_density_is_fixed() {
        let (m, f) = prox_j([0.0], 2.0, 0.7).unwrap();
        assert_eq!(m, [0.0]);
        assert!((f - 2.0).abs() < 1e-14);
    }

    #[test]
    fn negative_density_without_momentum_vanishes() {
        assert_eq!(prox_j([0.0], -1.0, 1.0).unwrap(), ([0.0], 0.0));
    }

    #[test]
    fn unit_input_matches_bisection() {
        let p = |x: f64| (x - 1.0) * (x + 1.0) * (x + 1.0) - 0.5;
        let root = bisect(1.0, 2.0, p);
        assert!((root - 1.112085).abs() < 1e-6);
        let (m, f) = prox_j([1.0], 1.0, 1.0).unwrap();
        assert!((f - root).abs() < 1e-12, "{f} vs {root}");
        assert!((m[0] - root / (root + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn cubic_residual_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let m = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let ft = rng.random_range(-3.0..3.0);
            let g = rng.random_range(0.01..3.0);
            let (_, f) = prox_j(m, ft, g).unwrap();
            if f > 0.0 {
                let s = m[0] * m[0] + m[1] * m[1];
                let r = prox_root_residual(s, ft, g, 1.0, f);
                assert!(r.abs() <= 1e-12 * (1.0 + ft.abs().powi(3) + s), "residual {r}");
            }
        }
    }

    #[test]
    fn infinite_weight_forbids_mass() {
        assert_eq!(prox_j_beta([1.5, -2.0], 3.0, 1.0, 0.5, f64::INFINITY).unwrap(), ([0.0, 0.0], 0.0));
    }

    #[test]
    fn beta_zero_keeps_density_halves_momentum() {
        let (m, f) = prox_j_beta([0.8, -0.4], 3.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(f, 3.0);
        assert_eq!(m, [0.4, -0.2]);
    }

    #[test]
    fn beta_one_agrees_with_cubic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let m = [rng.random_range(-2.0..2.0)];
            let ft = rng.random_range(-2.0..2.0);
            let g = rng.random_range(0.01..2.0);
            let a = prox_j(m, ft, g).unwrap();
            let b = prox_j_beta(m, ft, g, 1.0, 1.0).unwrap();
            assert!((a.1 - b.1).abs() <= 1e-10 && (a.0[0] - b.0[0]).abs() <= 1e-10);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(prox_j_beta([0.0], 1.0, 1.0, 1.5, 1.0), Err(Error::Domain(_))));
        assert!(matches!(prox_j_beta([0.0], 1.0, 1.0, -0.1, 1.0), Err(Error::Domain(_))));
        assert!(matches!(prox_j([f64::NAN], 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(prox_j([0.0], f64::INFINITY, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn prox_minimizes_its_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &beta in &[1.0, 0.75, 0.5, 0.25] {
            for _ in 0..200 {
                let mt = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let ft = rng.random_range(-2.0..2.0);
                let g = rng.random_range(0.05..2.0);
                let (m, f) = prox_j_beta(mt, ft, g, beta, 1.0).unwrap();
                let best = phi(&m, f, &mt, ft, g, beta);
                for _ in 0..50 {
                    let cm = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                    let cf = rng.random_range(1e-6..3.0);
                    assert!(best <= phi(&cm, cf, &mt, ft, g, beta) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn positive_root_is_unique_to_the_right() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for &beta in &[1.0, 0.5, 0.25] {
            for _ in 0..300 {
                let s = rng.random_range(0.0..4.0);
                let ft = rng.random_range(-2.0..2.0);
                let g = rng.random_range(0.05..2.0);
                let (_, f) = prox_scalar(s, ft, g, beta);
                if f > 0.0 {
                    for k in 1..=1000 {
                        let x = f + k as f64;
                        assert!(prox_root_residual(s, ft, g, beta, x) > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn paraboloid_projection_basics() {
        assert_eq!(project_paraboloid([0.5], -1.0), ([0.5], -1.0));
        let (a, b) = project_paraboloid([0.0], 1.0);
        assert_eq!(a, [0.0]);
        assert!(b.abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let a = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let b = rng.random_range(-5.0..5.0);
            let (pa, pb) = project_paraboloid(a, b);
            assert!(pa[0] * pa[0] + pa[1] * pa[1] + 2.0 * pb <= 1e-10);
        }
    }

    #[test]
    fn moreau_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &g in &[0.1, 1.0, 10.0] {
            for _ in 0..100 {
                let v = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                let vf = rng.random_range(-3.0..3.0);
                let (pm, pf) = prox_j(v, vf, g).unwrap();
                let (qa, qb) = project_paraboloid(v.map(|x| x / g), vf / g);
                let r = ((pm[0] + g * qa[0] - v[0]).powi(2)
                    + (pm[1] + g * qa[1] - v[1]).powi(2)
                    + (pf + g * qb - vf).powi(2))
                .sqrt();
                assert!(r <= 1e-10, "residual {r}");
            }
        }
    }
}
