//! Prox of the weighted kinetic energy by one-dimensional search.

/// Points on the logarithmic scan that brackets the minimizer.
const SCAN_POINTS: usize = 400;
const GOLDEN_TOL: f64 = 1e-12;

/// `1/2 |m - mt|^2 + 1/2 (f - ft)^2 + gamma w |m|^2 / (2 f^beta)`, with the
/// energy read as `+inf` for `f < 0`, `0` at `(0, 0)` and `|m|^2 / 2` at
/// `f = 0` when `beta = 0`.
pub fn prox_objective(mt: &[f64], ft: f64, gamma: f64, beta: f64, weight: f64, m: &[f64], f: f64) -> f64 {
    let dist: f64 = mt.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + (f - ft) * (f - ft);
    let mm: f64 = m.iter().map(|v| v * v).sum();
    let energy = if f > 0.0 {
        mm / (2.0 * f.powf(beta))
    } else if f == 0.0 && (mm == 0.0 || beta == 0.0) {
        mm / 2.0
    } else {
        f64::INFINITY
    };
    0.5 * dist + gamma * weight * energy
}

/// Best momentum for a fixed density `f > 0`.
fn inner(mt: &[f64], f: f64, gamma: f64, beta: f64, weight: f64) -> Vec<f64> {
    let fb = f.powf(beta);
    mt.iter().map(|v| fb * v / (fb + gamma * weight)).collect()
}

/// Minimizes `prox_objective` over `(m, f)`: a log-spaced scan over
/// `f` in `[1e-12, max(ft, 0) + gamma w + |mt| + 1]`, golden-section refinement
/// around the best scan point, then a comparison with `(0, 0)`.
pub fn oracle_prox(mt: &[f64], ft: f64, gamma: f64, beta: f64, weight: f64) -> (Vec<f64>, f64) {
    let norm = mt.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lo = 1e-12f64;
    let hi = ft.max(0.0) + gamma * weight + norm + 1.0;
    let phi = |f: f64| {
        let m = inner(mt, f, gamma, beta, weight);
        prox_objective(mt, ft, gamma, beta, weight, &m, f)
    };
    let ratio = (hi / lo).ln() / (SCAN_POINTS - 1) as f64;
    let at = |k: usize| lo * (ratio * k as f64).exp();
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for k in 0..SCAN_POINTS {
        let v = phi(at(k));
        if v < best_val {
            best_val = v;
            best = k;
        }
    }
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(SCAN_POINTS - 1)));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    while b - a > GOLDEN_TOL * b.max(1e-300) && b - a > 1e-300 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = phi(d);
        }
        if c >= d {
            break;
        }
    }
    let f = 0.5 * (a + b);
    let m = inner(mt, f, gamma, beta, weight);
    let zero = vec![0.0; mt.len()];
    if prox_objective(mt, ft, gamma, beta, weight, &zero, 0.0) < prox_objective(mt, ft, gamma, beta, weight, &m, f) {
        (zero, 0.0)
    } else {
        (m, f)
    }
}
