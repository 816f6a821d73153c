//! Independent oracles shared by the integration tests: quadrature for the
//! normal law, grid searches for the small convex programs, KS statistics,
//! and a seeded Gaussian generator.

#![allow(dead_code, clippy::too_many_arguments, clippy::needless_range_loop)]

use ndarray::{Array1, Array2};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------- normal law by quadrature ----------

fn density(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// `∫_a^b f` by adaptive Simpson.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `Φ(x) = ½ + ∫_0^x φ`.
pub fn cdf_quad(x: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let i = integrate(&density, 0.0, x.abs(), 1e-15);
    if x > 0.0 {
        0.5 + i
    } else {
        0.5 - i
    }
}

/// Inverse of [`cdf_quad`] by bisection.
pub fn quantile_quad(q: f64) -> f64 {
    let (mut lo, mut hi) = (-12.0, 12.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf_quad(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `G(α, u)` with every normal quantity from quadrature.
pub fn power_quad(alpha: f64, u: f64) -> f64 {
    let z = quantile_quad(1.0 - alpha / 2.0);
    1.0 - integrate(&density, -z - u, z - u, 1e-15)
}

// ---------- grid oracles ----------

/// Coarse-to-fine grid minimum of `f` over `[lo, hi]^p`: a full grid of step
/// `coarse`, then a step-`fine` grid on the cell around the coarse winner.
pub fn grid_minimize(f: &dyn Fn(&[f64]) -> f64, p: usize, lo: f64, hi: f64, coarse: f64, fine: f64) -> (Vec<f64>, f64) {
    let best = grid_box(f, &vec![lo; p], &vec![hi; p], coarse);
    let lo2: Vec<f64> = best.0.iter().map(|v| (v - 2.0 * coarse).max(lo)).collect();
    let hi2: Vec<f64> = best.0.iter().map(|v| (v + 2.0 * coarse).min(hi)).collect();
    let refined = grid_box(f, &lo2, &hi2, fine);
    if refined.1 <= best.1 {
        refined
    } else {
        best
    }
}

/// Repeated local grids: each level searches `±2·step` around the incumbent
/// with a step fifty times smaller. Resolves optima sitting in thin corners
/// of a feasible set that a single grid only brackets.
pub fn refine(f: &dyn Fn(&[f64]) -> f64, start: (Vec<f64>, f64), mut step: f64, levels: usize) -> (Vec<f64>, f64) {
    let mut best = start;
    for _ in 0..levels {
        let lo: Vec<f64> = best.0.iter().map(|v| v - 2.0 * step).collect();
        let hi: Vec<f64> = best.0.iter().map(|v| v + 2.0 * step).collect();
        step /= 50.0;
        let cand = grid_box(f, &lo, &hi, step);
        if cand.1 <= best.1 {
            best = cand;
        }
    }
    best
}

/// Exhaustive grid over a box.
pub fn grid_box(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], step: f64) -> (Vec<f64>, f64) {
    let p = lo.len();
    let counts: Vec<usize> = (0..p).map(|j| ((hi[j] - lo[j]) / step).round() as usize + 1).collect();
    let total: usize = counts.iter().product();
    let mut best = (vec![0.0; p], f64::INFINITY);
    let mut point = vec![0.0; p];
    for mut k in 0..total {
        for j in 0..p {
            point[j] = lo[j] + (k % counts[j]) as f64 * step;
            k /= counts[j];
        }
        let v = f(&point);
        if v < best.1 {
            best = (point.clone(), v);
        }
    }
    best
}

pub fn lasso_objective(x: &Array2<f64>, y: &Array1<f64>, lambda: f64, theta: &[f64]) -> f64 {
    let n = x.nrows();
    let mut rss = 0.0;
    for i in 0..n {
        let mut r = y[i];
        for (j, t) in theta.iter().enumerate() {
            r -= x[[i, j]] * t;
        }
        rss += r * r;
    }
    rss / (2.0 * n as f64) + lambda * theta.iter().map(|t| t.abs()).sum::<f64>()
}

/// `mᵀΣm` subject to `‖Σm − eᵢ‖∞ ≤ μ` and, optionally, `‖Xm‖∞ ≤ t`, by an
/// exhaustive two-dimensional grid. Infeasible grid points score +∞.
pub fn row_grid_2d(sigma: &Array2<f64>, i: usize, mu: f64, bound: Option<(&Array2<f64>, f64)>, half: f64, step: f64) -> (Vec<f64>, f64) {
    let f = |m: &[f64]| {
        let s0 = sigma[[0, 0]] * m[0] + sigma[[0, 1]] * m[1];
        let s1 = sigma[[1, 0]] * m[0] + sigma[[1, 1]] * m[1];
        let r0 = s0 - if i == 0 { 1.0 } else { 0.0 };
        let r1 = s1 - if i == 1 { 1.0 } else { 0.0 };
        if r0.abs() > mu || r1.abs() > mu {
            return f64::INFINITY;
        }
        if let Some((x, t)) = bound {
            for row in x.rows() {
                if (row[0] * m[0] + row[1] * m[1]).abs() > t {
                    return f64::INFINITY;
                }
            }
        }
        m[0] * s0 + m[1] * s1
    };
    let best = grid_box(&f, &[-half, -half], &[half, half], step);
    refine(&f, best, step, 2)
}

// ---------- Kolmogorov–Smirnov ----------

/// `sup |F_m − F|` for a continuous reference distribution function.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m);
    }
    d
}

/// Asymptotic p-value `P(√m D > x) = 2 Σ (−1)^{k−1} exp(−2k²x²)`.
pub fn ks_pvalue(d: f64, m: usize) -> f64 {
    let x = d * (m as f64).sqrt();
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

// ---------- random instances ----------

pub struct Normal(ChaCha8Rng);

impl Normal {
    pub fn new(seed: u64) -> Self {
        Normal(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn sample(&mut self) -> f64 {
        let u1 = ((self.0.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
        let u2 = (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn matrix(&mut self, n: usize, p: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, p), || self.sample())
    }

    pub fn vector(&mut self, n: usize) -> Array1<f64> {
        Array1::from_shape_simple_fn(n, || self.sample())
    }
}

/// Brute-force `(1/n) Σ_ℓ X_ℓj X_ℓk`.
pub fn covariance_loops(x: &Array2<f64>) -> Array2<f64> {
    let (n, p) = x.dim();
    let mut s = Array2::zeros((p, p));
    for j in 0..p {
        for k in 0..p {
            let mut acc = 0.0;
            for l in 0..n {
                acc += x[[l, j]] * x[[l, k]];
            }
            s[[j, k]] = acc / n as f64;
        }
    }
    s
}

pub mod checks;
