//! Brute-force compatibility constant for tiny problems.
//!
//! `φ²(Σ̂, S) = min |S| θᵀΣ̂θ / ‖θ_S‖₁²` over the cone `‖θ_Sᶜ‖₁ ≤ 3‖θ_S‖₁`.
//! Normalizing `‖θ_S‖₁ = 1` and fixing the signs of `θ_S` turns each piece
//! into a convex QP over (signed simplex) × (ℓ1 ball of radius 3), solved by
//! accelerated projected gradient. Taking the minimum over all sign patterns
//! covers the cone. Because every piece is solved only to tolerance, the
//! result is an upper-bound estimate of the true minimum.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::jacobi_eigen;
use crate::model::SampleCovariance;

const MAX_DIM: usize = 12;
const CONE: f64 = 3.0;

/// Euclidean projection onto `{v ≥ 0, Σ v = r}`.
fn project_simplex(v: &mut [f64], r: f64) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let cand = (cum - r) / (k + 1) as f64;
        if uk - cand > 0.0 {
            tau = cand;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - tau).max(0.0);
    }
}

/// Euclidean projection onto `{‖v‖₁ ≤ r}`.
fn project_l1_ball(v: &mut [f64], r: f64) {
    if v.iter().map(|x| x.abs()).sum::<f64>() <= r {
        return;
    }
    let signs: Vec<f64> = v.iter().map(|x| x.signum()).collect();
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    project_simplex(&mut a, r);
    for ((x, s), m) in v.iter_mut().zip(signs).zip(a) {
        *x = s * m;
    }
}

struct Piece<'a> {
    sigma: &'a Array2<f64>,
    on: &'a [usize],
    off: &'a [usize],
    signs: Vec<f64>,
}

impl Piece<'_> {
    fn project(&self, theta: &mut Array1<f64>) {
        let mut v: Vec<f64> = self.on.iter().zip(&self.signs).map(|(&j, s)| s * theta[j]).collect();
        project_simplex(&mut v, 1.0);
        for ((&j, s), x) in self.on.iter().zip(&self.signs).zip(v) {
            theta[j] = s * x;
        }
        let mut w: Vec<f64> = self.off.iter().map(|&j| theta[j]).collect();
        project_l1_ball(&mut w, CONE);
        for (&j, x) in self.off.iter().zip(w) {
            theta[j] = x;
        }
    }

    fn minimize(&self, lipschitz: f64) -> f64 {
        let p = self.sigma.nrows();
        let mut theta = Array1::<f64>::zeros(p);
        let k = self.on.len() as f64;
        for (&j, s) in self.on.iter().zip(&self.signs) {
            theta[j] = s / k;
        }
        let mut y = theta.clone();
        let mut t = 1.0_f64;
        let mut best = theta.dot(&self.sigma.dot(&theta));
        for _ in 0..20_000 {
            let grad = self.sigma.dot(&y) * 2.0;
            let mut next = &y - &(grad / lipschitz);
            self.project(&mut next);
            let value = next.dot(&self.sigma.dot(&next));
            let moved = (&next - &theta).iter().fold(0.0, |m: f64, v| m.max(v.abs()));
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            if value > best {
                // restart momentum when the objective goes up
                y = theta.clone();
                t = 1.0;
                continue;
            }
            best = value;
            y = &next + &((&next - &theta) * ((t - 1.0) / t_next));
            theta = next;
            t = t_next;
            if moved < 1e-13 {
                break;
            }
        }
        best
    }
}

/// Estimate of `φ²(Σ̂, S)`; `s` holds zero-based coordinates.
pub fn compatibility_constant_bruteforce(sigma: &SampleCovariance, s: &[usize]) -> Result<f64> {
    let p = sigma.dim();
    if p > MAX_DIM {
        return Err(Error::Scale(format!(
            "brute-force compatibility constant needs p ≤ {MAX_DIM}, got {p}"
        )));
    }
    if s.is_empty() {
        return Err(Error::Input("support set must be non-empty".into()));
    }
    let mut on = s.to_vec();
    on.sort_unstable();
    on.dedup();
    if on.len() != s.len() || on.iter().any(|&j| j >= p) {
        return Err(Error::Input("support must hold distinct indices below p".into()));
    }
    let off: Vec<usize> = (0..p).filter(|j| !on.contains(j)).collect();
    let mat = sigma.matrix().to_owned();
    let (eig, _) = jacobi_eigen(mat.view());
    let top = eig.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return Ok(0.0);
    }
    let lipschitz = 2.0 * top;
    let k = on.len();
    let mut best = f64::INFINITY;
    // θ and −θ give the same ratio, so the first sign is fixed
    for pattern in 0..(1usize << (k - 1)) {
        let signs = (0..k)
            .map(|b| if b > 0 && pattern >> (b - 1) & 1 == 1 { -1.0 } else { 1.0 })
            .collect();
        let piece = Piece {
            sigma: &mat,
            on: &on,
            off: &off,
            signs,
        };
        best = best.min(piece.minimize(lipschitz));
    }
    Ok(k as f64 * best)
}
