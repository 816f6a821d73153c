//! Cyclic coordinate descent for the shifted ℓ1-penalized quadratic
//!
//! ```text
//! minimize  ½ xᵀ G x − bᵀ x + penalty · ‖x − d‖₁
//! ```
//!
//! with `G` symmetric positive semidefinite. The LASSO is the case
//! `G = Σ̂, b = Xᵀy/n, d = 0`; a decorrelation row is `G = Σ̂, b = eᵢ`.
//! Stationarity reads `b − G x ∈ penalty · ∂‖x − d‖₁`, so at any stationary
//! point `‖G x − b‖∞ ≤ penalty`.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve};

/// Largest active set we hand to the dense polishing solve.
const MAX_POLISH: usize = 1500;
/// Iterates beyond this magnitude are treated as divergence.
const DIVERGENCE: f64 = 1e12;
/// Full sweeps between exact gradient recomputations.
const REFRESH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Converged,
    MaxIter,
    /// The objective is unbounded below along some coordinate.
    Unbounded,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Array1<f64>,
    /// `b − G x`, recomputed from scratch on exit.
    pub grad: Array1<f64>,
    pub sweeps: usize,
    pub status: Status,
    /// Objective after every sweep (full or active-set).
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Problem<'a> {
    pub gram: ArrayView2<'a, f64>,
    pub linear: ArrayView1<'a, f64>,
    pub shift: Option<ArrayView1<'a, f64>>,
    pub penalty: f64,
}

impl<'a> Problem<'a> {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn shift_at(&self, j: usize) -> f64 {
        self.shift.map_or(0.0, |d| d[j])
    }

    pub fn gradient(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        &self.linear - &self.gram.dot(&x)
    }

    pub fn objective(&self, x: ArrayView1<'_, f64>) -> f64 {
        let gx = self.gram.dot(&x);
        0.5 * x.dot(&gx) - self.linear.dot(&x) + self.penalty * self.l1_distance(x)
    }

    fn l1_distance(&self, x: ArrayView1<'_, f64>) -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, v)| (v - self.shift_at(j)).abs())
            .sum()
    }

    /// Objective from a cached gradient: `xᵀGx = xᵀ(b − g)`.
    fn objective_from_grad(&self, x: &Array1<f64>, grad: &Array1<f64>) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for j in 0..x.len() {
            quad += x[j] * (self.linear[j] - grad[j]);
            lin += self.linear[j] * x[j];
        }
        0.5 * quad - lin + self.penalty * self.l1_distance(x.view())
    }

    /// Largest violation of the stationarity conditions.
    pub fn kkt_residual(&self, x: ArrayView1<'_, f64>, grad: ArrayView1<'_, f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..x.len() {
            let off = x[j] - self.shift_at(j);
            let v = if off != 0.0 {
                (grad[j] - self.penalty * off.signum()).abs()
            } else {
                (grad[j].abs() - self.penalty).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Runs coordinate descent from `start` until a full sweep moves no
    /// coordinate by more than `tol` and the KKT residual is below `tol`.
    pub fn minimize(&self, start: Array1<f64>, tol: f64, max_sweeps: usize) -> Result<Outcome> {
        let p = self.dim();
        if start.len() != p || self.gram.dim() != (p, p) {
            return Err(Error::Input("coordinate descent: dimension mismatch".into()));
        }
        for j in 0..p {
            let a = self.gram[[j, j]];
            if a < 0.0 || !a.is_finite() {
                return Err(Error::Numeric(format!(
                    "negative curvature {a:e} along coordinate {j}; matrix is not positive semidefinite"
                )));
            }
        }
        let mut x = start;
        let mut grad = self.gradient(x.view());
        let mut trace = Vec::new();
        let mut sweeps = 0usize;
        let mut active: Vec<usize> = Vec::with_capacity(p);

        let status = 'outer: loop {
            if sweeps >= max_sweeps {
                break Status::MaxIter;
            }
            // full sweep
            let delta = match self.sweep(0..p, &mut x, &mut grad) {
                Some(d) => d,
                None => break Status::Unbounded,
            };
            sweeps += 1;
            // refresh to keep incremental drift out of the convergence test
            if delta <= tol || sweeps.is_multiple_of(REFRESH) {
                grad = self.gradient(x.view());
            }
            trace.push(self.objective_from_grad(&x, &grad));
            if delta <= tol && self.kkt_residual(x.view(), grad.view()) <= tol {
                break Status::Converged;
            }

            active.clear();
            active.extend((0..p).filter(|&j| x[j] != self.shift_at(j)));
            if active.len() == p {
                continue;
            }
            loop {
                if sweeps >= max_sweeps {
                    break 'outer Status::MaxIter;
                }
                let delta = match self.sweep(active.iter().copied(), &mut x, &mut grad) {
                    Some(d) => d,
                    None => break 'outer Status::Unbounded,
                };
                sweeps += 1;
                trace.push(self.objective_from_grad(&x, &grad));
                if delta <= tol {
                    break;
                }
            }
        };

        let grad = self.gradient(x.view());
        Ok(Outcome {
            x,
            grad,
            sweeps,
            status,
            objective_trace: trace,
        })
    }

    /// One pass over `coords`. Returns the largest coordinate move, or `None`
    /// if the objective is unbounded below.
    fn sweep(
        &self,
        coords: impl Iterator<Item = usize>,
        x: &mut Array1<f64>,
        grad: &mut Array1<f64>,
    ) -> Option<f64> {
        let mut max_delta: f64 = 0.0;
        for j in coords {
            let a = self.gram[[j, j]];
            let d = self.shift_at(j);
            let new = if a > 0.0 {
                let z = grad[j] + a * x[j];
                d + soft(z - a * d, self.penalty) / a
            } else {
                // flat direction: bounded only if the linear slope is dominated
                if grad[j].abs() > self.penalty * (1.0 + 1e-12) + 1e-300 {
                    return None;
                }
                d
            };
            let delta = new - x[j];
            if delta != 0.0 {
                let col = self.gram.row(j);
                grad.scaled_add(-delta, &col);
                x[j] = new;
                max_delta = max_delta.max(delta.abs());
                if !new.is_finite() || new.abs() > DIVERGENCE {
                    return None;
                }
            }
        }
        Some(max_delta)
    }

    /// Re-solves the stationarity equations exactly on the current support.
    ///
    /// With support `A` and signs `s`, the optimum satisfies
    /// `G_AA (x − d)_A = b_A − (G d)_A − penalty · s_A`. The candidate is
    /// accepted only if it keeps the signs and the off-support conditions;
    /// otherwise `None`.
    pub fn polish(&self, x: ArrayView1<'_, f64>) -> Option<(Array1<f64>, Array1<f64>)> {
        let p = self.dim();
        let support: Vec<usize> = (0..p).filter(|&j| x[j] != self.shift_at(j)).collect();
        let k = support.len();
        if k == 0 || k > MAX_POLISH {
            return None;
        }
        let signs: Vec<f64> = support
            .iter()
            .map(|&j| (x[j] - self.shift_at(j)).signum())
            .collect();
        let base = match self.shift {
            Some(d) => d.to_owned(),
            None => Array1::zeros(p),
        };
        let g_base = self.gram.dot(&base);
        let sub = ndarray::Array2::from_shape_fn((k, k), |(a, b)| self.gram[[support[a], support[b]]]);
        let rhs = Array1::from_iter(
            support
                .iter()
                .zip(&signs)
                .map(|(&j, s)| self.linear[j] - g_base[j] - self.penalty * s),
        );
        let l = cholesky(sub.view())?;
        let y = cholesky_solve(&l, rhs.view());
        if y.iter().zip(&signs).any(|(v, s)| v.signum() != *s || *v == 0.0) {
            return None;
        }
        let mut out = base;
        for (&j, v) in support.iter().zip(y.iter()) {
            out[j] += v;
        }
        let grad = self.gradient(out.view());
        let slack = self.penalty * (1.0 + 1e-12) + 1e-14;
        let off_ok = (0..p)
            .filter(|j| !support.contains(j))
            .all(|j| grad[j].abs() <= slack);
        if !off_ok {
            return None;
        }
        Some((out, grad))
    }
}

#[inline]
pub(crate) fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}
