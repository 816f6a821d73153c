//! Rows with the extra constraint `‖X m‖∞ ≤ t`, `t = n^β`.
//!
//! Solved by ADMM on the splitting `z = X m`, with the coupling term scaled
//! by `1/n` so that `ρ` is dimensionless:
//!
//! ```text
//! m ← argmin  κ mᵀΣ̂m − qᵀm   over the Σ̂-box,   κ = 1 + ρ/2,  q = (ρ/n) Xᵀ(z − u)
//! z ← clip(X m + u, t)
//! u ← u + X m − z
//! ```
//!
//! Writing `Σ̂ d = q / 2κ`, the m-step is `min ½(m − d)ᵀΣ̂(m − d)` over the box,
//! which is the shifted penalized problem `½ mᵀΣ̂m − mᵢ + μ‖m − d‖₁`.
//!
//! `ρ` starts at 1 and is rebalanced whenever one residual dominates the
//! other by more than a factor of ten.

use ndarray::{Array1, ArrayView2};

use super::{check_beta, check_row_args, solve_row, solve_shifted, unit, RowSolution, FEASIBILITY_SLACK};
use crate::cd::{Problem, Status};
use crate::error::{Error, Result};
use crate::model::SampleCovariance;

const RHO: f64 = 1.0;
const BALANCE: f64 = 10.0;
const MAX_OUTER: usize = 500;
/// The clip target sits slightly inside `t` so the exit certificate has room.
const SHRINK: f64 = 1e-7;

fn sup(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// Row `i` of the decorrelation program with `‖X m‖∞ ≤ n^β` added.
///
/// Starts from the unbounded row; if that already satisfies the bound it is
/// returned as is. Both constraints are certified on exit.
pub fn solve_row_bounded(
    sigma: &SampleCovariance,
    x: ArrayView2<'_, f64>,
    i: usize,
    mu: f64,
    beta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RowSolution> {
    check_row_args(sigma, i, mu)?;
    check_beta(beta)?;
    let (n, p) = x.dim();
    if p != sigma.dim() {
        return Err(Error::Input(format!("design has {p} columns, covariance has {}", sigma.dim())));
    }
    let nf = n as f64;
    let t = nf.powf(beta);

    let mut sol = solve_row(sigma, i, mu, tol, max_iter)?;
    let xm = x.dot(&sol.m);
    sol.row_sup = Some(sup(&xm));
    if !sol.feasible || sup(&xm) <= t {
        return Ok(sol);
    }

    let target = t * (1.0 - SHRINK);
    let e = unit(p, i);
    let mut m = sol.m.clone();
    let mut xm = xm;
    let mut z = xm.mapv(|v| v.clamp(-target, target));
    let mut u = &xm - &z;
    let mut d = Array1::zeros(p);
    let mut sweeps = sol.iterations;
    let eps = 1e-10 * t.max(1.0);
    let mut rho = RHO;

    for _ in 0..MAX_OUTER {
        let w = &z - &u;
        let kappa = 1.0 + 0.5 * rho;
        let q = x.t().dot(&w) * (rho / nf / (2.0 * kappa));
        // Σ̂ d = q by unpenalized coordinate descent, warm-started
        let shift_prob = Problem {
            gram: sigma.matrix(),
            linear: q.view(),
            shift: None,
            penalty: 0.0,
        };
        let ds = shift_prob.minimize(d, 1e-13, max_iter)?;
        if ds.status == Status::Unbounded {
            return Err(Error::Numeric("shift system diverged in bounded row solve".into()));
        }
        d = ds.x;
        let step = solve_shifted(sigma, i, &e, Some(&d), mu, m.clone(), tol, max_iter)?;
        sweeps += step.iterations;
        if !step.feasible {
            break;
        }
        m = step.m;
        xm = x.dot(&m);
        let z_old = z.clone();
        z = (&xm + &u).mapv(|v| v.clamp(-target, target));
        u = u + &xm - &z;
        let primal = sup(&(&xm - &z));
        let dual = rho * sup(&(&z - &z_old));
        if primal <= eps && dual <= eps {
            break;
        }
        // u is scaled by 1/ρ, so it rescales inversely
        if primal > BALANCE * dual {
            rho *= 2.0;
            u /= 2.0;
        } else if dual > BALANCE * primal {
            rho /= 2.0;
            u *= 2.0;
        }
    }

    let mut out = RowSolution::certify(sigma, i, m, mu);
    let s = sup(&xm);
    out.row_sup = Some(s);
    out.feasible = out.feasible && s <= t * (1.0 + FEASIBILITY_SLACK);
    out.iterations = sweeps;
    let prob = Problem {
        gram: sigma.matrix(),
        linear: e.view(),
        shift: Some(d.view()),
        penalty: mu,
    };
    out.kkt_residual = prob.kkt_residual(out.m.view(), prob.gradient(out.m.view()).view());
    Ok(out)
}
