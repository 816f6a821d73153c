//! The decorrelating matrix `M`.
//!
//! Row `i` solves
//!
//! ```text
//! minimize  mᵀ Σ̂ m   subject to  ‖Σ̂ m − eᵢ‖∞ ≤ μ
//! ```
//!
//! through the penalized problem `½ mᵀΣ̂m − mᵢ + μ‖m‖₁`. Its stationarity
//! condition is `eᵢ − Σ̂m = μ s` with `s ∈ ∂‖m‖₁`, so a stationary point sits
//! inside the box, and it attains the constrained minimum because
//! `mᵀΣ̂m = mᵢ − μ‖m‖₁` there. Feasibility is always re-certified from the
//! returned vector, never taken from the solver.

mod bounded;
mod compat;

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;

use crate::cd::{Problem, Status};
use crate::error::{Error, Result};
use crate::model::{ProblemScale, SampleCovariance};

pub use bounded::solve_row_bounded;
pub use compat::compatibility_constant_bruteforce;

/// Relative slack on the box constraint when certifying a row.
pub const FEASIBILITY_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecorrelationOptions {
    pub mu: f64,
    /// Factor applied to `μ` after an infeasible attempt.
    pub mu_growth: f64,
    pub max_mu_inflations: usize,
    /// Adds the constraint `‖X m‖∞ ≤ n^β` when set.
    pub row_bound_beta: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl DecorrelationOptions {
    pub fn with_mu(mu: f64) -> Self {
        DecorrelationOptions {
            mu,
            mu_growth: 1.5,
            max_mu_inflations: 10,
            row_bound_beta: None,
            tol: 1e-10,
            max_iter: 10_000,
        }
    }

    /// `μ = 2 sqrt(log p / n)`.
    pub fn for_scale(scale: ProblemScale) -> Self {
        Self::with_mu(scale.default_mu())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::Input(format!("mu must be a finite nonnegative number, got {}", self.mu)));
        }
        if !(self.mu_growth > 1.0) || !self.mu_growth.is_finite() {
            return Err(Error::Input(format!("mu_growth must exceed 1, got {}", self.mu_growth)));
        }
        if let Some(beta) = self.row_bound_beta {
            check_beta(beta)?;
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Input("decorrelation needs tol > 0 and max_iter ≥ 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::Domain(format!("row bound exponent must lie in (0, 1/2), got {beta}")));
    }
    Ok(())
}

/// One row of `M` with its certificates.
#[derive(Debug, Clone, Serialize)]
pub struct RowSolution {
    pub m: Array1<f64>,
    pub feasible: bool,
    /// Stationarity violation of the penalized problem.
    pub kkt_residual: f64,
    /// `‖Σ̂m − eᵢ‖∞`, recomputed from `m`.
    pub box_violation: f64,
    /// `mᵀ Σ̂ m`.
    pub variance: f64,
    /// `‖X m‖∞`, when a design was involved.
    pub row_sup: Option<f64>,
    pub iterations: usize,
    #[serde(skip)]
    pub(crate) sigma_m: Array1<f64>,
}

impl RowSolution {
    fn certify(sigma: &SampleCovariance, i: usize, m: Array1<f64>, mu: f64) -> RowSolution {
        let sigma_m = sigma.matrix().dot(&m);
        let box_violation = sigma_m
            .iter()
            .enumerate()
            .map(|(j, v)| (v - if j == i { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        let variance = m.dot(&sigma_m);
        RowSolution {
            feasible: box_violation <= mu * (1.0 + FEASIBILITY_SLACK) && m.iter().all(|v| v.is_finite()),
            kkt_residual: f64::NAN,
            box_violation,
            variance,
            row_sup: None,
            iterations: 0,
            sigma_m,
            m,
        }
    }

    fn infeasible(p: usize, iterations: usize) -> RowSolution {
        RowSolution {
            m: Array1::zeros(p),
            feasible: false,
            kkt_residual: f64::INFINITY,
            box_violation: f64::INFINITY,
            variance: 0.0,
            row_sup: None,
            iterations,
            sigma_m: Array1::zeros(p),
        }
    }
}

fn unit(p: usize, i: usize) -> Array1<f64> {
    let mut e = Array1::zeros(p);
    e[i] = 1.0;
    e
}

fn check_row_args(sigma: &SampleCovariance, i: usize, mu: f64) -> Result<()> {
    if i >= sigma.dim() {
        return Err(Error::Input(format!("row index {i} out of range for p = {}", sigma.dim())));
    }
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Input(format!("mu must be a finite nonnegative number, got {mu}")));
    }
    Ok(())
}

/// Solves row `i` of the decorrelation program and certifies the box.
pub fn solve_row(sigma: &SampleCovariance, i: usize, mu: f64, tol: f64, max_iter: usize) -> Result<RowSolution> {
    check_row_args(sigma, i, mu)?;
    let e = unit(sigma.dim(), i);
    solve_shifted(sigma, i, &e, None, mu, Array1::zeros(sigma.dim()), tol, max_iter)
}

/// `½ mᵀΣ̂m − mᵢ + μ‖m − d‖₁` from `start`, then polish and certify.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_shifted(
    sigma: &SampleCovariance,
    i: usize,
    e: &Array1<f64>,
    shift: Option<&Array1<f64>>,
    mu: f64,
    start: Array1<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<RowSolution> {
    let prob = Problem {
        gram: sigma.matrix(),
        linear: e.view(),
        shift: shift.map(|d| d.view()),
        penalty: mu,
    };
    let out = prob.minimize(start, tol, max_iter)?;
    if out.status == Status::Unbounded {
        return Ok(RowSolution::infeasible(sigma.dim(), out.sweeps));
    }
    let (mut m, mut kkt) = {
        let k = prob.kkt_residual(out.x.view(), out.grad.view());
        (out.x, k)
    };
    if let Some((pm, pg)) = prob.polish(m.view()) {
        let k = prob.kkt_residual(pm.view(), pg.view());
        if k <= kkt {
            m = pm;
            kkt = k;
        }
    }
    let mut sol = RowSolution::certify(sigma, i, m, mu);
    sol.kkt_residual = kkt;
    sol.iterations = out.sweeps;
    Ok(sol)
}

/// The assembled matrix `M` with per-row diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct Decorrelator {
    /// Row `i` is `mᵢᵀ`.
    #[serde(skip)]
    pub m: Array2<f64>,
    /// Largest `μ` actually used by any row.
    pub mu: f64,
    pub row_mu: Vec<f64>,
    pub row_feasible: Vec<bool>,
    pub fallback_identity: bool,
    /// `mᵢᵀ Σ̂ mᵢ`.
    pub row_variance: Vec<f64>,
    /// `|M Σ̂ − I|∞`.
    pub coherence: f64,
    pub row_bound_beta: Option<f64>,
    /// Row `i` is `(Σ̂ mᵢ)ᵀ`, i.e. `M Σ̂`.
    #[serde(skip)]
    pub(crate) m_sigma: Array2<f64>,
}

impl Decorrelator {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// `M Σ̂`, row by row.
    pub fn m_sigma(&self) -> ArrayView2<'_, f64> {
        self.m_sigma.view()
    }

    /// `[M Σ̂ Mᵀ]_{rs}` for the listed rows.
    pub fn variance_block(&self, rows: &[usize]) -> Array2<f64> {
        let k = rows.len();
        let mut out = Array2::zeros((k, k));
        for a in 0..k {
            for b in a..k {
                let v = self.m.row(rows[a]).dot(&self.m_sigma.row(rows[b]));
                out[[a, b]] = v;
                out[[b, a]] = v;
            }
        }
        // symmetrize the two evaluations of each entry
        for a in 0..k {
            for b in a + 1..k {
                let w = self.m.row(rows[b]).dot(&self.m_sigma.row(rows[a]));
                let avg = 0.5 * (out[[a, b]] + w);
                out[[a, b]] = avg;
                out[[b, a]] = avg;
            }
        }
        out
    }

    /// Rows that were certified feasible with their realized `μ`.
    pub fn rows_certified(&self) -> usize {
        self.row_feasible.iter().filter(|&&f| f).count()
    }

    fn identity(sigma: &SampleCovariance, row_mu: Vec<f64>, row_feasible: Vec<bool>, beta: Option<f64>) -> Self {
        let p = sigma.dim();
        let m_sigma = sigma.matrix().to_owned();
        let coherence = coherence_of(m_sigma.view());
        let mu = row_mu.iter().copied().fold(0.0, f64::max);
        Decorrelator {
            m: Array2::eye(p),
            mu,
            row_mu,
            row_feasible,
            fallback_identity: true,
            row_variance: sigma.diag().to_vec(),
            coherence,
            row_bound_beta: beta,
            m_sigma,
        }
    }
}

fn coherence_of(m_sigma: ArrayView2<'_, f64>) -> f64 {
    m_sigma
        .indexed_iter()
        .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

/// `|M Σ̂ − I|∞`.
pub fn generalized_coherence(sigma: &SampleCovariance, m: ArrayView2<'_, f64>) -> Result<f64> {
    let p = sigma.dim();
    if m.dim() != (p, p) {
        return Err(Error::Input(format!(
            "M is {}x{} but covariance is {p}x{p}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(coherence_of(m.dot(&sigma.matrix()).view()))
}

/// Solves every row, widening `μ` on rows that turn out infeasible.
///
/// The ladder never steps to `μ ≥ 1`, where the zero row is trivially
/// feasible. When some row stays infeasible the whole matrix falls back to
/// `M = I`. `x` is required only for the bounded-row variant.
pub fn build_decorrelator(
    sigma: &SampleCovariance,
    x: Option<ArrayView2<'_, f64>>,
    opts: &DecorrelationOptions,
) -> Result<Decorrelator> {
    opts.validate()?;
    let p = sigma.dim();
    let bounded = match (opts.row_bound_beta, x) {
        (Some(beta), Some(x)) => {
            if x.ncols() != p {
                return Err(Error::Input(format!("design has {} columns, expected {p}", x.ncols())));
            }
            Some((beta, x))
        }
        (Some(_), None) => return Err(Error::Input("row bound requested without a design".into())),
        (None, _) => None,
    };

    let rows: Vec<Result<(RowSolution, f64)>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let mut mu = opts.mu;
            let mut attempt = 0;
            loop {
                let sol = match bounded {
                    Some((beta, x)) => solve_row_bounded(sigma, x, i, mu, beta, opts.tol, opts.max_iter)?,
                    None => solve_row(sigma, i, mu, opts.tol, opts.max_iter)?,
                };
                if sol.feasible || attempt == opts.max_mu_inflations {
                    return Ok((sol, mu));
                }
                let next = if mu > 0.0 { mu * opts.mu_growth } else { f64::EPSILON.sqrt() };
                // at μ ≥ 1 the zero row is trivially feasible and carries no information
                if next >= 1.0 {
                    return Ok((sol, mu));
                }
                attempt += 1;
                mu = next;
            }
        })
        .collect();

    let mut m = Array2::zeros((p, p));
    let mut m_sigma = Array2::zeros((p, p));
    let mut row_mu = Vec::with_capacity(p);
    let mut row_feasible = Vec::with_capacity(p);
    let mut row_variance = Vec::with_capacity(p);
    for (i, r) in rows.into_iter().enumerate() {
        let (sol, mu) = r?;
        if mu > opts.mu {
            log::debug!("row {i}: mu inflated to {mu:.4e}");
        }
        m.row_mut(i).assign(&sol.m);
        m_sigma.row_mut(i).assign(&sol.sigma_m);
        row_mu.push(mu);
        row_feasible.push(sol.feasible);
        row_variance.push(sol.variance);
    }
    if row_feasible.iter().any(|f| !f) {
        let bad = row_feasible.iter().filter(|f| !**f).count();
        log::warn!("{bad} of {p} decorrelation rows infeasible; falling back to M = I");
        return Ok(Decorrelator::identity(sigma, row_mu, row_feasible, opts.row_bound_beta));
    }
    let coherence = coherence_of(m_sigma.view());
    Ok(Decorrelator {
        m,
        mu: row_mu.iter().copied().fold(0.0, f64::max),
        row_mu,
        row_feasible,
        fallback_identity: false,
        row_variance,
        coherence,
        row_bound_beta: opts.row_bound_beta,
        m_sigma,
    })
}
