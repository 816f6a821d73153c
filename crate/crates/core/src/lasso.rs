//! LASSO and scaled-LASSO fits by cyclic coordinate descent on `Σ̂`.

use ndarray::{Array1, ArrayView1};
use serde::Serialize;

use crate::cd::{Problem, Status};
use crate::error::{Error, Result};
use crate::model::{sample_covariance, Dataset, SampleCovariance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Bound on the largest coordinate move of a full sweep and on the KKT
    /// residual at exit.
    pub tol: f64,
    /// Maximum number of coordinate sweeps.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-7,
            max_iter: 10_000,
        }
    }
}

/// Anything that carries a sparse coefficient estimate.
pub trait SparseFit {
    fn coefficients(&self) -> ArrayView1<'_, f64>;

    /// The noise level estimated alongside the coefficients, if any.
    fn noise_level(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LassoFit {
    pub theta: Array1<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest violation of the LASSO optimality conditions.
    pub kkt_residual: f64,
    /// Objective `(1/2n)‖y − xθ‖² + λ‖θ‖₁` after each sweep.
    pub objective_trace: Vec<f64>,
}

impl SparseFit for LassoFit {
    fn coefficients(&self) -> ArrayView1<'_, f64> {
        self.theta.view()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaledLassoFit {
    pub theta: Array1<f64>,
    pub sigma_hat: f64,
    pub lambda_tilde: f64,
    /// Outer (σ-update) iterations.
    pub iterations: usize,
    pub converged: bool,
    /// The inner fit at the final penalty `σ λ̃`.
    pub lasso: LassoFit,
}

impl SparseFit for ScaledLassoFit {
    fn coefficients(&self) -> ArrayView1<'_, f64> {
        self.theta.view()
    }

    fn noise_level(&self) -> Option<f64> {
        Some(self.sigma_hat)
    }
}

/// `sign(z) · max(|z| − t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    crate::cd::soft(z, t)
}

/// Cached sufficient statistics `Σ̂`, `xᵀy/n` and `‖y‖²/n` for repeated fits
/// on one dataset.
#[derive(Debug, Clone)]
pub struct Lasso<'a> {
    data: &'a Dataset,
    sigma: std::borrow::Cow<'a, SampleCovariance>,
    xty: Array1<f64>,
    yy: f64,
}

impl<'a> Lasso<'a> {
    pub fn new(data: &'a Dataset) -> Result<Self> {
        let sigma = sample_covariance(data)?;
        Ok(Self::assemble(data, std::borrow::Cow::Owned(sigma)))
    }

    /// Reuses a covariance already computed for `data`'s design.
    pub fn with_covariance(data: &'a Dataset, sigma: &'a SampleCovariance) -> Result<Self> {
        if sigma.dim() != data.p() {
            return Err(Error::Input(format!(
                "covariance is {0}x{0} but design has {1} columns",
                sigma.dim(),
                data.p()
            )));
        }
        Ok(Self::assemble(data, std::borrow::Cow::Borrowed(sigma)))
    }

    fn assemble(data: &'a Dataset, sigma: std::borrow::Cow<'a, SampleCovariance>) -> Self {
        let n = data.n() as f64;
        let xty = data.x().t().dot(&data.y()) / n;
        let yy = data.y().dot(&data.y()) / n;
        Lasso {
            data,
            sigma,
            xty,
            yy,
        }
    }

    pub fn covariance(&self) -> &SampleCovariance {
        &self.sigma
    }

    fn problem(&self, lambda: f64) -> Problem<'_> {
        Problem {
            gram: self.sigma.matrix(),
            linear: self.xty.view(),
            shift: None,
            penalty: lambda,
        }
    }

    /// Solves `min (1/2n)‖y − xθ‖² + λ‖θ‖₁`, optionally warm-started.
    pub fn fit(&self, lambda: f64, warm: Option<ArrayView1<'_, f64>>, opts: &SolverOptions) -> Result<LassoFit> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Input(format!("lambda must be positive and finite, got {lambda}")));
        }
        check_options(opts)?;
        let p = self.data.p();
        let start = match warm {
            Some(w) if w.len() == p => w.to_owned(),
            Some(w) => {
                return Err(Error::Input(format!("warm start has length {}, expected {p}", w.len())))
            }
            None => Array1::zeros(p),
        };
        let prob = self.problem(lambda);
        let out = prob.minimize(start, opts.tol, opts.max_iter)?;
        if out.status == Status::Unbounded {
            return Err(Error::Numeric("LASSO objective diverged".into()));
        }
        let mut theta = out.x;
        let mut kkt = prob.kkt_residual(theta.view(), out.grad.view());
        if let Some((polished, grad)) = prob.polish(theta.view()) {
            let k = prob.kkt_residual(polished.view(), grad.view());
            if k <= kkt {
                theta = polished;
                kkt = k;
            }
        }
        let half_yy = 0.5 * self.yy;
        Ok(LassoFit {
            theta,
            lambda,
            iterations: out.sweeps,
            converged: kkt <= opts.tol,
            kkt_residual: kkt,
            objective_trace: out.objective_trace.into_iter().map(|v| v + half_yy).collect(),
        })
    }

    /// Value of `(1/2n)‖y − xθ‖² + λ‖θ‖₁`.
    pub fn objective(&self, theta: ArrayView1<'_, f64>, lambda: f64) -> f64 {
        self.problem(lambda).objective(theta) + 0.5 * self.yy
    }

    /// `‖y − xθ‖₂ / √n`.
    pub fn residual_scale(&self, theta: ArrayView1<'_, f64>) -> f64 {
        let r = &self.data.y() - &self.data.x().dot(&theta);
        (r.dot(&r) / self.data.n() as f64).sqrt()
    }

    /// Alternates `θ ← lasso(σ λ̃)` and `σ ← ‖y − xθ‖/√n` from `σ₀ = ‖y‖/√n`.
    pub fn scaled(&self, lambda_tilde: f64, opts: &SolverOptions) -> Result<ScaledLassoFit> {
        const MAX_OUTER: usize = 50;
        if !(lambda_tilde > 0.0) || !lambda_tilde.is_finite() {
            return Err(Error::Input(format!(
                "lambda_tilde must be positive and finite, got {lambda_tilde}"
            )));
        }
        let null_scale = self.yy.sqrt();
        if null_scale == 0.0 {
            return Err(Error::Input("response is identically zero".into()));
        }
        let floor = 1e-10 * null_scale;
        let mut sigma = null_scale;
        let mut warm: Option<Array1<f64>> = None;
        let mut converged = false;
        let mut iterations = 0;
        let mut fit = None;
        for _ in 0..MAX_OUTER {
            iterations += 1;
            let f = self.fit(sigma * lambda_tilde, warm.as_ref().map(|w| w.view()), opts)?;
            let next = self.residual_scale(f.theta.view());
            if next < floor {
                return Err(Error::Degenerate(format!(
                    "noise estimate collapsed to {next:e}; the fit interpolates the response"
                )));
            }
            let done = (next - sigma).abs() <= opts.tol * sigma;
            sigma = next;
            warm = Some(f.theta.clone());
            fit = Some(f);
            if done {
                converged = true;
                break;
            }
        }
        let lasso = fit.expect("at least one outer iteration");
        Ok(ScaledLassoFit {
            theta: lasso.theta.clone(),
            sigma_hat: sigma,
            lambda_tilde,
            iterations,
            converged: converged && lasso.converged,
            lasso,
        })
    }
}

fn check_options(opts: &SolverOptions) -> Result<()> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::Input(format!(
            "solver needs tol > 0 and max_iter ≥ 1, got tol={} max_iter={}",
            opts.tol, opts.max_iter
        )));
    }
    Ok(())
}

pub fn lasso_fit(data: &Dataset, lambda: f64, opts: &SolverOptions) -> Result<LassoFit> {
    Lasso::new(data)?.fit(lambda, None, opts)
}

pub fn scaled_lasso_fit(data: &Dataset, lambda_tilde: f64, opts: &SolverOptions) -> Result<ScaledLassoFit> {
    Lasso::new(data)?.scaled(lambda_tilde, opts)
}
