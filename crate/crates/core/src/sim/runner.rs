//! Monte-Carlo runner: one fixed design, many noise draws, the full
//! scaled-LASSO → LASSO → decorrelate → de-bias → test pipeline per draw.

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{Design, DesignKind, NoiseKind};
use crate::debias::{bias_decomposition, debias, BiasDiagnostics, DebiasedFit};
use crate::decorrelate::{build_decorrelator, DecorrelationOptions, Decorrelator};
use crate::error::{Error, Result};
use crate::infer::{test_family, InferenceReport};
use crate::lasso::{Lasso, LassoFit, ScaledLassoFit, SolverOptions};
use crate::model::{sample_covariance, Dataset, ProblemScale, SampleCovariance};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub s0: usize,
    pub b: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub noise: NoiseKind,
    /// True noise level of the generator.
    pub sigma: f64,
    /// Row bound exponent for the decorrelator; `None` disables the bound.
    pub beta: Option<f64>,
    pub design: DesignKind,
    /// `λ̃ = lambda_tilde_factor · sqrt(2 log p / n)` for the scaled LASSO.
    pub lambda_tilde_factor: f64,
    /// `λ = lambda_factor · σ̂ · sqrt(2 log p / n)` for the LASSO.
    pub lambda_factor: f64,
    /// `μ = mu_factor · sqrt(log p / n)`.
    pub mu_factor: f64,
    /// Use the true `σ` instead of `σ̂` in the interval widths.
    pub oracle_sigma: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 1000,
            p: 600,
            s0: 10,
            b: 0.5,
            n_reps: 20,
            seed: 42,
            alpha: 0.05,
            noise: NoiseKind::Gaussian,
            sigma: 1.0,
            beta: None,
            design: DesignKind::Circulant,
            lambda_tilde_factor: 10.0,
            lambda_factor: 4.0,
            mu_factor: 2.0,
            oracle_sigma: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p < 2 {
            return Err(Error::Input(format!("need n ≥ 1 and p ≥ 2, got n={} p={}", self.n, self.p)));
        }
        if self.s0 > self.p {
            return Err(Error::Input(format!("s0 = {} exceeds p = {}", self.s0, self.p)));
        }
        if self.n_reps == 0 {
            return Err(Error::Input("n_reps must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.sigma > 0.0) || !self.b.is_finite() {
            return Err(Error::Input("need sigma > 0 and finite b".into()));
        }
        for (name, v) in [
            ("lambda_tilde_factor", self.lambda_tilde_factor),
            ("lambda_factor", self.lambda_factor),
            ("mu_factor", self.mu_factor),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Input(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(beta) = self.beta {
            crate::decorrelate::check_beta(beta)?;
        }
        Ok(())
    }

    pub fn scale(&self) -> ProblemScale {
        ProblemScale::new(self.n, self.p)
    }

    pub fn lambda_tilde(&self) -> f64 {
        self.lambda_tilde_factor * self.scale().universal_lambda()
    }

    pub fn mu(&self) -> f64 {
        self.mu_factor * self.scale().log_ratio
    }
}

/// The fitted pipeline on one response vector.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub scaled: ScaledLassoFit,
    pub lasso: LassoFit,
    pub debiased: DebiasedFit,
    pub report: InferenceReport,
}

/// What one replicate contributes to the aggregate metrics.
#[derive(Debug, Clone)]
struct Record {
    length: Array1<f64>,
    covered: Vec<bool>,
    reject: Vec<bool>,
    reject_fwer: Vec<bool>,
    z: Array1<f64>,
    pvals: Array1<f64>,
    sigma_hat: f64,
    bias: BiasDiagnostics,
}

/// A prepared experiment: the design, its covariance and the decorrelator,
/// all shared by every replicate.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: SimConfig,
    pub design: Design,
    pub sigma: SampleCovariance,
    pub decorrelator: Decorrelator,
}

impl Experiment {
    pub fn prepare(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let design = Design::draw(config)?;
        let data = Dataset::new(design.x.clone(), Array1::zeros(config.n))?;
        let sigma = sample_covariance(&data)?;
        let mut opts = DecorrelationOptions::with_mu(config.mu());
        opts.row_bound_beta = config.beta;
        let decorrelator = build_decorrelator(&sigma, Some(design.x.view()), &opts)?;
        if decorrelator.fallback_identity {
            log::warn!("decorrelator fell back to M = I for this design");
        }
        Ok(Experiment {
            config: config.clone(),
            design,
            sigma,
            decorrelator,
        })
    }

    pub fn replicate(&self, rep: usize) -> Result<Dataset> {
        self.design.replicate(rep)
    }

    /// Runs the fitting and testing pipeline on one dataset with this design.
    pub fn analyze(&self, data: &Dataset) -> Result<Analysis> {
        let cfg = &self.config;
        let solver = SolverOptions::default();
        let lasso = Lasso::with_covariance(data, &self.sigma)?;
        let scaled = lasso.scaled(cfg.lambda_tilde(), &solver)?;
        let lambda = cfg.lambda_factor * scaled.sigma_hat * cfg.scale().universal_lambda();
        let fit = lasso.fit(lambda, Some(scaled.theta.view()), &solver)?;
        if !fit.converged {
            log::warn!("LASSO stopped with KKT residual {:.2e}", fit.kkt_residual);
        }
        let noise = if cfg.oracle_sigma { cfg.sigma } else { scaled.sigma_hat };
        let debiased = debias(data, &fit, &self.decorrelator, noise)?;
        let report = test_family(&debiased, cfg.alpha, true)?;
        Ok(Analysis {
            scaled,
            lasso: fit,
            debiased,
            report,
        })
    }

    fn score(&self, rep: usize) -> Result<Record> {
        let data = self.replicate(rep)?;
        let a = self.analyze(&data)?;
        let theta_0 = &self.design.truth.theta_0;
        let bias = bias_decomposition(&a.debiased, &self.decorrelator, theta_0.view())?;
        let r = &a.report;
        let length = &r.ci_upper - &r.ci_lower;
        let covered = (0..theta_0.len())
            .map(|i| r.ci_lower[i] <= theta_0[i] && theta_0[i] <= r.ci_upper[i])
            .collect();
        let z = (&a.debiased.theta_u - theta_0) / &a.debiased.q_diag.mapv(f64::sqrt);
        Ok(Record {
            length,
            covered,
            reject: r.reject.clone(),
            reject_fwer: r.reject_fwer.clone(),
            z,
            pvals: r.p_values.clone(),
            sigma_hat: a.scaled.sigma_hat,
            bias,
        })
    }

    pub fn run(&self) -> Result<SimulationOutcome> {
        let records: Vec<Result<Record>> = (0..self.config.n_reps).into_par_iter().map(|rep| self.score(rep)).collect();
        let mut ok = Vec::with_capacity(records.len());
        let mut failures = 0;
        for (rep, r) in records.into_iter().enumerate() {
            match r {
                Ok(rec) => ok.push(rec),
                Err(e) => {
                    log::error!("replicate {rep} failed: {e}");
                    failures += 1;
                }
            }
        }
        Ok(self.aggregate(&ok, failures))
    }

    fn aggregate(&self, records: &[Record], failures: usize) -> SimulationOutcome {
        let p = self.config.p;
        let support = self.design.truth.on_support();
        let reps = records.len();
        let s0 = self.design.truth.support.len();

        let mut avg_len = vec![0.0; p];
        let mut cover = vec![0usize; p];
        let mut rej = vec![0usize; p];
        let mut z_samples = Vec::with_capacity(reps * p);
        let mut pvals_null = Vec::with_capacity(reps * (p - s0));
        let mut fwer_events = 0;
        let mut delta_max_samples = Vec::with_capacity(reps);
        let mut delta_bound_samples = Vec::with_capacity(reps);
        let mut sigma_hat_samples = Vec::with_capacity(reps);
        for rec in records {
            for i in 0..p {
                avg_len[i] += rec.length[i];
                cover[i] += usize::from(rec.covered[i]);
                rej[i] += usize::from(rec.reject[i]);
                if !support[i] {
                    pvals_null.push(rec.pvals[i]);
                }
            }
            z_samples.extend(rec.z.iter().copied());
            if (0..p).any(|i| !support[i] && rec.reject_fwer[i]) {
                fwer_events += 1;
            }
            delta_max_samples.push(rec.bias.delta_max);
            delta_bound_samples.push(rec.bias.delta_bound);
            sigma_hat_samples.push(rec.sigma_hat);
        }

        let r = reps as f64;
        let len: Vec<f64> = avg_len.iter().map(|v| v / r).collect();
        let cov: Vec<f64> = cover.iter().map(|&c| c as f64 / r).collect();
        let rate: Vec<f64> = rej.iter().map(|&c| c as f64 / r).collect();
        let mean_over = |v: &[f64], on: bool| -> Option<f64> {
            let sel: Vec<f64> = (0..p).filter(|&i| support[i] == on).map(|i| v[i]).collect();
            (!sel.is_empty() && reps > 0).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
        };
        let all = |v: &[f64]| (reps > 0).then(|| v.iter().sum::<f64>() / p as f64);

        SimulationOutcome {
            config: self.config.clone(),
            replicates: reps,
            failures,
            ell: all(&len),
            ell_s: mean_over(&len, true),
            ell_sc: mean_over(&len, false),
            cov: all(&cov),
            cov_s: mean_over(&cov, true),
            cov_sc: mean_over(&cov, false),
            fp: mean_over(&rate, false),
            tp: mean_over(&rate, true),
            fwer_events,
            support: self.design.truth.support.clone(),
            mu: self.decorrelator.mu,
            coherence: self.decorrelator.coherence,
            fallback_identity: self.decorrelator.fallback_identity,
            rows_inflated: self
                .decorrelator
                .row_mu
                .iter()
                .filter(|&&m| m > self.config.mu())
                .count(),
            sigma_hat_samples,
            delta_max_samples,
            delta_bound_samples,
            z_samples,
            pvals_null,
        }
    }
}

/// Aggregate metrics of one configuration. Rates that are undefined (no
/// support, or no successful replicate) are `None`.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationOutcome {
    pub config: SimConfig,
    pub replicates: usize,
    pub failures: usize,
    pub ell: Option<f64>,
    pub ell_s: Option<f64>,
    pub ell_sc: Option<f64>,
    pub cov: Option<f64>,
    pub cov_s: Option<f64>,
    pub cov_sc: Option<f64>,
    pub fp: Option<f64>,
    pub tp: Option<f64>,
    /// Replicates with at least one Bonferroni rejection off the support.
    pub fwer_events: usize,
    pub support: Vec<usize>,
    pub mu: f64,
    pub coherence: f64,
    pub fallback_identity: bool,
    pub rows_inflated: usize,
    pub sigma_hat_samples: Vec<f64>,
    pub delta_max_samples: Vec<f64>,
    /// `√n · coherence · ‖θ̂ⁿ − θ₀‖₁` per replicate.
    pub delta_bound_samples: Vec<f64>,
    /// `(θ̂ᵘᵢ − θ₀,ᵢ) / sqrt(q_diag[i])` over all coordinates and replicates.
    pub z_samples: Vec<f64>,
    /// p-values of the coordinates off the support.
    pub pvals_null: Vec<f64>,
}

impl SimulationOutcome {
    pub fn is_empty(&self) -> bool {
        self.replicates == 0
    }

    pub fn fwer(&self) -> Option<f64> {
        (self.replicates > 0).then(|| self.fwer_events as f64 / self.replicates as f64)
    }
}

pub fn run_configuration(config: &SimConfig) -> Result<SimulationOutcome> {
    Experiment::prepare(config)?.run()
}
