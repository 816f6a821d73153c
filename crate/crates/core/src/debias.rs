//! The de-biased estimator `θ̂ᵘ = θ̂ⁿ + (1/n) M Xᵀ(y − X θ̂ⁿ)` and its
//! decomposition `√n(θ̂ᵘ − θ₀) = Z + Δ` when the truth is known.

use std::hash::{DefaultHasher, Hash, Hasher};

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::Serialize;

use crate::decorrelate::Decorrelator;
use crate::error::{Error, Result};
use crate::lasso::SparseFit;
use crate::model::Dataset;

#[derive(Debug, Clone, Serialize)]
pub struct DebiasedFit {
    pub theta_u: Array1<f64>,
    pub theta_n: Array1<f64>,
    pub sigma_hat: f64,
    /// `σ̂² mᵢᵀΣ̂mᵢ / n`, the diagonal of the estimator's covariance.
    pub q_diag: Array1<f64>,
    pub n: usize,
    /// Fingerprint of the design, used to check that replicates share `X`.
    #[serde(skip)]
    pub(crate) design_id: u64,
}

impl DebiasedFit {
    pub fn p(&self) -> usize {
        self.theta_u.len()
    }

    /// `θ̂ᵘᵢ / sqrt(q_diag[i])`.
    pub fn standardized(&self) -> Array1<f64> {
        &self.theta_u / &self.q_diag.mapv(f64::sqrt)
    }
}

fn fingerprint(x: ArrayView2<'_, f64>) -> u64 {
    let mut h = DefaultHasher::new();
    x.dim().hash(&mut h);
    for v in x.iter() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Applies the one-step correction to a sparse fit.
///
/// `sigma_hat` enters only the variance `q_diag`; pass the scaled-LASSO
/// estimate or, in simulations, the true noise level.
pub fn debias(data: &Dataset, fit: &impl SparseFit, dec: &Decorrelator, sigma_hat: f64) -> Result<DebiasedFit> {
    let p = data.p();
    let theta_n = fit.coefficients().to_owned();
    if theta_n.len() != p || dec.dim() != p {
        return Err(Error::Input(format!(
            "dimension mismatch: design has {p} columns, fit has {}, decorrelator has {}",
            theta_n.len(),
            dec.dim()
        )));
    }
    if !(sigma_hat > 0.0) || !sigma_hat.is_finite() {
        return Err(Error::Input(format!("sigma_hat must be positive and finite, got {sigma_hat}")));
    }
    if theta_n.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("fit has non-finite coefficients".into()));
    }
    let n = data.n();
    let x = data.x();
    let resid = &data.y() - &x.dot(&theta_n);
    let score = x.t().dot(&resid) / n as f64;
    let theta_u = &theta_n + &dec.m.dot(&score);

    let scale = sigma_hat * sigma_hat / n as f64;
    let q_diag = Array1::from_iter(dec.row_variance.iter().map(|v| v * scale));
    if let Some(i) = q_diag.iter().position(|&q| !(q > 0.0)) {
        return Err(Error::Degenerate(format!(
            "row {i} of M has zero variance (mu {} too large?)",
            dec.row_mu[i]
        )));
    }
    Ok(DebiasedFit {
        theta_u,
        theta_n,
        sigma_hat,
        q_diag,
        n,
        design_id: fingerprint(x),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasDiagnostics {
    /// Noise term `Z`.
    pub z: Array1<f64>,
    /// Bias term `Δ = √n (MΣ̂ − I)(θ₀ − θ̂ⁿ)`.
    pub delta: Array1<f64>,
    pub delta_max: f64,
    /// `√n · |MΣ̂ − I|∞ · ‖θ̂ⁿ − θ₀‖₁`, an upper bound on `delta_max`.
    pub delta_bound: f64,
}

/// Splits `√n(θ̂ᵘ − θ₀)` into the bias term `Δ` and the remainder `Z`.
pub fn bias_decomposition(fit: &DebiasedFit, dec: &Decorrelator, theta_0: ArrayView1<'_, f64>) -> Result<BiasDiagnostics> {
    let p = fit.p();
    if theta_0.len() != p || dec.dim() != p {
        return Err(Error::Input(format!("theta_0 has length {}, expected {p}", theta_0.len())));
    }
    let root_n = (fit.n as f64).sqrt();
    let err = &theta_0 - &fit.theta_n;
    let delta = (dec.m_sigma().dot(&err) - &err) * root_n;
    let z = (&fit.theta_u - &theta_0) * root_n - &delta;
    let delta_max = delta.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let l1: f64 = err.iter().map(|v| v.abs()).sum();
    Ok(BiasDiagnostics {
        z,
        delta,
        delta_max,
        delta_bound: root_n * dec.coherence * l1,
    })
}

/// Monte-Carlo means of `θ̂ᵘ − θ₀` and `θ̂ⁿ − θ₀` over replicates that share
/// one design.
pub fn empirical_bias(fits: &[DebiasedFit], theta_0: ArrayView1<'_, f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    if fits.len() < 2 {
        return Err(Error::Input(format!("need at least 2 replicates, got {}", fits.len())));
    }
    let first = &fits[0];
    let p = first.p();
    if theta_0.len() != p {
        return Err(Error::Input(format!("theta_0 has length {}, expected {p}", theta_0.len())));
    }
    if fits.iter().any(|f| f.design_id != first.design_id || f.p() != p) {
        return Err(Error::Input("replicates do not share the same design".into()));
    }
    let k = fits.len() as f64;
    let mut bu = Array1::zeros(p);
    let mut bn = Array1::zeros(p);
    for f in fits {
        bu += &(&f.theta_u - &theta_0);
        bn += &(&f.theta_n - &theta_0);
    }
    Ok((bu / k, bn / k))
}
