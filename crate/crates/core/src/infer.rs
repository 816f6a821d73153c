//! Intervals, p-values and tests built on a de-biased fit.

use ndarray::{Array1, Array2, ArrayView1};
use serde::Serialize;

use crate::debias::DebiasedFit;
use crate::decorrelate::Decorrelator;
use crate::error::{Error, Result};
use crate::linalg::jacobi_eigen;
use crate::normal::{erfc, normal_quantile, normal_sf};

/// Smallest reported p-value; anything below is clamped and flagged.
pub const P_FLOOR: f64 = 1e-300;
/// Largest index set accepted by [`joint_region`].
pub const MAX_JOINT: usize = 20;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// `θ̂ᵘᵢ ± Φ⁻¹(1 − α/2) sqrt(q_diag[i])`.
pub fn confidence_intervals(fit: &DebiasedFit, alpha: f64) -> Result<(Array1<f64>, Array1<f64>)> {
    check_alpha(alpha)?;
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    let half = fit.q_diag.mapv(|q| z * q.sqrt());
    Ok((&fit.theta_u - &half, &fit.theta_u + &half))
}

/// Two-sided p-value `2(1 − Φ(|t|))` of a standardized statistic, and whether
/// it had to be clamped at [`P_FLOOR`].
pub fn two_sided_p(t: f64) -> (f64, bool) {
    let p = erfc(t.abs() / std::f64::consts::SQRT_2).min(1.0);
    if p < P_FLOOR {
        (P_FLOOR, true)
    } else {
        (p, false)
    }
}

/// Per-coordinate two-sided p-values.
pub fn p_values(fit: &DebiasedFit) -> Array1<f64> {
    fit.standardized().mapv(|t| two_sided_p(t).0)
}

#[derive(Debug, Clone, Serialize)]
pub struct InferenceReport {
    pub alpha: f64,
    /// Whether the family-wise (Bonferroni) decision is the headline one.
    pub fwer: bool,
    pub theta_u: Array1<f64>,
    pub ci_lower: Array1<f64>,
    pub ci_upper: Array1<f64>,
    pub p_values: Array1<f64>,
    /// p-values that underflowed and were clamped.
    pub p_clamped: Vec<bool>,
    pub reject: Vec<bool>,
    pub reject_fwer: Vec<bool>,
    pub standardized: Array1<f64>,
}

#[derive(Serialize)]
struct CoordJson {
    index: usize,
    theta_u: f64,
    ci: [f64; 2],
    p_value: f64,
    reject: bool,
    reject_fwer: bool,
}

#[derive(Serialize)]
struct ReportJson {
    alpha: f64,
    coords: Vec<CoordJson>,
}

impl InferenceReport {
    pub fn p(&self) -> usize {
        self.theta_u.len()
    }

    /// Indices rejected under the headline rule.
    pub fn rejected(&self) -> Vec<usize> {
        let flags = if self.fwer { &self.reject_fwer } else { &self.reject };
        flags.iter().enumerate().filter(|(_, r)| **r).map(|(i, _)| i).collect()
    }

    /// Maps estimates and intervals fitted on standardized columns back to the
    /// original scale (`column j` was divided by `scales[j]`). Test decisions
    /// are scale-free and stay as they are.
    pub fn rescale(&mut self, scales: &[f64]) -> Result<()> {
        if scales.len() != self.p() || scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Input("need one positive scale per coordinate".into()));
        }
        for (j, s) in scales.iter().enumerate() {
            self.theta_u[j] /= s;
            self.ci_lower[j] /= s;
            self.ci_upper[j] /= s;
        }
        Ok(())
    }

    /// The report in its external JSON layout (1-based indices).
    pub fn to_json(&self) -> Result<String> {
        let coords = (0..self.p())
            .map(|i| CoordJson {
                index: i + 1,
                theta_u: self.theta_u[i],
                ci: [self.ci_lower[i], self.ci_upper[i]],
                p_value: self.p_values[i],
                reject: self.reject[i],
                reject_fwer: self.reject_fwer[i],
            })
            .collect();
        Ok(serde_json::to_string_pretty(&ReportJson {
            alpha: self.alpha,
            coords,
        })?)
    }
}

/// Tests every `H₀,ᵢ: θ₀,ᵢ = 0` at level `α` and, Bonferroni-corrected, at
/// `α/p`. Both decisions are recorded; `fwer` selects the headline one.
pub fn test_family(fit: &DebiasedFit, alpha: f64, fwer: bool) -> Result<InferenceReport> {
    check_alpha(alpha)?;
    let (ci_lower, ci_upper) = confidence_intervals(fit, alpha)?;
    let standardized = fit.standardized();
    let (p_values, p_clamped): (Vec<f64>, Vec<bool>) = standardized.iter().map(|&t| two_sided_p(t)).unzip();
    let threshold = alpha / fit.p() as f64;
    let reject = p_values.iter().map(|&p| p <= alpha).collect();
    let reject_fwer = p_values.iter().map(|&p| p <= threshold).collect();
    Ok(InferenceReport {
        alpha,
        fwer,
        theta_u: fit.theta_u.clone(),
        ci_lower,
        ci_upper,
        p_values: Array1::from(p_values),
        p_clamped,
        reject,
        reject_fwer,
        standardized,
    })
}

/// `G(α, u) = 2 − Φ(z + u) − Φ(z − u)` with `z = Φ⁻¹(1 − α/2)`: the power of
/// the two-sided test against standardized signal `u`.
pub fn power_function(alpha: f64, u: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("signal strength must be nonnegative, got {u}")));
    }
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    Ok((normal_sf(z + u) + normal_sf(z - u)).min(1.0))
}

/// Upper bound on the power any test can reach against `|θ₀,ᵢ| ≥ γ`:
/// `min(1, G(α, γ/σ_eff) + exp(−ξ²/8))` with
/// `σ_eff = σ / (sqrt(Σ_{i|S}) (sqrt(n − s₀ + 1) + ξ))`.
pub fn oracle_power_bound(
    alpha: f64,
    gamma: f64,
    sigma: f64,
    n: usize,
    s0: usize,
    sigma_cond: f64,
    xi: f64,
) -> Result<f64> {
    if s0 > n {
        return Err(Error::Domain(format!("s0 = {s0} exceeds n = {n}")));
    }
    let dof = ((n - s0 + 1) as f64).sqrt();
    if !(xi >= 0.0 && xi <= 1.5 * dof) {
        return Err(Error::Domain(format!("xi must lie in [0, {}], got {xi}", 1.5 * dof)));
    }
    if !(sigma_cond > 0.0) || !(sigma > 0.0) || !(gamma >= 0.0) {
        return Err(Error::Domain("need sigma > 0, sigma_cond > 0 and gamma ≥ 0".into()));
    }
    let sigma_eff = sigma / (sigma_cond.sqrt() * (dof + xi));
    let g = power_function(alpha, gamma / sigma_eff)?;
    Ok((g + (-xi * xi / 8.0).exp()).min(1.0))
}

/// Simultaneous region `θ̂ᵘ_R + Q_RR^{1/2} [−z, z]^k` for a small index set.
#[derive(Debug, Clone, Serialize)]
pub struct JointRegion {
    pub r: Vec<usize>,
    pub center: Array1<f64>,
    pub q_block: Array2<f64>,
    /// Symmetric PSD square root of `q_block`.
    pub q_block_sqrt: Array2<f64>,
    /// Box half-side `z = Φ⁻¹((1 + (1 − α)^{1/k}) / 2)`.
    pub radius: f64,
    pub rank_deficient: bool,
    #[serde(skip)]
    eigvals: Array1<f64>,
    #[serde(skip)]
    eigvecs: Array2<f64>,
}

impl JointRegion {
    pub fn dim(&self) -> usize {
        self.r.len()
    }

    /// Whether `theta` (values on `R`, in the order of `r`) lies in the region.
    pub fn contains(&self, theta: ArrayView1<'_, f64>) -> bool {
        if theta.len() != self.dim() {
            return false;
        }
        let diff = &theta - &self.center;
        // coordinates in the eigenbasis, then undo the square root
        let proj = self.eigvecs.t().dot(&diff);
        let mut c = Array1::zeros(self.dim());
        for k in 0..self.dim() {
            let l = self.eigvals[k];
            if l > 0.0 {
                c[k] = proj[k] / l.sqrt();
            } else if proj[k].abs() > 1e-12 * (1.0 + diff.iter().fold(0.0, |m: f64, v| m.max(v.abs()))) {
                return false;
            }
        }
        let box_coords = self.eigvecs.dot(&c);
        box_coords.iter().all(|v| v.abs() <= self.radius)
    }

    /// Half-widths of the smallest axis-aligned box around the region.
    pub fn bounding_half_widths(&self) -> Array1<f64> {
        self.q_block_sqrt
            .rows()
            .into_iter()
            .map(|row| self.radius * row.iter().map(|v| v.abs()).sum::<f64>())
            .collect()
    }
}

pub fn joint_region(fit: &DebiasedFit, dec: &Decorrelator, r: &[usize], alpha: f64) -> Result<JointRegion> {
    check_alpha(alpha)?;
    let k = r.len();
    if k == 0 {
        return Err(Error::Input("index set must be non-empty".into()));
    }
    if k > MAX_JOINT {
        return Err(Error::Scale(format!("joint regions support at most {MAX_JOINT} coordinates, got {k}")));
    }
    let p = fit.p();
    let mut sorted = r.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != k || sorted[k - 1] >= p || dec.dim() != p {
        return Err(Error::Input("index set must hold distinct coordinates below p".into()));
    }
    let scale = fit.sigma_hat * fit.sigma_hat / fit.n as f64;
    let q_block = dec.variance_block(r).mapv(|v| v * scale);
    let (vals, vecs) = jacobi_eigen(q_block.view());
    let trace: f64 = q_block.diag().sum();
    let floor = 1e-12 * trace / k as f64;
    let rank_deficient = vals.iter().any(|&l| l < floor);
    if rank_deficient {
        log::warn!("joint covariance block is numerically singular; using its pseudo square root");
    }
    let eigvals = vals.mapv(|l| if l < floor { 0.0 } else { l });
    let root = &vecs * &eigvals.mapv(f64::sqrt);
    let root = root.dot(&vecs.t());
    let q_block_sqrt = (&root + &root.t()) * 0.5;
    let level = (1.0 + (1.0 - alpha).powf(1.0 / k as f64)) / 2.0;
    let radius = if level >= 1.0 { f64::INFINITY } else { normal_quantile(level)? };
    let center = Array1::from_iter(r.iter().map(|&i| fit.theta_u[i]));
    Ok(JointRegion {
        r: r.to_vec(),
        center,
        q_block,
        q_block_sqrt,
        radius,
        rank_deficient,
        eigvals,
        eigvecs: vecs,
    })
}
