//! Synthetic regression instances: Gaussian designs with a banded circulant
//! covariance, a random support of equal coefficients, and noise draws.

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::rng::{open_unit, stream, Gaussian, Tag};
use super::SimConfig;
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::model::Dataset;

/// Half-width of the circulant band.
const BAND: usize = 5;
const BAND_VALUE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    Rademacher,
    /// `Exp(1) − 1`, rescaled.
    Exponential,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "rademacher" => Ok(NoiseKind::Rademacher),
            "expo" | "exponential" => Ok(NoiseKind::Exponential),
            other => Err(Error::Input(format!("unknown noise kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    /// Rows from `N(0, Σ)` with the banded circulant `Σ`.
    #[default]
    Circulant,
    /// Rows from `N(0, I)`.
    Identity,
}

/// Unit diagonal, `0.1` on the five neighbours on each side (with wrap-around).
pub fn circulant_sigma(p: usize) -> Result<Array2<f64>> {
    if p < 2 * BAND + 1 {
        return Err(Error::Scale(format!("circulant covariance needs p ≥ {}, got {p}", 2 * BAND + 1)));
    }
    Ok(Array2::from_shape_fn((p, p), |(j, k)| {
        let d = j.abs_diff(k);
        let d = d.min(p - d);
        match d {
            0 => 1.0,
            d if d <= BAND => BAND_VALUE,
            _ => 0.0,
        }
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct SyntheticTruth {
    pub theta_0: Array1<f64>,
    /// Sorted zero-based support.
    pub support: Vec<usize>,
    pub sigma: f64,
    pub noise_kind: NoiseKind,
}

impl SyntheticTruth {
    pub fn on_support(&self) -> Vec<bool> {
        let mut mask = vec![false; self.theta_0.len()];
        for &j in &self.support {
            mask[j] = true;
        }
        mask
    }
}

/// The fixed part of an experiment: design and coefficients.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: Array2<f64>,
    pub truth: SyntheticTruth,
    seed: u64,
    signal: Array1<f64>,
}

impl Design {
    pub fn draw(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let (n, p) = (config.n, config.p);
        let mut g = Gaussian::new(stream(config.seed, 0, Tag::Design));
        let z = Array2::from_shape_simple_fn((n, p), || g.sample());
        let x = match config.design {
            DesignKind::Identity => z,
            DesignKind::Circulant => {
                let l = cholesky(circulant_sigma(p)?.view())
                    .ok_or_else(|| Error::Numeric("circulant covariance is not positive definite".into()))?;
                z.dot(&l.t())
            }
        };
        let mut rng = stream(config.seed, 0, Tag::Support);
        let mut support = sample(&mut rng, p, config.s0).into_vec();
        support.sort_unstable();
        let mut theta_0 = Array1::zeros(p);
        for &j in &support {
            theta_0[j] = config.b;
        }
        let signal = x.dot(&theta_0);
        Ok(Design {
            x,
            truth: SyntheticTruth {
                theta_0,
                support,
                sigma: config.sigma,
                noise_kind: config.noise,
            },
            seed: config.seed,
            signal,
        })
    }

    pub fn noise(&self, rep: usize) -> Array1<f64> {
        let n = self.x.nrows();
        let sigma = self.truth.sigma;
        let mut g = Gaussian::new(stream(self.seed, rep as u64 + 1, Tag::Noise));
        match self.truth.noise_kind {
            NoiseKind::Gaussian => Array1::from_shape_simple_fn(n, || sigma * g.sample()),
            NoiseKind::Rademacher => Array1::from_shape_simple_fn(n, || {
                if g.rng().next_u64() >> 63 == 1 {
                    sigma
                } else {
                    -sigma
                }
            }),
            NoiseKind::Exponential => {
                Array1::from_shape_simple_fn(n, || sigma * (-open_unit(g.rng()).ln() - 1.0))
            }
        }
    }

    /// Replicate `rep`: the fixed design with a fresh noise draw.
    pub fn replicate(&self, rep: usize) -> Result<Dataset> {
        Dataset::new(self.x.clone(), &self.signal + &self.noise(rep))
    }
}

/// Design, truth and the response of replicate `rep`.
pub fn generate(config: &SimConfig, rep: usize) -> Result<(Dataset, SyntheticTruth)> {
    let design = Design::draw(config)?;
    let data = design.replicate(rep)?;
    Ok((data, design.truth))
}
