//! Synthetic experiments: data generation, the Monte-Carlo runner and
//! diagnostic export.

mod design;
mod export;
mod rng;
mod runner;

pub use design::{circulant_sigma, generate, Design, DesignKind, NoiseKind, SyntheticTruth};
pub use export::export_diagnostics;
pub use runner::{run_configuration, Analysis, Experiment, SimConfig, SimulationOutcome};
