//! De-biased LASSO inference for high-dimensional linear regression.
//!
//! The pipeline is: fit a sparse model ([`lasso`]), build a decorrelating
//! matrix `M` row by row ([`decorrelate`]), correct the LASSO estimate
//! ([`debias`]) and turn the corrected estimate into intervals, p-values and
//! family-wise tests ([`infer`]). [`sim`] generates synthetic instances and
//! runs Monte-Carlo experiments on top of the same pipeline.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub(crate) mod cd;
pub mod debias;
pub mod decorrelate;
pub mod error;
pub mod infer;
pub mod lasso;
pub(crate) mod linalg;
pub mod model;
pub mod normal;
pub mod sim;

pub use debias::{bias_decomposition, debias, empirical_bias, BiasDiagnostics, DebiasedFit};
pub use decorrelate::{
    build_decorrelator, compatibility_constant_bruteforce, generalized_coherence, solve_row,
    solve_row_bounded, DecorrelationOptions, Decorrelator, RowSolution,
};
pub use error::{Error, Result};
pub use infer::{
    confidence_intervals, joint_region, oracle_power_bound, p_values, power_function,
    test_family, InferenceReport, JointRegion,
};
pub use lasso::{lasso_fit, scaled_lasso_fit, soft_threshold, LassoFit, ScaledLassoFit, SolverOptions, SparseFit};
pub use model::{sample_covariance, Dataset, ProblemScale, SampleCovariance};
pub use normal::{normal_cdf, normal_quantile, normal_sf};
