//! Label-muddling regularization for linear regression.
//!
//! Regularization parameters are calibrated on the training sample alone by
//! minimizing the gap between the residual norm on the real labels and the
//! mean residual norm on label-permuted copies of the data. The crate
//! provides the ridge, gated and aggregated estimator families, the
//! criterion with its analytic gradient, ADAM-driven fitting procedures,
//! cross-validated baselines, synthetic scenarios and evaluation metrics.

pub mod baselines;
pub mod criterion;
pub mod dataset;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod metrics;
pub mod optimizer;
pub mod permutation;

pub use dataset::{norm_n, standardize, standardize_with, Dataset, Standardizer};
pub use error::{MlrError, Result};
pub use estimators::{Family, GateSpread, GateVector, HyperParams};
pub use permutation::{apply_permutation, sample_permutations, PermutationSet};
