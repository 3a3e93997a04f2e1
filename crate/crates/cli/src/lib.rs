//! Experiment runner: benchmark grids, criterion curves and permutation
//! sweeps over the synthetic scenarios, with JSON and CSV reports.

pub mod benchmark;
pub mod config;
pub mod curve;
pub mod output;
pub mod stats;
pub mod sweep;

pub use benchmark::{fit_procedure, run_benchmark, ExperimentReport, ProcedureFit, RepetitionRow};
pub use config::{ExperimentConfig, Procedure};
pub use curve::{run_curve, CurveRow, CurveTable};
pub use sweep::{run_permutation_sweep, SweepOptions, SweepRow};
