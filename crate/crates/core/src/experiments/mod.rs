//! Data generators, perturbation protocols, loss-surface projections, sweeps
//! and the curves built on the lower modules.


pub mod curves;
pub mod data;
pub mod output;

pub mod perturb;
pub mod projection;
pub mod swiss;
pub mod sweep;


use thiserror::Error;

use crate::bayes_linear::BayesError;
use crate::measures::MeasureError;
use crate::nn::NnError;
use crate::spectral::SpectralError;

pub use curves::{
    bnn_laplace_curve, contraction_curve, double_descent_linear, theorem_check, BnnConfig, BnnRecord,
    ContractionConfig, ContractionRecord, DoubleDescentConfig, DoubleDescentRow, FeatureKind, TheoremConfig,
    TheoremReport,
};
pub use data::{gen_bnn_regression, gen_double_descent_features, gen_swiss_roll, gen_two_spirals, DoubleDescentData};
pub use perturb::{function_agreement, select_basis, subspace_perturb, BasisSelector, PerturbationSpec};
pub use projection::{loss_surface_projection, symmetric_grid, LossSurfaceGrid};
pub use swiss::{swiss_roll_replication, SwissRollConfig, SwissRollOutcome};
pub use sweep::{depth_width_sweep, rep_means, run_cell, sweep_table, SweepAxis, SweepConfig, SweepRow};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Bayes(#[from] BayesError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("serialization failed: {0}")]
    Serialize(String),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Thread pool with `jobs` workers; `jobs = 0` means one.
pub(crate) fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ExperimentError::InvalidConfig(format!("thread pool: {e}")))
}
