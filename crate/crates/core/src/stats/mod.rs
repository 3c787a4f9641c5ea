//! Classification metrics, bootstrap inference and regression fits.

pub mod bootstrap;
pub mod logistic;
pub mod metrics;
pub mod ols;
pub mod quantile;

use thiserror::Error;

pub use bootstrap::{bootstrap_ci, bootstrap_report, paired_pvalue, BootstrapOptions, MetricReport};
pub use logistic::{LogisticFit, LogisticOptions, LogisticProblem};
pub use metrics::{brier, pr_auc, roc_auc, Metric};
pub use ols::{ols_fit, OlsFit};
pub use quantile::{linear_quantile_sorted, quantile};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("input is empty")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("labels contain a single class")]
    SingleClass,
    #[error("labels contain no positives")]
    NoPositives,
    #[error("probability {value} at row {index} is outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("non-finite value at row {0}")]
    NonFinite(usize),
    #[error(
        "{degenerate} of {total} bootstrap resamples lost a class; use a larger test set"
    )]
    DegenerateResamples { degenerate: usize, total: usize },
    #[error("quantile level {0} is outside [0, 1]")]
    BadLevel(f64),
    #[error("logistic fit did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("logistic fit diverges, the data look separable; set a positive l2 penalty")]
    Separation,
    #[error("information matrix is singular")]
    Singular,
    #[error("predictor has zero variance")]
    ZeroVariance,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
}

pub(crate) fn check_len(a: usize, b: usize) -> Result<(), StatsError> {
    if a != b {
        return Err(StatsError::LengthMismatch { left: a, right: b });
    }
    Ok(())
}
