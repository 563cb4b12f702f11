//! Generalized varying-coefficient partially linear models
//! `g(mu) = X' alpha(U) + Z' beta`: local quasi-likelihood fitting, penalized
//! selection of the parametric covariates, generalized likelihood ratio tests
//! and a Monte Carlo lab.

pub mod bandwidth;
pub mod data;
pub mod error;
pub mod estimator;
pub mod family;
pub mod glrt;
pub mod kernel;
pub mod local;
mod newton;
pub mod penalty;
pub mod sim;
pub mod subset;

pub use bandwidth::{select_bandwidth_cv, CvResult};
pub use data::{read_csv, Dataset, Role, RoleMap};
pub use error::{Error, ErrorCategory, Result};
pub use estimator::{
    backfit, effective_df, fit_penalized, fit_unpenalized, gcv_score, sandwich_cov, select_lambda, BackfitOptions,
    LambdaPolicy, LambdaSelection, PathPoint, SemiEstimator, SemiFit, UnpenalizedFit,
};
pub use family::{deviance, quasi_loglik, Family};
pub use glrt::{bootstrap_null, glrt, glrt_df, glrt_with_bootstrap, GlrtResult, PenaltyPolicy};
pub use kernel::{kernel_constants, Kernel, KernelConstants, KernelSpec};
pub use local::{alpha_on_grid, local_fit_alpha, local_fit_joint, local_quasi_score, undersmooth, CoefficientCurves, LocalFit};
pub use penalty::{lqa_weight, penalty_deriv, penalty_value, PenaltyKind, PenaltySpec};
pub use subset::{best_subset, criterion_lambda, oracle_fit, Criterion, SubsetResult};
