use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad classes of failure, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{family}: fitted mean at observation {index} is outside the admissible range (eta = {eta})")]
    Domain {
        family: &'static str,
        index: usize,
        eta: f64,
    },

    #[error("kernel window at u0 = {u0} holds {available} observations, at least {required} needed")]
    SparseWindow {
        u0: f64,
        available: usize,
        required: usize,
    },

    #[error("{0} matrix is singular")]
    Singular(&'static str),

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("at u0 = {u0}: {source}")]
    AtPoint { u0: f64, source: Box<Error> },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },

    #[error("the L0 penalty has no usable derivative; use best-subset selection instead")]
    UnsupportedPenalty,

    #[error("|beta0| = {0:e} is at or below the zero threshold; the coefficient must be set to zero")]
    BelowThreshold(f64),

    #[error("adaptive quadrature did not converge for kernel `{0}`")]
    Quadrature(String),

    #[error("effective number of parameters {effective} is not below n = {n}")]
    DegenerateFit { effective: f64, n: usize },

    #[error("every candidate failed ({0})")]
    AllFailed(String),

    #[error("{failed} of {total} {what} failed, above the {limit}% limit (first failure: {first})")]
    TooManyFailures {
        what: &'static str,
        failed: usize,
        total: usize,
        limit: u32,
        first: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn at_point(u0: f64, source: Error) -> Self {
        Error::AtPoint {
            u0,
            source: Box::new(source),
        }
    }

    pub fn stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidData(_) | Error::Csv(_) => ErrorCategory::Data,
            Error::InvalidArgument(_) | Error::UnsupportedPenalty | Error::Io(_) => {
                ErrorCategory::Input
            }
            Error::AtPoint { source, .. } | Error::Stage { source, .. } => source.category(),
            _ => ErrorCategory::Numerical,
        }
    }
}
