use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad dimensions, out-of-range ranks, malformed parameters.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A penalty cannot be built at these dimensions (the denominators of
    /// the unknown-variance penalties go nonpositive, or `r_max` collapses to 0).
    #[error("infeasible penalty: {0}")]
    Infeasible(String),

    /// The design spans the whole sample space, so `Y - PY` carries no
    /// information about the noise level.
    #[error("variance not estimable: {0}")]
    VarianceNotEstimable(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Argument(_) => "argument",
            Error::Infeasible(_) => "infeasible",
            Error::VarianceNotEstimable(_) => "variance-not-estimable",
            Error::Numerical(_) => "numerical",
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
        }
    }

    /// True for the errors that mean "this estimator cannot run here"
    /// rather than "the caller did something wrong".
    pub fn is_infeasibility(&self) -> bool {
        matches!(self, Error::Infeasible(_) | Error::VarianceNotEstimable(_))
    }
}

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
