use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the estimators, operators and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller supplied an argument outside an operation's contract.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The location iterate left the region where the update is defined,
    /// i.e. the tanh denominator `z_nd - |theta|^2 / d` is not positive.
    #[error("iterate outside domain: {0}")]
    Domain(String),

    /// Quadrature or adaptive integration failed to stabilise.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A free-covariance component lost all of its responsibility mass.
    #[error("component {component} collapsed (responsibility mass {mass:e})")]
    ComponentCollapse { component: usize, mass: f64 },

    /// An EM step failed; the iteration index is attached.
    #[error("EM step {iteration} failed: {source}")]
    Step {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    /// Too many trials of an experiment failed.
    #[error("experiment failed: {0}")]
    Experiment(String),

    /// An `--assert` acceptance threshold was violated.
    #[error("threshold violated: {0}")]
    Threshold(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Strips `Step` wrappers and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Argument(_) | Error::Json(_) => 2,
            Error::Threshold(_) => 4,
            Error::Io(_) | Error::Csv(_) => 1,
            _ => 3,
        }
    }
}
