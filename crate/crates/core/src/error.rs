//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A function evaluation produced non-finite values or was queried
    /// outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A distribution failed its type invariants (normalization, positive
    /// definiteness, weight positivity).
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// All probability mass sits on a single point; moments are undefined.
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    /// The requested operation is not defined for this representation.
    #[error("unsupported representation: {0}")]
    UnsupportedRepresentation(String),

    /// A splitting integrator was asked to step a non-separable energy.
    #[error("unsupported scheme: {0}")]
    UnsupportedScheme(String),

    /// Pushforward needs structure (an inverse, linearity) the map lacks.
    #[error("unsupported pushforward: {0}")]
    UnsupportedPushforward(String),

    /// The internal-transform machinery was given a configuration outside
    /// the uncorrelated equal-variance family it is defined on.
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    /// An internal transform with zero norm.
    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    /// Coincident sample points make k-nearest-neighbor distances zero.
    /// Re-run with jitter enabled to break the tie explicitly.
    #[error("duplicate points in ensemble ({0}); enable jitter to proceed")]
    JitterRequired(String),

    /// A scenario document failed schema or range validation. `path` is the
    /// dotted key path of the offending entry.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// A name was not found in the builtin registry.
    #[error("unknown {kind} `{name}` (valid: {valid})")]
    UnknownName {
        kind: &'static str,
        name: String,
        valid: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Parse(String),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad configuration or usage rather than by
    /// runtime numerics. The CLI maps these to a distinct exit code.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::UnknownName { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
