use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library.
///
/// Variants are split into input validation problems and numerical
/// failures; [`Error::is_numerical`] is what the CLI maps to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time-tag stream is not sorted at record {index}")]
    UnsortedStream { index: usize },

    #[error("time-tag stream contains no laser sync (channel 0) records")]
    NoSync,

    #[error("visibility undefined: side peaks contain no counts")]
    UndefinedVisibility,

    #[error("unphysical input: {0}")]
    Unphysical(String),

    #[error("target flip {target} unreachable, maximum achievable flip is {max_flip:.6}")]
    UnreachableFlip { target: f64, max_flip: f64 },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("fit did not converge after {evaluations} evaluations (objective {objective})")]
    NotConverged {
        evaluations: usize,
        objective: f64,
        best: Box<crate::fitting::FitResult>,
    },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("undersampled run: expected {expected:.1} counts in the weakest side peak, need >= {needed}; use at least {required_cycles} cycles")]
    Undersampled {
        expected: f64,
        needed: f64,
        required_cycles: u64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical procedure on otherwise valid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::NoSolution(_)
                | Error::UnreachableFlip { .. }
                | Error::Degenerate(_)
                | Error::UndefinedVisibility
        )
    }
}
