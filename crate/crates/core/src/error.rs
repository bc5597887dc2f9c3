use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration key is unknown, missing or malformed.
    #[error("config error at key `{key}`: {message}")]
    Config { key: String, message: String },

    /// The requested problem does not fit the configured limits.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// The Krylov error estimate stayed above tolerance with the full basis.
    #[error("step size too large: estimated error {estimate:.3e} > tolerance {tolerance:.3e} after {iterations} Lanczos iterations")]
    StepTooLarge {
        estimate: f64,
        tolerance: f64,
        iterations: usize,
    },

    /// The state norm drifted further than a propagation step may repair.
    #[error("norm drift {drift:.3e} exceeds the allowed {limit:.1e}")]
    NormDrift { drift: f64, limit: f64 },

    /// Detector precondition failed: the bands already overlap at t = 0.
    #[error("degenerate start: band gap D-_bd(0) - D+_in(0) = {gap} is not positive")]
    DegenerateStart { gap: f64 },

    /// Time evolution aborted; `last_good_t` is the last sampled time.
    #[error("propagation failed after t = {last_good_t}: {source}")]
    Propagation {
        last_good_t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors that stem from resource limits rather than bad input.
    pub fn is_capacity(&self) -> bool {
        match self {
            Error::Capacity(_) => true,
            Error::Propagation { source, .. } => source.is_capacity(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
