use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The receiver sits (numerically) on top of an anchor, so the line of
    /// sight is undefined.
    #[error("degenerate geometry at anchor {anchor}: receiver-anchor distance {distance:e} m")]
    DegenerateGeometry { anchor: usize, distance: f64 },

    #[error("singular normal matrix (scaled condition number {condition:e})")]
    SingularNormalMatrix { condition: f64 },

    #[error("singular Fisher information matrix (scaled condition number {condition:e})")]
    SingularFim { condition: f64 },

    /// A solver failure, tagged with the 1-based iteration it occurred in.
    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// Strips any iteration tag and returns the underlying failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::Iteration { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
