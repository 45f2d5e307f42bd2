use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation (negative width, E <= 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Mismatched grids or vector lengths.
    #[error("shape error: {0}")]
    Shape(String),

    /// A formula used outside its range of validity.
    #[error("validity error: {0}")]
    Validity(String),

    /// A model that cannot produce a valid expectation.
    #[error("model error: {0}")]
    Model(String),

    /// A linear map with zero slope that cannot be inverted.
    #[error("degenerate map: {0}")]
    Degenerate(String),

    #[error("infinite negative log-likelihood: bin {bin} has {observed} counts but zero expectation")]
    InfiniteNll { bin: usize, observed: u64 },

    #[error("minimizer did not converge after {iterations} iterations (best statistic {best}); trace: {trace}")]
    NonConvergence {
        iterations: usize,
        best: f64,
        trace: String,
    },

    /// Posterior scan could not enclose the requested probability mass.
    #[error("range error: {0}")]
    Range(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
