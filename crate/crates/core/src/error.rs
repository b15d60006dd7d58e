use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("simulator failed at {point:?}: {message}")]
    Simulator { point: Vec<f64>, message: String },

    #[error("degenerate reference: accumulated mean has zero norm while scoring {index}")]
    DegenerateReference { index: String },

    #[error("kernel matrix is not positive definite")]
    IllConditionedKernel,

    #[error("GP training failed: {0}")]
    TrainingFailed(String),

    #[error("variance indicator undefined for a term with no retained PCA modes")]
    UndefinedIndicator,

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("decomposition aborted at order {order} with {selected} indices selected: {source}")]
    DecompositionAborted {
        order: usize,
        selected: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("archive: {0}")]
    Archive(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, actual })
        }
    }

    /// Tags the error with the pipeline stage it came from.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
