use thiserror::Error;

pub type Result<T, E = PasaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PasaError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("mean {mu} is outside the domain of the {family} family")]
    InvalidMean { family: &'static str, mu: f64 },

    #[error("information matrix is rank deficient (pivot {pivot} collapsed to {value:e})")]
    RankDeficient { pivot: usize, value: f64 },

    #[error("singular weight matrix: {0}")]
    Singular(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e}); last iterate {last:?}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("coefficients diverged past the cap {cap} (|beta| = {norm:e}); data are likely separated")]
    Separation { cap: f64, norm: f64 },

    #[error("bernoulli outcome at row {row} is {value}, expected 0 or 1")]
    InvalidOutcome { row: usize, value: f64 },

    #[error("variance function vanished at observation {index}")]
    DegenerateVariance { index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("ingestion error at row {row}, column `{column}`: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("AUC is undefined when labels contain a single class")]
    UndefinedAuc,

    #[error("block {block}{}: {source}", batch.map(|b| format!(", batch {b}")).unwrap_or_default())]
    InBlock {
        block: usize,
        batch: Option<usize>,
        #[source]
        source: Box<PasaError>,
    },

    #[error("{failed} of {total} replications failed; first failure: {first}")]
    Replications {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PasaError {
    pub fn in_block(self, block: usize, batch: Option<usize>) -> Self {
        PasaError::InBlock {
            block,
            batch,
            source: Box::new(self),
        }
    }

    /// Innermost error once block/batch context is stripped.
    pub fn root(&self) -> &PasaError {
        match self {
            PasaError::InBlock { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures caused by the numbers rather than by the inputs' shape or config.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            PasaError::InvalidMean { .. }
                | PasaError::RankDeficient { .. }
                | PasaError::Singular(_)
                | PasaError::NonConvergence { .. }
                | PasaError::Separation { .. }
                | PasaError::DegenerateVariance { .. }
                | PasaError::UndefinedAuc
                | PasaError::Replications { .. }
        )
    }

    /// Identification failures: the model cannot be fit on this design at all.
    pub fn is_identification(&self) -> bool {
        matches!(
            self.root(),
            PasaError::RankDeficient { .. }
                | PasaError::Separation { .. }
                | PasaError::Singular(_)
                | PasaError::NonConvergence { .. }
        )
    }
}
