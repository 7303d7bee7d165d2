use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("segment index {index} out of range 1..={num_segments}")]
    SegmentOutOfRange { index: usize, num_segments: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "policy class has {count} stationary policies, above the cap of {cap}; \
         shrink the instance (fewer states or actions) or raise the cap"
    )]
    PolicyCapExceeded { count: f64, cap: u64 },

    #[error("logistic MLE did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    MleNotConverged { iterations: usize, grad_norm: f64 },

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error(
        "singular design: best minimum eigenvalue {lambda_min:e} over policy mixtures; \
         the design needs some policy distribution under which the segment covariance is invertible"
    )]
    SingularDesign { lambda_min: f64 },

    #[error("rounding guarantee unmet: realized inverse norm {achieved:e} exceeds (1+gamma) bound {bound:e}")]
    RoundingFailed { achieved: f64, bound: f64 },

    #[error("invalid instance recipe: {0}")]
    InvalidRecipe(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed results file {}: {msg}", path.display())]
    Malformed { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn at_episode(self, episode: usize) -> Self {
        Error::Episode { episode, source: Box::new(self) }
    }
}
