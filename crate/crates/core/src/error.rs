use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("profile has {got} entries but the instance has {expected} creators")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("creator index {index} out of range for {n} creators")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("sharing threshold is undefined for creator {0} with zero quality")]
    ZeroQuality(usize),

    #[error("total quality is zero")]
    ZeroTotalQuality,

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("no root bracket for c(z) = mu z^gamma after {0} doublings; cost is not superlinear")]
    BracketExpansion(usize),

    #[error("{method} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("instance is not homogeneous")]
    Heterogeneous,

    #[error("cost function of creator {0} has zero strong-convexity modulus")]
    ZeroStrongConvexity(usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
