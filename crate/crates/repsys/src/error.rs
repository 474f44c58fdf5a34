use crate::ingest::{ConsumerId, ProductId};

/// Crate-wide error type. Variants are grouped by exit class: configuration
/// mistakes (exit 1), bad input data (exit 2), and broken internal contracts
/// (exit 3).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {reason}: `{text}`")]
    Malformed {
        line: usize,
        reason: String,
        text: String,
    },

    #[error("line {line}: rating {rating} outside [0.5, 5.0]: `{text}`")]
    RatingRange {
        line: usize,
        rating: f64,
        text: String,
    },

    #[error("input contains no rating records")]
    EmptyInput,

    #[error("invalid rating record (consumer {consumer}, product {product}): {reason}")]
    InvalidRecord {
        consumer: ConsumerId,
        product: ProductId,
        reason: String,
    },

    #[error("unknown consumer id {0}")]
    UnknownConsumer(ConsumerId),

    #[error("unknown product id {0}")]
    UnknownProduct(ProductId),

    #[error("no weight for consumer {0}")]
    MissingWeight(ConsumerId),

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("no profiles to scale")]
    EmptyProfiles,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("expected {expected} features, got {got}")]
    FeatureArity { expected: usize, got: usize },

    #[error("fold count {k} invalid for {n} consumers")]
    BadFoldCount { k: usize, n: usize },

    #[error("fold plan does not cover exactly the matrix's consumers")]
    PlanMismatch,

    #[error("score tables cover different product sets")]
    ProductSetMismatch,

    #[error("need at least {need} items, got {got}")]
    TooFewItems { need: usize, got: usize },

    #[error("ranking is fully tied; tau undefined")]
    DegenerateRanking,

    #[error("product {0} has ratings but no score")]
    MissingScore(ProductId),

    #[error("numerical failure: {0}")]
    Numerical(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code class: 1 usage/config, 2 data, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::BadFoldCount { .. } => 1,
            Error::Malformed { .. }
            | Error::RatingRange { .. }
            | Error::EmptyInput
            | Error::InvalidRecord { .. }
            | Error::MissingScore(_)
            | Error::ProductSetMismatch
            | Error::TooFewItems { .. }
            | Error::DegenerateRanking
            | Error::Io(_) => 2,
            Error::UnknownConsumer(_)
            | Error::UnknownProduct(_)
            | Error::MissingWeight(_)
            | Error::EmptyTrainingSet
            | Error::EmptyProfiles
            | Error::NonFinite(_)
            | Error::FeatureArity { .. }
            | Error::PlanMismatch
            | Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
