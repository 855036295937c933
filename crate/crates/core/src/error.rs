use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("duplicate example_id {0:?}")]
    DuplicateExample(String),

    #[error("missing output for example {example_id:?} and model {model_id:?}")]
    MissingOutput {
        example_id: String,
        model_id: String,
    },

    #[error("model {model_id:?}: score vector of length {found} at example {example_id:?}, expected {expected}")]
    ScoreLength {
        model_id: String,
        example_id: String,
        expected: usize,
        found: usize,
    },

    #[error("model {model_id:?} at example {example_id:?}: prediction {prediction} is not the arg-max of its scores")]
    PredictionMismatch {
        model_id: String,
        example_id: String,
        prediction: u32,
    },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("unknown model {0:?}")]
    UnknownModel(String),

    #[error("unknown example {0:?}")]
    UnknownExample(String),

    #[error("feature {feature:?} unavailable for model {model_id:?} at example {example_id:?}")]
    MissingFeature {
        feature: String,
        model_id: String,
        example_id: String,
    },

    #[error("feature {0:?} not present")]
    FeatureNotFound(String),

    #[error("confidence features need at least two finite scores")]
    FeaturesUnavailable,

    #[error("cannot fit {0} on empty input")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("model {0:?} is not reachable from the source vertex")]
    Unreachable(String),

    #[error("invalid cost graph: {0}")]
    CostGraph(String),

    #[error("chain {0:?} is not a path in the cost graph")]
    NotAChain(Vec<String>),

    #[error("ensemble component {0:?} has no score vectors")]
    MissingScores(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("element {0:?} is not covered by any set")]
    Uncoverable(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
