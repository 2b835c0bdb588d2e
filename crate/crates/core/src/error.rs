use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("feature column `{0}` has no observed values")]
    EmptyColumn(String),
    #[error("labels contain a single class; both outcomes are required")]
    SingleClass,
    #[error("no positive labels")]
    NoPositives,
    #[error("stratum {0} has no rows")]
    EmptyStratum(usize),
    #[error("missing evidence artifact: {0}")]
    MissingArtifact(String),
    #[error("unknown arm `{0}`")]
    UnknownArm(String),
    #[error("rating {0} outside 1..=5")]
    RatingOutOfRange(i64),
    #[error("reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("empty arm catalog")]
    EmptyCatalog,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{stage} stage failed: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
