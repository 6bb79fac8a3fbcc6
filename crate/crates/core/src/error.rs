use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate match id `{0}`")]
    DuplicateMatchId(String),
    #[error("unknown position `{0}`")]
    UnknownPosition(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("game lines span more than one match ({0} and {1})")]
    MixedMatches(String, String),

    #[error("unknown team `{0}`")]
    UnknownTeam(String),
    #[error("unknown league `{0}`")]
    UnknownLeague(String),
    #[error("team `{0}` has no complete league/country/continent ancestry")]
    BrokenAncestry(String),
    #[error("out-of-order date: {got} is before {last}")]
    OutOfOrderDate { last: NaiveDate, got: NaiveDate },

    #[error("no data for entity")]
    NoData,
    #[error("league `{0}` has no entity with a feature value")]
    EmptyLeague(String),
    #[error("team metric `{metric}` is zero but position `{position}` is not")]
    ZeroDenominator { metric: String, position: String },
    #[error("insufficient data: need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("singular design matrix")]
    SingularDesign,
    #[error("model has not been fitted")]
    UnfittedModel,

    #[error("input has {got} features, network expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training loss diverged")]
    DivergedLoss,
    #[error("missing entity: {0}")]
    MissingEntity(String),

    #[error("all weights are zero")]
    AllZeroWeights,
    #[error("no candidates remain after filtering")]
    EmptyAfterFilters,
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("scenario sets do not match: {0}")]
    ScenarioMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name used by the CLI and the HTTP service.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedRow { .. } => "MalformedRow",
            Error::DuplicateMatchId(_) => "DuplicateMatchId",
            Error::UnknownPosition(_) => "UnknownPosition",
            Error::UnknownMetric(_) => "UnknownMetric",
            Error::MixedMatches(..) => "MixedMatches",
            Error::UnknownTeam(_) => "UnknownTeam",
            Error::UnknownLeague(_) => "UnknownLeague",
            Error::BrokenAncestry(_) => "BrokenAncestry",
            Error::OutOfOrderDate { .. } => "OutOfOrderDate",
            Error::NoData => "NoData",
            Error::EmptyLeague(_) => "EmptyLeague",
            Error::ZeroDenominator { .. } => "ZeroDenominator",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::SingularDesign => "SingularDesign",
            Error::UnfittedModel => "UnfittedModel",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::EmptyDataset => "EmptyDataset",
            Error::DivergedLoss => "DivergedLoss",
            Error::MissingEntity(_) => "MissingEntity",
            Error::AllZeroWeights => "AllZeroWeights",
            Error::EmptyAfterFilters => "EmptyAfterFilters",
            Error::EmptyCohort => "EmptyCohort",
            Error::ScenarioMismatch(_) => "ScenarioMismatch",
            Error::Config(_) => "Config",
            Error::SchemaVersion(_) => "SchemaVersion",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}
