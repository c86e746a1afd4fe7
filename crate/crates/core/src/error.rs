use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("duplicate record for individual '{individual}', occasion '{occasion}'")]
    DuplicateKey { individual: String, occasion: String },

    #[error("cannot impute feature '{feature}': no non-missing observation in the dataset")]
    ImputationImpossible { feature: String },

    #[error("missing value in row {row}, feature '{feature}' (impute first)")]
    MissingValue { row: usize, feature: String },

    #[error("non-cumulative binary pattern in row {row}, feature '{feature}'")]
    NonCumulativePattern { row: usize, feature: String },

    #[error("degenerate margins: {0}")]
    DegenerateMargins(String),

    #[error("column '{column}' has zero variance; correlation basis undefined")]
    ConstantColumn { column: String },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("too few samples: need at least {needed}, found {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("no replication: every individual has a single observation")]
    NoReplication,

    #[error("adaptive quadrature did not converge after {intervals} subintervals (error estimate {error:e})")]
    QuadratureNonconvergence { intervals: usize, error: f64 },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no {0} comparisons in collection")]
    EmptyClass(&'static str),

    #[error("complete or quasi-complete separation detected")]
    SeparationDetected,

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("response contains only one class")]
    OneClassOnly,

    #[error("ordinal level {level} absent from the response")]
    LevelAbsent { level: usize },

    #[error("optimizer failed to converge in {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
