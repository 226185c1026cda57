use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("points are (numerically) antipodal: <x, y> = {dot}")]
    AntipodalPoints { dot: f64 },
    #[error("time {t} outside the horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("gradient tape does not match the current model parameters")]
    StaleTape,
    #[error("non-finite gradient at parameter {index}{context}")]
    NonFiniteGradient { index: usize, context: String },
    #[error("checkpoint format mismatch: {0}")]
    FormatMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("divergence mode {0} is not supported here")]
    DivergenceModeUnsupported(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite state during ODE integration at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("missing required columns {0:?}")]
    MissingColumns(Vec<String>),
    #[error("no valid rows left after filtering ({skipped} skipped)")]
    EmptyAfterFiltering { skipped: usize },
    #[error("density {value} exceeds rejection bound {bound}")]
    BoundViolation { value: f64, bound: f64 },
    #[error("invalid harmonic degree/order l = {l}, m = {m}")]
    InvalidHarmonic { l: usize, m: i64 },
    #[error("mixture weights invalid: {0}")]
    BadWeights(String),
    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("missing checkpoint {0}")]
    MissingCheckpoint(PathBuf),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, printed as the prefix of CLI errors.
    pub fn code(&self) -> &'static str {
        match self {
            Error::AntipodalPoints { .. } => "E_ANTIPODAL",
            Error::OutOfHorizon { .. } => "E_HORIZON",
            Error::EmptyDataset => "E_EMPTY_DATASET",
            Error::StaleTape => "E_STALE_TAPE",
            Error::NonFiniteGradient { .. } => "E_NONFINITE_GRAD",
            Error::FormatMismatch(_) => "E_FORMAT",
            Error::CorruptFile(_) => "E_CORRUPT",
            Error::DivergenceModeUnsupported(_) => "E_DIV_MODE",
            Error::ShapeMismatch(_) => "E_SHAPE",
            Error::NonFiniteState { .. } => "E_NONFINITE_STATE",
            Error::MissingColumns(_) => "E_MISSING_COLUMNS",
            Error::EmptyAfterFiltering { .. } => "E_EMPTY_AFTER_FILTER",
            Error::BoundViolation { .. } => "E_BOUND",
            Error::InvalidHarmonic { .. } => "E_HARMONIC",
            Error::BadWeights(_) => "E_WEIGHTS",
            Error::Config { .. } => "E_CONFIG",
            Error::MissingCheckpoint(_) => "E_MISSING_CHECKPOINT",
            Error::Csv(_) => "E_CSV",
            Error::Json(_) => "E_JSON",
            Error::Io(_) => "E_IO",
        }
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
