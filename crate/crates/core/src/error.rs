use std::path::PathBuf;

use chrono::NaiveDate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing mandatory column `{column}` in {file}")]
    MissingColumn { file: String, column: String },

    #[error("malformed value `{value}` in {file} at row {row}")]
    Parse {
        file: String,
        row: usize,
        value: String,
    },

    #[error("calendar intersection is empty")]
    EmptyCalendar,

    #[error("series `{series}` has no valid value before {date}; cannot carry a prior value")]
    LeadingGap { series: String, date: String },

    #[error("series `{series}` has an invalid value {value} at {date}")]
    InvalidValue {
        series: String,
        date: String,
        value: f64,
    },

    #[error("non-positive price {value} at position {index}")]
    NonPositivePrice { index: usize, value: f64 },

    #[error("dataset has {have} dates but at least {need} are required (K + H + 1); short by {}", need - have)]
    DatasetTooShort { have: usize, need: usize },

    #[error("need at least {need} items, got {have}: {what}")]
    Insufficient {
        what: &'static str,
        need: usize,
        have: usize,
    },

    #[error("window must satisfy T > N, got N={n}, T={t}")]
    InvalidWindow { n: usize, t: usize },

    #[error("asset row {row} has zero standard deviation over the window")]
    ZeroVariance { row: usize },

    #[error("weight vector sums to zero")]
    ZeroWeightSum,

    #[error("svd did not converge for a {rows}x{cols} matrix")]
    SvdNonConvergence { rows: usize, cols: usize },

    #[error("histogram edges differ")]
    EdgeMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zero volatility; Sharpe ratio undefined")]
    ZeroVolatility,

    #[error("portfolio has zero value")]
    ZeroValue,

    #[error("{context} on {date}: {source}")]
    AtDate {
        date: NaiveDate,
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("no calibration point reaches the drawdown threshold {threshold}")]
    NoSurvivors { threshold: f64 },

    #[error("missing artifact {0}; run the previous stage first")]
    MissingArtifact(PathBuf),
}

impl Error {
    pub fn at(self, date: NaiveDate, context: impl Into<String>) -> Self {
        Error::AtDate {
            date,
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True when the failure stems from user input (files, config, data) rather
    /// than a numerical breakdown inside the pipeline.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::SvdNonConvergence { .. } => false,
            Error::AtDate { source, .. } => source.is_user_error(),
            _ => true,
        }
    }
}
