//! Dataset ingestion and analysis: CSV loading, column profiles, problem-type
//! inference, stratified splitting, imbalance detection and meta-features.

mod meta;
mod problem;
mod profile;
mod split;
mod table;

pub use meta::{compute_meta_features, MetaFeatures, LANDMARK_MAX_ROWS};
pub use problem::{
    detect_imbalance, infer_problem_type, validate_problem_override, ImbalanceInfo, ProblemType,
    DEFAULT_IMBALANCE_THRESHOLD, MAX_INTEGRAL_CLASSES,
};
pub use profile::{
    looks_like_date, nearest_rank, parse_number, profile_column, profile_table, ColumnProfile,
    Moments, Percentiles,
};
pub use split::{stratified_split, Split, DEFAULT_VALID_FRACTION, MIN_SPLIT_ROWS};
pub use table::{load_csv, MissingValues, RawTable};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("target column {0:?} not found in header")]
    MissingTarget(String),
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("no data rows")]
    EmptyData,
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("target has a single distinct value")]
    DegenerateTarget,
    #[error("invalid problem type override: {0}")]
    InvalidOverride(String),
    #[error("need at least 10 rows to split, got {0}")]
    TooFewRows(usize),
    #[error("validation fraction must be in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("imbalance detection requires binary classification, got {0}")]
    WrongProblemType(String),
}
