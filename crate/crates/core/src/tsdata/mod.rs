//! Multivariate time-series ingestion, gap repair, standardization,
//! windowing and train/test splitting.

mod dataset;
mod repair;
mod standardize;
mod synthetic;
mod windows;

pub use dataset::{load_csv, read_csv, write_csv, CsvSchema, TimeSeriesDataset};
pub use repair::{repair_gaps, DropReason, DroppedSeries, GapFill, RepairReport, DEFAULT_MAX_GAP};
pub use standardize::{standardize, SeriesStats, StandardizeReport};
pub use synthetic::{grouped_ar, GroupedArSpec};
pub use windows::{make_windows, split, write_split_csv, SplitMode, SplitSpec, WindowManifest, WindowedRegressionSet};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: time stamp `{stamp}` does not increase")]
    NonMonotoneTime { line: usize, stamp: String },
    #[error("line {line}: duplicate time stamp `{stamp}`")]
    DuplicateStamp { line: usize, stamp: String },
    #[error("irregular time step at index {index}: expected {expected}, got {got}")]
    IrregularStep { index: usize, expected: i64, got: i64 },
    #[error("duplicate series name `{0}`")]
    DuplicateName(String),
    #[error("need at least 2 series, got {0}")]
    TooFewSeries(usize),
    #[error("every series was dropped")]
    AllSeriesDropped,
    #[error("unknown series `{0}`")]
    UnknownSeries(String),
    #[error("window {window} exceeds the usable length {usable}")]
    WindowTooLong { window: usize, usable: usize },
    #[error("degenerate split: {train} train / {test} test samples")]
    DegenerateSplit { train: usize, test: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}
