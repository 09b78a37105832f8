//! Run-table ingestion, configuration and report files.

mod config;
mod runs;
pub mod svg;
mod tables;

pub use config::{parse_alpha_list, AnalysisConfig, LambdaChoice};
pub use runs::{read_run_table, read_run_table_from, RawRunTable, RawSeries, RUN_TABLE_HEADER};
pub use tables::{format_value, read_index_table, IndexKind, IndexRecord};
pub(crate) use tables::{write_index_table, write_normalized_table, CsvSink};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("line {row}: {message}")]
    Parse { row: u64, message: String },

    #[error("line {row}: unknown run label `{label}`; allowed labels are {allowed}")]
    Vocabulary { row: u64, label: String, allowed: String },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
