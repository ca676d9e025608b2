//! Embedded block-oriented column store and query executor.

mod exec;
pub mod format;
pub mod sample;
mod store;
mod table;
mod value;

pub use exec::{execute, ExecOptions, ResultTable, SampleInfo};
pub use store::{parse_schema, Store};
pub use table::{BlockTable, TableStats};
pub use value::{Column, DataType, Value};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("corrupt table file: {0}")]
    Corrupt(String),
    #[error("table '{0}' already exists (use replace to overwrite)")]
    Duplicate(String),
    #[error("unknown table '{0}'")]
    UnknownTable(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("ambiguous column '{0}'")]
    Ambiguous(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("arithmetic overflow: {0}")]
    Overflow(String),
    #[error("{0}")]
    Invalid(String),
}

impl From<csv::Error> for EngineError {
    fn from(e: csv::Error) -> Self {
        let row = e.position().map_or(0, |p| p.record() as usize);
        EngineError::Csv { row, message: e.to_string() }
    }
}
