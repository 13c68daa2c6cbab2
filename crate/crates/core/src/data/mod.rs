//! Tabular data: schema, CSV ingestion, encoding, normalization and splits.

mod encode;
mod schema;
mod split;
mod table;

pub use encode::{ColumnStats, Encoded, EncodedRow, EncodedValue, Normalizer};
pub use schema::{Attribute, AttributeKind, TableSchema, Task};
pub use split::{split, SplitIndices, SplitPart, SplitSpec};
pub use table::{Dataset, RawValue};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}, column {column:?}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("row {row}, column {column:?}: unknown category token {token:?}")]
    UnknownCategory {
        row: usize,
        column: String,
        token: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("configuration error: {0}")]
    Config(String),
}
