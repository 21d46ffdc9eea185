//! LOBSTER ingestion: parsing, market-order inference, deletion placements,
//! label binning and windowed datasets.

pub mod bins;
pub mod dataset;
pub mod flow;
pub mod lobster;

use thiserror::Error;

pub use bins::{make_bins, BinSpec};
pub use dataset::{window_and_split, Dataset, DatasetConfig, Split};
pub use flow::{infer_market_orders, placements, FlowEvent, FlowKind, InferConfig};
pub use lobster::{parse_messages, parse_orderbook, MessageRecord};

/// LOBSTER prices are dollars times 10^4; one cent is 100 units.
pub const LOBSTER_TICK: i64 = 100;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} columns, got {got}")]
    Columns { line: usize, expected: usize, got: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("message and orderbook files differ in length ({messages} vs {books})")]
    LengthMismatch { messages: usize, books: usize },
    #[error("need at least {needed} events, got {got}")]
    TooFewEvents { needed: usize, got: usize },
    #[error("{distinct} distinct values cannot fill {classes} classes")]
    TooFewDistinct { distinct: usize, classes: usize },
    #[error("invalid bin request: {0}")]
    InvalidBins(String),
    #[error("dataset file: {0}")]
    Dataset(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
