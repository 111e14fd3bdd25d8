//! Measurement harness for beamgraph indexes: recall@k, recall/throughput
//! sweeps, on-disk index directories and the `beamgraph` command line.

pub mod cli;
pub mod index_dir;
pub mod recall;
pub mod sweep;

pub use index_dir::{IndexDir, IndexManifest};
pub use recall::{exact_distance, recall_at_k, RECALL_EPSILON};
pub use sweep::{run_queries, sweep, write_csv, SweepConfig, SweepPoint, CSV_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] beamgraph::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
