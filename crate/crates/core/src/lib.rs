//! Vamana-style proximity graph index for approximate nearest neighbor search.
//!
//! The index is built with lock-free batch-parallel insertion, queried with
//! greedy beam search, and can answer distances either exactly or from
//! RaBitQ codes. Distance strategies live behind the [`Metric`] trait and are
//! selected by name through a [`MetricRegistry`].
//!
//! ```
//! use std::sync::Arc;
//! use beamgraph::{build, gen_synthetic, search_knn, BuildParams, Distribution, ExactMetric, SearchParams};
//!
//! let data = Arc::new(gen_synthetic(500, 16, 7, Distribution::Clustered).unwrap());
//! let metric = ExactMetric::new(data.clone());
//! let params = BuildParams { degree_cap: 16, build_beam_width: 32, ..BuildParams::default() };
//! let graph = build(&metric, &params).unwrap();
//! let hits = search_knn(&graph, &metric, data.row(3), &SearchParams::new(32, 5).unwrap()).unwrap();
//! assert_eq!(hits[0].id, 3);
//! ```

pub mod build;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod graph;
pub mod io;
pub mod metric;
pub mod oracle;
pub mod rabitq;
pub mod search;
pub mod stats;

pub use build::{
    batch_insert, batch_insert_traced, build, build_traced, insert_stream, insert_stream_traced,
    BuildParams, BuildTrace, Edge, EdgeBuffer, PruneRecord,
};
pub use dataset::{gen_synthetic, Distribution, ElementKind, VectorDataset, VectorRef};
pub use distance::{dot, mips_augment, sq_l2, AugmentedDataset, DistanceKind};
pub use error::{Error, Result};
pub use graph::{medoid, robust_prune, Candidate, GraphIndex};
pub use io::GroundTruth;
pub use metric::{
    ExactMetric, Metric, MetricRegistry, MetricSource, QueryDistance, RabitqMetric,
};
pub use oracle::exact_knn;
pub use rabitq::{fit, rotate, QueryPrep, RaBitQIndex};
pub use search::{beam_search, search_knn, SearchParams, SearchResult, SearchStats};
