//! On-disk index directory: the base vectors, the graph, the build
//! parameters and an optional fitted quantizer.
//!
//! ```text
//! idx/
//!   data.fbin | data.u8bin
//!   graph.bin
//!   params.json
//!   rabitq.bin      (after `quantize`, or a quantized build)
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use beamgraph::io::{read_vectors_bin, write_vectors_bin};
use beamgraph::{BuildParams, ElementKind, GraphIndex, Metric, MetricRegistry, MetricSource, RaBitQIndex, VectorDataset};
use serde::{Deserialize, Serialize};

use crate::BenchError;

pub const GRAPH_FILE: &str = "graph.bin";
pub const PARAMS_FILE: &str = "params.json";
pub const QUANTIZER_FILE: &str = "rabitq.bin";

/// Contents of `params.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub degree_cap: usize,
    pub build_beam_width: usize,
    pub alpha: f32,
    pub max_batch: usize,
    pub max_batch_fraction: f64,
    pub two_pass: bool,
    /// Metric the graph was built with (`exact` or `rabitq`).
    pub build_metric: String,
    /// `(bits, seed)` of the stored quantizer, if any.
    pub quantizer: Option<(u32, u64)>,
}

impl IndexManifest {
    pub fn new(params: &BuildParams, build_metric: &str) -> Self {
        Self {
            degree_cap: params.degree_cap,
            build_beam_width: params.build_beam_width,
            alpha: params.alpha,
            max_batch: params.max_batch,
            max_batch_fraction: params.max_batch_fraction,
            two_pass: params.two_pass,
            build_metric: build_metric.to_string(),
            quantizer: None,
        }
    }

    pub fn build_params(&self) -> BuildParams {
        BuildParams {
            degree_cap: self.degree_cap,
            build_beam_width: self.build_beam_width,
            alpha: self.alpha,
            max_batch: self.max_batch,
            max_batch_fraction: self.max_batch_fraction,
            two_pass: self.two_pass,
            ..BuildParams::default()
        }
    }
}

/// A loaded index directory.
pub struct IndexDir {
    pub path: PathBuf,
    pub data: Arc<VectorDataset>,
    pub graph: GraphIndex,
    pub manifest: IndexManifest,
    pub quantizer: Option<Arc<RaBitQIndex>>,
}

pub fn data_file(kind: ElementKind) -> &'static str {
    match kind {
        ElementKind::U8 => "data.u8bin",
        ElementKind::F32 => "data.fbin",
    }
}

impl IndexDir {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref().to_path_buf();
        let manifest: IndexManifest =
            serde_json::from_slice(&fs::read(path.join(PARAMS_FILE))?)?;
        let data = [ElementKind::F32, ElementKind::U8]
            .into_iter()
            .map(|k| (k, path.join(data_file(k))))
            .find(|(_, p)| p.exists())
            .ok_or_else(|| {
                BenchError::Invalid(format!("{} holds no data.fbin or data.u8bin", path.display()))
            })
            .and_then(|(k, p)| Ok(read_vectors_bin(p, k)?))?;
        let graph = GraphIndex::load(path.join(GRAPH_FILE))?;
        if graph.active_count() != data.len() {
            return Err(BenchError::Invalid(format!(
                "graph has {} vertices, data file has {} rows",
                graph.active_count(),
                data.len()
            )));
        }
        let qpath = path.join(QUANTIZER_FILE);
        let quantizer = if qpath.exists() {
            let q = RaBitQIndex::load(qpath)?;
            if q.len() != data.len() || q.dims() != data.dims() {
                return Err(BenchError::Invalid(format!(
                    "quantizer covers {}×{}, data is {}×{}",
                    q.len(),
                    q.dims(),
                    data.len(),
                    data.dims()
                )));
            }
            Some(Arc::new(q))
        } else {
            None
        };
        Ok(Self {
            path,
            data: Arc::new(data),
            graph,
            manifest,
            quantizer,
        })
    }

    /// Writes every component, replacing the data file of the other
    /// element kind if present.
    pub fn save(&self) -> Result<(), BenchError> {
        fs::create_dir_all(&self.path)?;
        for kind in [ElementKind::F32, ElementKind::U8] {
            let p = self.path.join(data_file(kind));
            if kind != self.data.kind() && p.exists() {
                fs::remove_file(p)?;
            }
        }
        write_vectors_bin(self.path.join(data_file(self.data.kind())), &self.data)?;
        self.graph.save(self.path.join(GRAPH_FILE))?;
        fs::write(
            self.path.join(PARAMS_FILE),
            serde_json::to_vec_pretty(&self.manifest)?,
        )?;
        let qpath = self.path.join(QUANTIZER_FILE);
        match &self.quantizer {
            Some(q) => q.save(qpath)?,
            None if qpath.exists() => fs::remove_file(qpath)?,
            None => {}
        }
        Ok(())
    }

    pub fn source(&self) -> MetricSource {
        MetricSource {
            data: self.data.clone(),
            quantizer: self.quantizer.clone(),
        }
    }

    /// Instantiates the named metric over this directory's data.
    pub fn metric(&self, registry: &MetricRegistry, name: &str) -> Result<Box<dyn Metric>, BenchError> {
        Ok(registry.create(name, &self.source())?)
    }
}
