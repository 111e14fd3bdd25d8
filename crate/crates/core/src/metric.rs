//! Distance strategies used by search and construction.
//!
//! A [`Metric`] answers distances between stored vectors and prepared
//! queries. The exact metric reads the raw rows; the RaBitQ metric answers
//! from packed codes. Strategies are looked up by name through a
//! [`MetricRegistry`] so the command line can pick one at runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::dataset::{ElementKind, VectorDataset, VectorRef};
use crate::error::{invalid, Error, Result};
use crate::rabitq::{QueryPrep, RaBitQIndex};

/// Distances from one prepared query to stored vectors.
pub trait QueryDistance {
    fn distance(&self, id: u32) -> f32;
}

/// A distance strategy over a fixed set of stored vectors.
pub trait Metric: Send + Sync {
    fn name(&self) -> &str;

    /// Number of stored vectors addressable by id.
    fn len(&self) -> usize;

    fn dims(&self) -> usize;

    /// True when [`QueryDistance::distance`] returns exact squared distances.
    fn is_exact(&self) -> bool;

    /// The unquantized vectors, used for reranking and entry-point selection.
    fn exact_data(&self) -> &VectorDataset;

    fn prepare<'a>(&'a self, query: VectorRef<'a>) -> Result<Box<dyn QueryDistance + 'a>>;

    /// Prepares stored vector `id` as a query.
    fn prepare_point<'a>(&'a self, id: u32) -> Box<dyn QueryDistance + 'a>;
}

impl fmt::Debug for dyn Metric + '_ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Metric({}, {}×{})", self.name(), self.len(), self.dims())
    }
}

/// Squared Euclidean distance on the raw rows.
#[derive(Clone, Debug)]
pub struct ExactMetric {
    data: Arc<VectorDataset>,
}

impl ExactMetric {
    pub fn new(data: Arc<VectorDataset>) -> Self {
        Self { data }
    }
}

struct ExactQuery<'a> {
    data: &'a VectorDataset,
    query: VectorRef<'a>,
}

impl QueryDistance for ExactQuery<'_> {
    #[inline]
    fn distance(&self, id: u32) -> f32 {
        self.data.sq_dist_to(id as usize, self.query)
    }
}

impl Metric for ExactMetric {
    fn name(&self) -> &str {
        "exact"
    }

    fn len(&self) -> usize {
        self.data.len()
    }

    fn dims(&self) -> usize {
        self.data.dims()
    }

    fn is_exact(&self) -> bool {
        true
    }

    fn exact_data(&self) -> &VectorDataset {
        &self.data
    }

    fn prepare<'a>(&'a self, query: VectorRef<'a>) -> Result<Box<dyn QueryDistance + 'a>> {
        self.data.check_query(query)?;
        Ok(Box::new(ExactQuery {
            data: &self.data,
            query,
        }))
    }

    fn prepare_point<'a>(&'a self, id: u32) -> Box<dyn QueryDistance + 'a> {
        Box::new(ExactQuery {
            data: &self.data,
            query: self.data.row(id as usize),
        })
    }
}

/// Estimated squared distance from RaBitQ codes.
#[derive(Clone, Debug)]
pub struct RabitqMetric {
    index: Arc<RaBitQIndex>,
    data: Arc<VectorDataset>,
}

impl RabitqMetric {
    pub fn new(index: Arc<RaBitQIndex>, data: Arc<VectorDataset>) -> Result<Self> {
        if index.len() != data.len() || index.dims() != data.dims() {
            return Err(invalid(
                "quantizer",
                format!(
                    "codes cover {}×{}, dataset is {}×{}",
                    index.len(),
                    index.dims(),
                    data.len(),
                    data.dims()
                ),
            ));
        }
        Ok(Self { index, data })
    }

    pub fn quantizer(&self) -> &RaBitQIndex {
        &self.index
    }
}

struct RabitqQuery<'a> {
    index: &'a RaBitQIndex,
    prep: QueryPrep,
}

impl QueryDistance for RabitqQuery<'_> {
    #[inline]
    fn distance(&self, id: u32) -> f32 {
        self.index.estimate(id as usize, &self.prep)
    }
}

impl Metric for RabitqMetric {
    fn name(&self) -> &str {
        "rabitq"
    }

    fn len(&self) -> usize {
        self.index.len()
    }

    fn dims(&self) -> usize {
        self.index.dims()
    }

    fn is_exact(&self) -> bool {
        false
    }

    fn exact_data(&self) -> &VectorDataset {
        &self.data
    }

    fn prepare<'a>(&'a self, query: VectorRef<'a>) -> Result<Box<dyn QueryDistance + 'a>> {
        self.data.check_query(query)?;
        let prep = self.index.prep_query(&query.to_f32())?;
        Ok(Box::new(RabitqQuery {
            index: &self.index,
            prep,
        }))
    }

    fn prepare_point<'a>(&'a self, id: u32) -> Box<dyn QueryDistance + 'a> {
        let q = self.data.row(id as usize).to_f32();
        let prep = self
            .index
            .prep_query(&q)
            .expect("stored row matches quantizer dims");
        Box::new(RabitqQuery {
            index: &self.index,
            prep,
        })
    }
}

/// Inputs a metric factory may draw on.
#[derive(Clone, Debug)]
pub struct MetricSource {
    pub data: Arc<VectorDataset>,
    pub quantizer: Option<Arc<RaBitQIndex>>,
}

impl MetricSource {
    pub fn exact(data: Arc<VectorDataset>) -> Self {
        Self {
            data,
            quantizer: None,
        }
    }
}

pub type MetricFactory = Box<dyn Fn(&MetricSource) -> Result<Box<dyn Metric>> + Send + Sync>;

/// Named metric factories.
pub struct MetricRegistry {
    factories: BTreeMap<String, MetricFactory>,
}

impl MetricRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// Registry holding `exact` and `rabitq`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("exact", |src: &MetricSource| {
            Ok(Box::new(ExactMetric::new(src.data.clone())) as Box<dyn Metric>)
        });
        reg.register("rabitq", |src: &MetricSource| {
            let q = src
                .quantizer
                .clone()
                .ok_or_else(|| invalid("metric", "rabitq needs a fitted quantizer"))?;
            if src.data.kind() != ElementKind::F32 {
                // Codes are fitted on f32 rows; rerank against the same values.
                let widened = Arc::new(src.data.to_f32());
                return Ok(Box::new(RabitqMetric::new(q, widened)?) as Box<dyn Metric>);
            }
            Ok(Box::new(RabitqMetric::new(q, src.data.clone())?) as Box<dyn Metric>)
        });
        reg
    }

    /// Adds or replaces a factory.
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&MetricSource) -> Result<Box<dyn Metric>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str, source: &MetricSource) -> Result<Box<dyn Metric>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownMetric(name.to_string()))?;
        factory(source)
    }
}

impl Default for MetricRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, Distribution};
    use crate::rabitq::fit;

    #[test]
    fn registry_lists_and_creates_builtins() {
        let reg = MetricRegistry::with_builtins();
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["exact", "rabitq"]);
        let data = Arc::new(gen_synthetic(50, 8, 1, Distribution::Gaussian).unwrap());
        let exact = reg.create("exact", &MetricSource::exact(data.clone())).unwrap();
        assert_eq!(exact.name(), "exact");
        assert!(exact.is_exact());
        assert!(matches!(
            reg.create("rabitq", &MetricSource::exact(data.clone())),
            Err(Error::InvalidParam { .. })
        ));
        assert!(matches!(
            reg.create("nope", &MetricSource::exact(data.clone())),
            Err(Error::UnknownMetric(_))
        ));
        let q = Arc::new(fit(&data, 4, 3).unwrap());
        let src = MetricSource {
            data,
            quantizer: Some(q),
        };
        let m = reg.create("rabitq", &src).unwrap();
        assert!(!m.is_exact());
        assert_eq!(m.len(), 50);
    }

    #[test]
    fn custom_strategy_can_be_registered() {
        let mut reg = MetricRegistry::empty();
        reg.register("plain", |src: &MetricSource| {
            Ok(Box::new(ExactMetric::new(src.data.clone())) as Box<dyn Metric>)
        });
        let data = Arc::new(VectorDataset::from_f32(1, vec![0.0, 3.0]).unwrap());
        let m = reg.create("plain", &MetricSource::exact(data)).unwrap();
        let q = m.prepare(VectorRef::F32(&[1.0])).unwrap();
        assert_eq!(q.distance(0), 1.0);
        assert_eq!(q.distance(1), 4.0);
    }

    #[test]
    fn exact_prepare_validates_query() {
        let data = Arc::new(VectorDataset::from_f32(2, vec![0.0, 0.0]).unwrap());
        let m = ExactMetric::new(data);
        assert!(m.prepare(VectorRef::F32(&[1.0])).is_err());
        assert!(m.prepare(VectorRef::F32(&[1.0, f32::NAN])).is_err());
        assert_eq!(m.prepare_point(0).distance(0), 0.0);
    }
}
