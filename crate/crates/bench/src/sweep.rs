//! Recall/throughput sweeps over beam widths.

use std::io::Write;
use std::time::Instant;

use beamgraph::{search_knn, DistanceKind, GraphIndex, GroundTruth, Metric, SearchParams, VectorDataset};
use rayon::prelude::*;
use serde::Serialize;

use crate::recall::{exact_distance, recall_at_k};
use crate::BenchError;

/// One row of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub beam_width: usize,
    pub k: usize,
    pub recall: f64,
    pub qps: f64,
    pub mean_latency_us: f64,
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub k: usize,
    pub beam_widths: Vec<usize>,
    pub rerank: bool,
    /// Worker count for the query batch; `None` uses all hardware threads.
    pub threads: Option<usize>,
    /// Convention of the ground-truth distances.
    pub distance: DistanceKind,
}

impl SweepConfig {
    pub fn new(k: usize, beam_widths: Vec<usize>) -> Self {
        Self {
            k,
            beam_widths,
            rerank: false,
            threads: None,
            distance: DistanceKind::SquaredEuclidean,
        }
    }
}

/// Runs every query once at `params`, in parallel. Returns per-query ids and
/// the summed per-query latency in microseconds.
pub fn run_queries(
    graph: &GraphIndex,
    metric: &dyn Metric,
    queries: &VectorDataset,
    params: &SearchParams,
) -> Result<(Vec<Vec<u32>>, f64), BenchError> {
    let out: Vec<(Vec<u32>, f64)> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let t = Instant::now();
            let hits = search_knn(graph, metric, queries.row(q), params)?;
            let us = t.elapsed().as_secs_f64() * 1e6;
            Ok((hits.into_iter().map(|c| c.id).collect(), us))
        })
        .collect::<Result<_, BenchError>>()?;
    let total_us = out.iter().map(|r| r.1).sum();
    Ok((out.into_iter().map(|r| r.0).collect(), total_us))
}

/// For each beam width: one untimed warmup pass, then a timed pass over all
/// queries. Only search wall time enters the QPS figure.
pub fn sweep(
    graph: &GraphIndex,
    metric: &dyn Metric,
    queries: &VectorDataset,
    gt: &GroundTruth,
    config: &SweepConfig,
) -> Result<Vec<SweepPoint>, BenchError> {
    if config.k == 0 || config.k > gt.k {
        return Err(BenchError::Invalid(format!(
            "k = {} must lie in 1..={}",
            config.k, gt.k
        )));
    }
    if gt.query_count != queries.len() {
        return Err(BenchError::Invalid(format!(
            "ground truth covers {} queries, query file has {}",
            gt.query_count,
            queries.len()
        )));
    }
    gt.validate_against(metric.len())?;
    let params: Vec<SearchParams> = config
        .beam_widths
        .iter()
        .map(|&b| Ok(SearchParams::new(b, config.k)?.with_rerank(config.rerank)))
        .collect::<Result<_, BenchError>>()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| BenchError::Invalid(format!("thread pool: {e}")))?;
    let data = metric.exact_data();
    let dist = exact_distance(data, queries, config.distance);

    let mut points = Vec::with_capacity(config.beam_widths.len());
    for params in &params {
        pool.install(|| run_queries(graph, metric, queries, params))?;
        let start = Instant::now();
        let (ids, latency_us) = pool.install(|| run_queries(graph, metric, queries, params))?;
        let wall = start.elapsed().as_secs_f64();
        let recall = recall_at_k(&ids, gt, config.k, &dist)?;
        let n = queries.len().max(1) as f64;
        points.push(SweepPoint {
            beam_width: params.beam_width,
            k: config.k,
            recall,
            qps: n / wall.max(1e-9),
            mean_latency_us: latency_us / n,
        });
    }
    Ok(points)
}

pub const CSV_HEADER: [&str; 5] = ["beam_width", "k", "recall", "qps", "mean_latency_us"];

/// Writes `beam_width,k,recall,qps,mean_latency_us` rows with a header,
/// even when there are no points.
pub fn write_csv<W: Write>(points: &[SweepPoint], out: W) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use beamgraph::{build, exact_knn, gen_synthetic, BuildParams, Distribution, ExactMetric};
    use std::sync::Arc;

    #[test]
    fn empty_sweep_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "beam_width,k,recall,qps,mean_latency_us\n");
    }

    #[test]
    fn csv_rows_follow_schema() {
        let p = SweepPoint { beam_width: 16, k: 10, recall: 0.5, qps: 1000.0, mean_latency_us: 12.5 };
        let mut buf = Vec::new();
        write_csv(&[p], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "16,10,0.5,1000.0,12.5");
    }

    #[test]
    fn single_query_recall_is_quantized() {
        let data = Arc::new(gen_synthetic(400, 8, 1, Distribution::Clustered).unwrap());
        let queries = gen_synthetic(1, 8, 2, Distribution::Gaussian).unwrap();
        let metric = ExactMetric::new(data.clone());
        let graph = build(&metric, &BuildParams { degree_cap: 8, build_beam_width: 16, ..BuildParams::default() }).unwrap();
        let gt = exact_knn(&data, &queries, 5, DistanceKind::SquaredEuclidean).unwrap();
        let pts = sweep(&graph, &metric, &queries, &gt, &SweepConfig::new(5, vec![8])).unwrap();
        assert_eq!(pts.len(), 1);
        let scaled = pts[0].recall * 5.0;
        assert!((scaled - scaled.round()).abs() < 1e-9);
        assert!(pts[0].qps > 0.0);

        assert!(sweep(&graph, &metric, &queries, &gt, &SweepConfig::new(6, vec![8])).is_err());
        assert!(sweep(&graph, &metric, &queries, &gt, &SweepConfig::new(5, vec![4])).is_err());
        assert!(sweep(&graph, &metric, &queries, &gt, &SweepConfig::new(5, vec![8, 0])).is_err());
        let none = sweep(&graph, &metric, &queries, &gt, &SweepConfig::new(5, vec![])).unwrap();
        assert!(none.is_empty());
    }
}
