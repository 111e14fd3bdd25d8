//! Command-line definitions and dispatch for the `beamgraph` binary.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use beamgraph::io::{kind_from_path, read_ground_truth, read_vectors_bin, write_ground_truth, write_vectors_bin};
use beamgraph::{
    build, exact_knn, fit, gen_synthetic, insert_stream, search_knn, BuildParams, DistanceKind,
    Distribution, MetricRegistry, MetricSource, SearchParams, VectorDataset,
};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::index_dir::{IndexDir, IndexManifest};
use crate::sweep::{sweep, write_csv, SweepConfig};
use crate::BenchError;

#[derive(Debug, Parser)]
#[command(name = "beamgraph", version, about = "Build, query and benchmark beamgraph indexes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DistanceArg {
    L2,
    Ip,
}

impl From<DistanceArg> for DistanceKind {
    fn from(d: DistanceArg) -> Self {
        match d {
            DistanceArg::L2 => DistanceKind::SquaredEuclidean,
            DistanceArg::Ip => DistanceKind::InnerProduct,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DistributionArg {
    Gaussian,
    Clustered,
}

impl From<DistributionArg> for Distribution {
    fn from(d: DistributionArg) -> Self {
        match d {
            DistributionArg::Gaussian => Distribution::Gaussian,
            DistributionArg::Clustered => Distribution::Clustered,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic `.fbin` dataset.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        dims: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "clustered")]
        distribution: DistributionArg,
        #[arg(long)]
        out: PathBuf,
        /// Extra rows from the same distribution, written to `--queries-out`.
        #[arg(long, requires = "queries_out")]
        queries: Option<usize>,
        #[arg(long)]
        queries_out: Option<PathBuf>,
    },
    /// Bulk-build a graph index into a directory.
    Build {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "R", default_value_t = 64)]
        degree_cap: usize,
        #[arg(long, default_value_t = 128)]
        beam: usize,
        #[arg(long, default_value_t = 1.2)]
        alpha: f32,
        #[arg(long, default_value_t = 100_000)]
        max_batch: usize,
        /// Cap on batches after the seed batch, as a fraction of the input size.
        #[arg(long, default_value_t = 0.02)]
        max_batch_fraction: f64,
        /// Re-prune every vertex once more after the first pass.
        #[arg(long)]
        two_pass: bool,
        /// Distance used during construction (`exact` or `rabitq`).
        #[arg(long, default_value = "exact")]
        metric: String,
        /// Code width for `--metric rabitq`.
        #[arg(long)]
        bits: Option<u32>,
        /// Rotation seed for `--metric rabitq`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Append vectors to an existing index in fixed-size batches.
    Insert {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Batch size as a percentage of the final vector count.
        #[arg(long, default_value_t = 2.0)]
        batch_pct: f64,
    },
    /// Exact top-k ground truth by exhaustive scan.
    Gt {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "l2")]
        distance: DistanceArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer queries and print `query,rank,id,distance` rows.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 64)]
        beam: usize,
        #[arg(long, default_value = "exact")]
        metric: String,
        #[arg(long)]
        rerank: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recall/throughput sweep over beam widths, written as CSV.
    Sweep {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        k: usize,
        /// Comma-separated beam widths; an empty list writes only the header.
        #[arg(long, value_parser = parse_beams)]
        beams: ::std::vec::Vec<usize>,
        #[arg(long, default_value = "exact")]
        metric: String,
        #[arg(long)]
        rerank: bool,
        /// Query worker count (default: hardware parallelism).
        #[arg(long)]
        threads: Option<usize>,
        /// Convention of the ground-truth file.
        #[arg(long, value_enum, default_value = "l2")]
        distance: DistanceArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a RaBitQ quantizer over an index's vectors.
    Quantize {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        bits: u32,
        #[arg(long)]
        seed: u64,
    },
}

/// Parses `16,32,64`; the empty string is the empty list.
fn parse_beams(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|e| format!("beam width {t:?}: {e}")))
        .collect()
}

fn invalid(msg: impl Into<String>) -> BenchError {
    BenchError::Invalid(msg.into())
}

/// Reads a `.fbin` or `.u8bin` file, picking the element type from the
/// extension.
pub fn read_dataset(path: &Path) -> Result<VectorDataset, BenchError> {
    let kind = kind_from_path(path).ok_or_else(|| {
        invalid(format!("{}: expected a .fbin or .u8bin extension", path.display()))
    })?;
    Ok(read_vectors_bin(path, kind)?)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, BenchError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn build_metric_source(
    data: Arc<VectorDataset>,
    metric: &str,
    quantizer: Option<(u32, u64)>,
) -> Result<MetricSource, BenchError> {
    let quantizer = match (metric, quantizer) {
        ("rabitq", Some((bits, seed))) => Some(Arc::new(fit(&data.to_f32(), bits, seed)?)),
        ("rabitq", None) => return Err(invalid("--metric rabitq needs --bits and --seed")),
        _ => None,
    };
    Ok(MetricSource { data, quantizer })
}

pub fn run(cli: Cli) -> Result<(), BenchError> {
    let registry = MetricRegistry::with_builtins();
    match cli.command {
        Command::Synth { count, dims, seed, distribution, out, queries, queries_out } => {
            let extra = queries.unwrap_or(0);
            let all = gen_synthetic(count + extra, dims, seed, distribution.into())?;
            write_vectors_bin(&out, &all.slice(0..count)?)?;
            if let (Some(path), true) = (queries_out, extra > 0) {
                write_vectors_bin(path, &all.slice(count..count + extra)?)?;
            }
            Ok(())
        }
        Command::Build {
            input,
            degree_cap,
            beam,
            alpha,
            max_batch,
            max_batch_fraction,
            two_pass,
            metric,
            bits,
            seed,
            out,
        } => {
            let params = BuildParams {
                degree_cap,
                build_beam_width: beam,
                alpha,
                max_batch,
                max_batch_fraction,
                two_pass,
                ..BuildParams::default()
            };
            params.validate()?;
            let data = Arc::new(read_dataset(&input)?);
            let qparams = bits.zip(seed);
            let source = build_metric_source(data.clone(), &metric, qparams)?;
            let m = registry.create(&metric, &source)?;
            let start = Instant::now();
            let graph = build(m.as_ref(), &params)?;
            eprintln!(
                "built {} vertices in {:.2}s",
                graph.active_count(),
                start.elapsed().as_secs_f64()
            );
            let mut manifest = IndexManifest::new(&params, &metric);
            manifest.quantizer = source.quantizer.as_ref().and(qparams);
            IndexDir { path: out, data, graph, manifest, quantizer: source.quantizer }.save()
        }
        Command::Insert { index, input, batch_pct } => {
            if !(batch_pct > 0.0 && batch_pct <= 100.0) {
                return Err(invalid(format!("--batch-pct {batch_pct} must lie in (0, 100]")));
            }
            let mut idx = IndexDir::load(&index)?;
            let extra = read_dataset(&input)?;
            let old = idx.data.len();
            let mut data = (*idx.data).clone();
            data.append(&extra)?;
            let total = data.len();
            let data = Arc::new(data);
            let mut params = idx.manifest.build_params();
            params.max_batch = ((total as f64 * batch_pct / 100.0).round() as usize).max(1);
            let source = build_metric_source(
                data.clone(),
                &idx.manifest.build_metric,
                idx.manifest.quantizer,
            )?;
            let m = registry.create(&idx.manifest.build_metric, &source)?;
            let start = Instant::now();
            insert_stream(&mut idx.graph, m.as_ref(), old..total, &params)?;
            eprintln!(
                "inserted {} vertices in batches of {} ({:.2}s)",
                total - old,
                params.max_batch,
                start.elapsed().as_secs_f64()
            );
            idx.quantizer = match (source.quantizer, idx.manifest.quantizer) {
                (Some(q), _) => Some(q),
                (None, Some((bits, seed))) => Some(Arc::new(fit(&data.to_f32(), bits, seed)?)),
                (None, None) => None,
            };
            idx.data = data;
            idx.save()
        }
        Command::Gt { data, queries, k, distance, out } => {
            let data = read_dataset(&data)?;
            let queries = read_dataset(&queries)?;
            let gt = exact_knn(&data, &queries, k, distance.into())?;
            Ok(write_ground_truth(out, &gt)?)
        }
        Command::Search { index, queries, k, beam, metric, rerank, out } => {
            let params = SearchParams::new(beam, k)?.with_rerank(rerank);
            let idx = IndexDir::load(&index)?;
            let queries = read_dataset(&queries)?;
            let m = idx.metric(&registry, &metric)?;
            let results = (0..queries.len())
                .into_par_iter()
                .map(|q| search_knn(&idx.graph, m.as_ref(), queries.row(q), &params))
                .collect::<Result<Vec<_>, _>>()?;
            let mut w = csv::Writer::from_writer(output(out.as_deref())?);
            w.write_record(["query", "rank", "id", "distance"])?;
            for (q, hits) in results.iter().enumerate() {
                for (rank, c) in hits.iter().enumerate() {
                    w.write_record(&[q.to_string(), rank.to_string(), c.id.to_string(), c.dist.to_string()])?;
                }
            }
            w.flush()?;
            Ok(())
        }
        Command::Sweep {
            index,
            queries,
            gt,
            k,
            beams,
            metric,
            rerank,
            threads,
            distance,
            out,
        } => {
            if let Some(0) = threads {
                return Err(invalid("--threads must be at least 1"));
            }
            let config = SweepConfig { k, beam_widths: beams, rerank, threads, distance: distance.into() };
            for &b in &config.beam_widths {
                SearchParams::new(b, k)?;
            }
            let idx = IndexDir::load(&index)?;
            let queries = read_dataset(&queries)?;
            let gt = read_ground_truth(&gt)?;
            let m = idx.metric(&registry, &metric)?;
            let points = sweep(&idx.graph, m.as_ref(), &queries, &gt, &config)?;
            write_csv(&points, output(out.as_deref())?)
        }
        Command::Quantize { index, bits, seed } => {
            let mut idx = IndexDir::load(&index)?;
            idx.quantizer = Some(Arc::new(fit(&idx.data.to_f32(), bits, seed)?));
            idx.manifest.quantizer = Some((bits, seed));
            idx.save()
        }
    }
}
