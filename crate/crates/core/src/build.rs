//! Lock-free batch-parallel construction.
//!
//! A batch of new vertices is inserted in three phases separated by
//! barriers:
//!
//! 1. every new vertex runs a beam search on the (read-only) current graph;
//! 2. every new vertex prunes its visited set into its own adjacency row and
//!    emits `(target, source, dist)` reverse edges for the neighbors it kept;
//! 3. the reverse edges are sorted by `(target, dist, source)`, and each
//!    target's contiguous group is merged into its row by exactly one worker,
//!    appending while the row has room and pruning once it would overflow.
//!
//! No phase takes a lock: writers always own disjoint rows.

use std::ops::Range;
use std::sync::atomic::{AtomicU32, Ordering as AtomicOrdering};

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::graph::{medoid, robust_prune, Candidate, GraphIndex};
use crate::metric::{Metric, QueryDistance};
use crate::search::{beam_search_prepared, check_beam_width};

#[derive(Clone, Debug, PartialEq)]
pub struct BuildParams {
    /// Maximum out-degree `R`.
    pub degree_cap: usize,
    /// Beam width of the insertion searches.
    pub build_beam_width: usize,
    pub alpha: f32,
    /// Largest number of vertices inserted in one batch.
    pub max_batch: usize,
    /// Bulk builds also cap every batch after the seed batch at this
    /// fraction of the dataset size.
    pub max_batch_fraction: f64,
    /// Re-prune every vertex once more after the last batch.
    pub two_pass: bool,
    /// Prune every reverse-edge target, even when its row has room.
    pub always_prune: bool,
    /// Emit reverse edges to every visited vertex rather than only to the
    /// pruned neighbors.
    pub reverse_all_visited: bool,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            degree_cap: 64,
            build_beam_width: 128,
            alpha: 1.2,
            max_batch: 100_000,
            max_batch_fraction: 0.02,
            two_pass: false,
            always_prune: false,
            reverse_all_visited: false,
        }
    }
}

/// Smallest first batch of a bulk build.
pub const MIN_SEED_BATCH: usize = 1000;

impl BuildParams {
    pub fn validate(&self) -> Result<()> {
        if self.degree_cap < 2 {
            return Err(invalid("degree_cap", format!("{} is below 2", self.degree_cap)));
        }
        check_beam_width(self.build_beam_width)?;
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha", format!("{} must be finite and ≥ 1", self.alpha)));
        }
        if self.max_batch == 0 {
            return Err(invalid("max_batch", "must be at least 1"));
        }
        if !(self.max_batch_fraction > 0.0 && self.max_batch_fraction <= 1.0) {
            return Err(invalid(
                "max_batch_fraction",
                format!("{} must lie in (0, 1]", self.max_batch_fraction),
            ));
        }
        if self.build_beam_width < self.degree_cap {
            log::warn!(
                "build beam width {} is below the degree cap {}",
                self.build_beam_width,
                self.degree_cap
            );
        }
        Ok(())
    }

    /// Batch ranges of a bulk build over `n` vertices: a seed batch of
    /// `max(R + 1, 1000)` vertices capped at `max_batch`, then doubling
    /// sizes capped at both `max_batch` and `max_batch_fraction · n`.
    pub fn schedule(&self, n: usize) -> Vec<Range<usize>> {
        let cap = ((self.max_batch_fraction * n as f64).ceil() as usize)
            .clamp(1, self.max_batch);
        let mut out = Vec::new();
        let mut size = (self.degree_cap + 1).max(MIN_SEED_BATCH).min(self.max_batch);
        let mut start = 0;
        while start < n {
            let end = (start + size).min(n);
            out.push(start..end);
            start = end;
            size = (size * 2).min(cap);
        }
        out
    }
}

/// A proposed reverse edge `target → source`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub target: u32,
    pub source: u32,
    pub dist: f32,
}

/// Flat buffer of proposed edges collected across a batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeBuffer {
    edges: Vec<Edge>,
}

impl EdgeBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, edge: Edge) {
        self.edges.push(edge);
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn as_slice(&self) -> &[Edge] {
        &self.edges
    }

    /// Full parallel sort by `(target, dist, source)`.
    pub fn sort_grouped(&mut self) {
        self.edges.par_sort_unstable_by(|a, b| {
            a.target
                .cmp(&b.target)
                .then(a.dist.total_cmp(&b.dist))
                .then(a.source.cmp(&b.source))
        });
    }

    /// Contiguous runs sharing a target. Only meaningful after
    /// [`sort_grouped`](Self::sort_grouped).
    pub fn groups(&self) -> impl Iterator<Item = &[Edge]> {
        self.edges.chunk_by(|a, b| a.target == b.target)
    }
}

impl FromIterator<Edge> for EdgeBuffer {
    fn from_iter<I: IntoIterator<Item = Edge>>(iter: I) -> Self {
        Self {
            edges: iter.into_iter().collect(),
        }
    }
}

/// One pruning decision: the candidate set offered and the ids kept.
#[derive(Clone, Debug, PartialEq)]
pub struct PruneRecord {
    pub vertex: u32,
    pub candidates: Vec<Candidate>,
    pub kept: Vec<u32>,
}

/// Instrumentation collected by the `*_traced` entry points.
#[derive(Clone, Debug, Default)]
pub struct BuildTrace {
    pub prunes: Vec<PruneRecord>,
    /// Largest number of workers that wrote one vertex within a single
    /// reverse-edge phase.
    pub max_reverse_writers: u32,
    pub batches: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// First batch of an empty graph: candidates are the whole batch.
    Seed,
    /// New vertices found by beam search.
    Insert,
    /// Existing vertices re-pruned against a fresh search.
    Refine,
}

/// Pruning with a metric; each kept pivot is prepared once and reused for
/// the rest of its sweep over the pool.
fn prune_with(
    metric: &dyn Metric,
    p: u32,
    candidates: &[Candidate],
    params: &BuildParams,
) -> Result<Vec<Candidate>> {
    let mut pivot: Option<(u32, Box<dyn QueryDistance + '_>)> = None;
    robust_prune(p, candidates, params.alpha, params.degree_cap, |a, b| {
        match &pivot {
            Some((id, _)) if *id == a => {}
            _ => pivot = Some((a, metric.prepare_point(a))),
        }
        pivot.as_ref().unwrap().1.distance(b)
    })
}

/// Phase 1: one beam search per vertex in `range`. Reads the graph only.
pub(crate) fn search_phase(
    graph: &GraphIndex,
    metric: &dyn Metric,
    range: Range<usize>,
    beam_width: usize,
) -> Result<Vec<Vec<Candidate>>> {
    let entry = graph.entry_point();
    range
        .into_par_iter()
        .map(|x| {
            let q = metric.prepare_point(x as u32);
            Ok(beam_search_prepared(graph, &*q, beam_width, entry, None)?.visited)
        })
        .collect()
}

fn seed_candidates(metric: &dyn Metric, range: Range<usize>) -> Vec<Vec<Candidate>> {
    range
        .clone()
        .into_par_iter()
        .map(|x| {
            let q = metric.prepare_point(x as u32);
            range
                .clone()
                .filter(|&y| y != x)
                .map(|y| Candidate::new(y as u32, q.distance(y as u32)))
                .collect()
        })
        .collect()
}

fn run_batch(
    graph: &mut GraphIndex,
    metric: &dyn Metric,
    range: Range<usize>,
    params: &BuildParams,
    mode: Mode,
    mut trace: Option<&mut BuildTrace>,
) -> Result<()> {
    let start = range.start;
    let recording = trace.is_some();

    // Phase 1: candidate generation.
    let mut candidates = match mode {
        Mode::Seed => seed_candidates(metric, range.clone()),
        Mode::Insert | Mode::Refine => {
            search_phase(graph, metric, range.clone(), params.build_beam_width)?
        }
    };
    if mode == Mode::Refine {
        let g: &GraphIndex = graph;
        candidates
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, cands)| {
                let u = (start + i) as u32;
                let q = metric.prepare_point(u);
                cands.retain(|c| c.id != u);
                cands.extend(g.neighbors(u).iter().map(|&v| Candidate::new(v, q.distance(v))));
            });
    }

    // Phase 2: prune each vertex's candidates into its own row.
    let degree_cap = params.degree_cap;
    let pruned: Vec<Vec<Candidate>> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, cands)| prune_with(metric, (start + i) as u32, cands, params))
        .collect::<Result<_>>()?;
    {
        let (rows, degrees) = graph.rows_mut(range.start, range.end);
        rows.par_chunks_mut(degree_cap)
            .zip(degrees.par_iter_mut())
            .zip(pruned.par_iter())
            .for_each(|((row, deg), kept)| {
                for (slot, c) in row.iter_mut().zip(kept) {
                    *slot = c.id;
                }
                row[kept.len()..].fill(u32::MAX);
                *deg = kept.len() as u32;
            });
    }
    let mut buffer: EdgeBuffer = pruned
        .iter()
        .zip(&candidates)
        .enumerate()
        .flat_map(|(i, (kept, cands))| {
            let source = (start + i) as u32;
            let targets = if params.reverse_all_visited { cands } else { kept };
            targets.iter().map(move |c| Edge {
                target: c.id,
                source,
                dist: c.dist,
            })
        })
        .collect();
    if let Some(t) = trace.as_deref_mut() {
        for (i, (kept, cands)) in pruned.iter().zip(candidates).enumerate() {
            t.prunes.push(PruneRecord {
                vertex: (start + i) as u32,
                candidates: cands,
                kept: kept.iter().map(|c| c.id).collect(),
            });
        }
    }

    graph.activate(range.end)?;
    if mode == Mode::Seed {
        let seed_data = metric.exact_data().slice(range.clone())?;
        graph.set_entry_point((start as u32) + medoid(&seed_data)?)?;
    }

    // Phase 3: group reverse edges by target; one worker per target.
    buffer.sort_grouped();
    let groups: Vec<&[Edge]> = buffer.groups().collect();
    let writers: Vec<AtomicU32> = if recording {
        (0..graph.active_count()).map(|_| AtomicU32::new(0)).collect()
    } else {
        Vec::new()
    };
    let g: &GraphIndex = graph;
    let updates: Vec<(u32, Vec<u32>, Option<PruneRecord>)> = groups
        .par_iter()
        .map(|group| {
            let v = group[0].target;
            if recording {
                writers[v as usize].fetch_add(1, AtomicOrdering::Relaxed);
            }
            let existing = g.neighbors(v);
            let fresh: Vec<&Edge> = group
                .iter()
                .filter(|e| e.source != v && !existing.contains(&e.source))
                .collect();
            if !params.always_prune && existing.len() + fresh.len() <= degree_cap {
                let mut list = existing.to_vec();
                list.extend(fresh.iter().map(|e| e.source));
                return Ok((v, list, None));
            }
            let q = metric.prepare_point(v);
            let mut cands: Vec<Candidate> = existing
                .iter()
                .map(|&u| Candidate::new(u, q.distance(u)))
                .collect();
            cands.extend(fresh.iter().map(|e| Candidate::new(e.source, e.dist)));
            let kept: Vec<u32> = prune_with(metric, v, &cands, params)?
                .into_iter()
                .map(|c| c.id)
                .collect();
            let record = recording.then(|| PruneRecord {
                vertex: v,
                candidates: cands,
                kept: kept.clone(),
            });
            Ok((v, kept, record))
        })
        .collect::<Result<_>>()?;
    for (v, list, record) in updates {
        graph.write_row(v, &list);
        if let (Some(t), Some(r)) = (trace.as_deref_mut(), record) {
            t.prunes.push(r);
        }
    }
    if let Some(t) = trace {
        let max = writers.iter().map(|w| w.load(AtomicOrdering::Relaxed)).max().unwrap_or(0);
        t.max_reverse_writers = t.max_reverse_writers.max(max);
        t.batches += 1;
    }
    Ok(())
}

fn insert_checked(
    graph: &mut GraphIndex,
    metric: &dyn Metric,
    new_ids: Range<usize>,
    params: &BuildParams,
    trace: Option<&mut BuildTrace>,
) -> Result<()> {
    params.validate()?;
    if new_ids.is_empty() {
        return Ok(());
    }
    if new_ids.start != graph.active_count() {
        return Err(Error::RangeOverlap {
            start: new_ids.start,
            end: new_ids.end,
            active: graph.active_count(),
        });
    }
    if graph.degree_cap() != params.degree_cap {
        return Err(invalid(
            "degree_cap",
            format!("graph uses {}, params say {}", graph.degree_cap(), params.degree_cap),
        ));
    }
    let available = metric.len().min(graph.capacity());
    if new_ids.end > available {
        return Err(Error::Capacity {
            needed: new_ids.end,
            capacity: available,
        });
    }
    let mode = if graph.is_empty() { Mode::Seed } else { Mode::Insert };
    run_batch(graph, metric, new_ids, params, mode, trace)
}

/// Inserts the vertices `new_ids` (the next contiguous ids after the active
/// prefix) as one batch. An empty graph is seeded by pruning the batch
/// against itself.
pub fn batch_insert(
    graph: &mut GraphIndex,
    metric: &dyn Metric,
    new_ids: Range<usize>,
    params: &BuildParams,
) -> Result<()> {
    insert_checked(graph, metric, new_ids, params, None)
}

pub fn batch_insert_traced(
    graph: &mut GraphIndex,
    metric: &dyn Metric,
    new_ids: Range<usize>,
    params: &BuildParams,
    trace: &mut BuildTrace,
) -> Result<()> {
    insert_checked(graph, metric, new_ids, params, Some(trace))
}

fn build_impl(
    metric: &dyn Metric,
    params: &BuildParams,
    mut trace: Option<&mut BuildTrace>,
) -> Result<GraphIndex> {
    params.validate()?;
    let n = metric.len();
    if n == 0 {
        return Err(Error::Empty("dataset"));
    }
    let mut graph = GraphIndex::new(n, params.degree_cap)?;
    let global_medoid = medoid(metric.exact_data())?;
    let schedule = params.schedule(n);
    for range in &schedule {
        insert_checked(&mut graph, metric, range.clone(), params, trace.as_deref_mut())?;
        if (global_medoid as usize) < graph.active_count() {
            graph.set_entry_point(global_medoid)?;
        }
    }
    if params.two_pass {
        for range in schedule {
            run_batch(&mut graph, metric, range, params, Mode::Refine, trace.as_deref_mut())?;
        }
    }
    Ok(graph)
}

/// Bulk build over every vector of `metric`. The entry point ends up at the
/// medoid of the full dataset.
pub fn build(metric: &dyn Metric, params: &BuildParams) -> Result<GraphIndex> {
    build_impl(metric, params, None)
}

pub fn build_traced(
    metric: &dyn Metric,
    params: &BuildParams,
    trace: &mut BuildTrace,
) -> Result<GraphIndex> {
    build_impl(metric, params, Some(trace))
}

fn stream_impl(
    graph: &mut GraphIndex,
    metric: &dyn Metric,
    new_range: Range<usize>,
    params: &BuildParams,
    mut trace: Option<&mut BuildTrace>,
) -> Result<()> {
    if new_range.is_empty() {
        return Ok(());
    }
    if new_range.start != graph.active_count() {
        return Err(Error::RangeOverlap {
            start: new_range.start,
            end: new_range.end,
            active: graph.active_count(),
        });
    }
    params.validate()?;
    graph.reserve(new_range.end);
    let mut start = new_range.start;
    while start < new_range.end {
        let end = (start + params.max_batch).min(new_range.end);
        insert_checked(graph, metric, start..end, params, trace.as_deref_mut())?;
        start = end;
    }
    Ok(())
}

/// Appends vectors that arrived after the graph was built. The entry point
/// is left unchanged.
pub fn insert_stream(
    graph: &mut GraphIndex,
    metric: &dyn Metric,
    new_range: Range<usize>,
    params: &BuildParams,
) -> Result<()> {
    stream_impl(graph, metric, new_range, params, None)
}

pub fn insert_stream_traced(
    graph: &mut GraphIndex,
    metric: &dyn Metric,
    new_range: Range<usize>,
    params: &BuildParams,
    trace: &mut BuildTrace,
) -> Result<()> {
    stream_impl(graph, metric, new_range, params, Some(trace))
}
