//! Greedy beam search over the graph.
//!
//! The frontier is a fixed-capacity array kept sorted by `(dist, id)`. The
//! visited set is exact, and newly discovered neighbors are merged into the
//! frontier on every expansion. A vertex is distance-evaluated at most once
//! per search: anything already scored is skipped, whether it is still in
//! the frontier, already expanded, or was evicted earlier (an evicted vertex
//! can never re-enter because the frontier only improves).

use crate::dataset::VectorRef;
use crate::error::{invalid, Error, Result};
use crate::graph::{Candidate, GraphIndex};
use crate::metric::{Metric, QueryDistance};

pub const MAX_BEAM_WIDTH: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchParams {
    pub beam_width: usize,
    pub k: usize,
    /// Re-score the final frontier with exact distances (quantized metrics only).
    pub rerank: bool,
}

impl SearchParams {
    pub fn new(beam_width: usize, k: usize) -> Result<Self> {
        let p = Self {
            beam_width,
            k,
            rerank: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_rerank(mut self, rerank: bool) -> Self {
        self.rerank = rerank;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_beam_width(self.beam_width)?;
        if self.k == 0 || self.k > self.beam_width {
            return Err(invalid(
                "k",
                format!("{} must lie in 1..={}", self.k, self.beam_width),
            ));
        }
        Ok(())
    }
}

pub(crate) fn check_beam_width(beam_width: usize) -> Result<()> {
    if beam_width == 0 || beam_width > MAX_BEAM_WIDTH {
        return Err(invalid(
            "beam_width",
            format!("{beam_width} must lie in 1..={MAX_BEAM_WIDTH}"),
        ));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Expanded vertices.
    pub hops: usize,
    pub distance_evals: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    /// Best candidates found, ascending by `(dist, id)`.
    pub frontier: Vec<Candidate>,
    /// Expanded vertices in expansion order.
    pub visited: Vec<Candidate>,
    pub stats: SearchStats,
}

struct Frontier {
    items: Vec<Candidate>,
    expanded: Vec<bool>,
    cap: usize,
}

impl Frontier {
    fn new(cap: usize) -> Self {
        Self {
            items: Vec::with_capacity(cap + 1),
            expanded: Vec::with_capacity(cap + 1),
            cap,
        }
    }

    /// Inserts `c` if it beats the current worst entry of a full frontier.
    /// Returns the insertion position.
    fn insert(&mut self, c: Candidate) -> Option<usize> {
        if self.items.len() == self.cap
            && c.cmp_key(self.items.last().unwrap()) != std::cmp::Ordering::Less
        {
            return None;
        }
        let pos = self.items.partition_point(|x| x.cmp_key(&c).is_lt());
        self.items.insert(pos, c);
        self.expanded.insert(pos, false);
        if self.items.len() > self.cap {
            self.items.pop();
            self.expanded.pop();
        }
        Some(pos)
    }
}

struct Bitset(Vec<u64>);

impl Bitset {
    fn new(n: usize) -> Self {
        Bitset(vec![0; n.div_ceil(64)])
    }

    /// Sets bit `i`, returning whether it was previously clear.
    #[inline]
    fn insert(&mut self, i: u32) -> bool {
        let (w, b) = ((i / 64) as usize, i % 64);
        let fresh = self.0[w] & (1 << b) == 0;
        self.0[w] |= 1 << b;
        fresh
    }
}

/// Beam search from `start` using an already-prepared query.
///
/// `observe` is called with the frontier after every expansion.
pub fn beam_search_prepared<D: QueryDistance + ?Sized>(
    graph: &GraphIndex,
    dist: &D,
    beam_width: usize,
    start: u32,
    mut observe: Option<&mut dyn FnMut(&[Candidate])>,
) -> Result<SearchResult> {
    check_beam_width(beam_width)?;
    if start as usize >= graph.active_count() {
        return Err(Error::VertexOutOfRange {
            id: start,
            active: graph.active_count(),
        });
    }
    let mut stats = SearchStats::default();
    let mut seen = Bitset::new(graph.active_count());
    let mut frontier = Frontier::new(beam_width);
    let mut visited = Vec::new();

    seen.insert(start);
    frontier.insert(Candidate::new(start, dist.distance(start)));
    stats.distance_evals += 1;

    let mut cursor = 0;
    while cursor < frontier.items.len() {
        let current = frontier.items[cursor];
        frontier.expanded[cursor] = true;
        visited.push(current);
        stats.hops += 1;

        let mut next = cursor + 1;
        for &v in graph.neighbors(current.id) {
            if !seen.insert(v) {
                continue;
            }
            let c = Candidate::new(v, dist.distance(v));
            stats.distance_evals += 1;
            if let Some(pos) = frontier.insert(c) {
                next = next.min(pos);
            }
        }
        if let Some(f) = observe.as_deref_mut() {
            f(&frontier.items);
        }
        cursor = next;
        while cursor < frontier.items.len() && frontier.expanded[cursor] {
            cursor += 1;
        }
    }

    Ok(SearchResult {
        frontier: frontier.items,
        visited,
        stats,
    })
}

/// Beam search for `query` from `start`.
pub fn beam_search(
    graph: &GraphIndex,
    metric: &dyn Metric,
    query: VectorRef<'_>,
    beam_width: usize,
    start: u32,
) -> Result<SearchResult> {
    let prepared = metric.prepare(query)?;
    beam_search_prepared(graph, &*prepared, beam_width, start, None)
}

/// Top-`k` neighbors of `query`, starting from the graph's entry point.
///
/// With `params.rerank` and a quantized metric the whole frontier is
/// re-scored exactly before truncation, and returned distances are exact.
pub fn search_knn(
    graph: &GraphIndex,
    metric: &dyn Metric,
    query: VectorRef<'_>,
    params: &SearchParams,
) -> Result<Vec<Candidate>> {
    params.validate()?;
    if graph.is_empty() {
        return Err(Error::Empty("graph"));
    }
    let result = beam_search(graph, metric, query, params.beam_width, graph.entry_point())?;
    let mut out = result.frontier;
    if params.rerank && !metric.is_exact() {
        let data = metric.exact_data();
        for c in &mut out {
            c.dist = data.sq_dist_to(c.id as usize, query);
        }
        out.sort_unstable_by(Candidate::cmp_key);
    }
    out.truncate(params.k);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::VectorDataset;
    use crate::metric::ExactMetric;
    use std::sync::Arc;

    fn line_graph(n: usize) -> (GraphIndex, ExactMetric) {
        let data = VectorDataset::from_f32(1, (0..n).map(|i| i as f32).collect()).unwrap();
        let mut g = GraphIndex::new(n, 2).unwrap();
        g.activate(n).unwrap();
        for i in 0..n as u32 {
            let mut nb = Vec::new();
            if i > 0 {
                nb.push(i - 1);
            }
            if (i as usize) + 1 < n {
                nb.push(i + 1);
            }
            g.set_neighbors(i, &nb).unwrap();
        }
        (g, ExactMetric::new(Arc::new(data)))
    }

    #[test]
    fn single_vertex() {
        let data = VectorDataset::from_f32(2, vec![1.0, 1.0]).unwrap();
        let mut g = GraphIndex::new(1, 4).unwrap();
        g.activate(1).unwrap();
        let m = ExactMetric::new(Arc::new(data));
        let r = beam_search(&g, &m, VectorRef::F32(&[0.0, 0.0]), 4, 0).unwrap();
        assert_eq!(r.frontier, vec![Candidate::new(0, 2.0)]);
        assert_eq!(r.visited, vec![Candidate::new(0, 2.0)]);
        assert_eq!(r.stats, SearchStats { hops: 1, distance_evals: 1 });
    }

    #[test]
    fn walks_the_line_with_unit_beam() {
        let (g, m) = line_graph(10);
        let r = beam_search(&g, &m, VectorRef::F32(&[9.0]), 1, 0).unwrap();
        let order: Vec<u32> = r.visited.iter().map(|c| c.id).collect();
        assert_eq!(order, (0..10).collect::<Vec<u32>>());
        assert_eq!(r.frontier, vec![Candidate::new(9, 0.0)]);
    }

    #[test]
    fn frontier_entries_are_all_visited() {
        let (g, m) = line_graph(30);
        let r = beam_search(&g, &m, VectorRef::F32(&[17.3]), 5, 0).unwrap();
        for c in &r.frontier {
            assert!(r.visited.iter().any(|v| v.id == c.id));
        }
        assert!(r.frontier.windows(2).all(|w| w[0].cmp_key(&w[1]).is_lt()));
        assert_eq!(r.frontier[0].id, 17);
    }

    #[test]
    fn kth_distance_never_worsens() {
        let (g, m) = line_graph(40);
        let q = m.prepare(VectorRef::F32(&[33.0])).unwrap();
        let mut worst = Vec::new();
        let mut obs = |f: &[Candidate]| worst.push((f.len(), f.last().unwrap().dist));
        beam_search_prepared(&g, &*q, 4, 0, Some(&mut obs)).unwrap();
        for w in worst.windows(2) {
            if w[0].0 == 4 {
                assert!(w[1].1 <= w[0].1);
            }
        }
    }

    #[test]
    fn errors() {
        let (g, m) = line_graph(3);
        assert!(beam_search(&g, &m, VectorRef::F32(&[0.0]), 2, 3).is_err());
        assert!(beam_search(&g, &m, VectorRef::F32(&[0.0, 1.0]), 2, 0).is_err());
        assert!(beam_search(&g, &m, VectorRef::F32(&[0.0]), 0, 0).is_err());
        assert!(beam_search(&g, &m, VectorRef::F32(&[0.0]), MAX_BEAM_WIDTH + 1, 0).is_err());
        assert!(SearchParams::new(4, 5).is_err());
        assert!(SearchParams::new(4, 0).is_err());
        let empty = GraphIndex::new(0, 2).unwrap();
        let p = SearchParams::new(2, 1).unwrap();
        assert!(search_knn(&empty, &m, VectorRef::F32(&[0.0]), &p).is_err());
    }

    #[test]
    fn knn_returns_prefix_and_rerank_is_noop_on_exact() {
        let (g, m) = line_graph(20);
        let p = SearchParams::new(6, 6).unwrap();
        let full = search_knn(&g, &m, VectorRef::F32(&[4.2]), &p).unwrap();
        assert_eq!(full.len(), 6);
        let p3 = SearchParams::new(6, 3).unwrap();
        let top = search_knn(&g, &m, VectorRef::F32(&[4.2]), &p3).unwrap();
        assert_eq!(&full[..3], &top[..]);
        let rr = search_knn(&g, &m, VectorRef::F32(&[4.2]), &p3.with_rerank(true)).unwrap();
        assert_eq!(top, rr);
    }
}
