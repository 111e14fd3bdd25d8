//! Bounded-degree directed proximity graph and α-robust pruning.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use crate::dataset::{VectorDataset, VectorRef};
use crate::error::{invalid, Error, Result};

/// A vertex paired with its squared distance to some pivot (a query or the
/// vertex being pruned).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub id: u32,
    pub dist: f32,
}

impl Candidate {
    pub fn new(id: u32, dist: f32) -> Self {
        Self { id, dist }
    }

    /// Total order by `(dist, id)`.
    #[inline]
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.id.cmp(&other.id))
    }
}

const EMPTY_SLOT: u32 = u32::MAX;
const GRAPH_MAGIC: u32 = u32::from_le_bytes(*b"BGGR");
const GRAPH_VERSION: u32 = 1;

/// Vamana-style graph: every vertex owns a fixed-stride row of `degree_cap`
/// neighbor slots. Vertices `0..active_count` are live.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphIndex {
    degree_cap: usize,
    capacity: usize,
    adjacency: Vec<u32>,
    degrees: Vec<u32>,
    entry_point: u32,
    active_count: usize,
}

impl GraphIndex {
    pub fn new(capacity: usize, degree_cap: usize) -> Result<Self> {
        if degree_cap == 0 {
            return Err(invalid("degree_cap", "must be at least 1"));
        }
        Ok(Self {
            degree_cap,
            capacity,
            adjacency: vec![EMPTY_SLOT; capacity * degree_cap],
            degrees: vec![0; capacity],
            entry_point: 0,
            active_count: 0,
        })
    }

    pub fn degree_cap(&self) -> usize {
        self.degree_cap
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn active_count(&self) -> usize {
        self.active_count
    }

    pub fn is_empty(&self) -> bool {
        self.active_count == 0
    }

    pub fn entry_point(&self) -> u32 {
        self.entry_point
    }

    pub fn set_entry_point(&mut self, id: u32) -> Result<()> {
        self.check_active(id)?;
        self.entry_point = id;
        Ok(())
    }

    /// Grows the slab so at least `capacity` vertices fit.
    pub fn reserve(&mut self, capacity: usize) {
        if capacity > self.capacity {
            self.adjacency.resize(capacity * self.degree_cap, EMPTY_SLOT);
            self.degrees.resize(capacity, 0);
            self.capacity = capacity;
        }
    }

    /// Marks vertices up to `new_active` as live. Newly activated vertices
    /// start with no out-edges.
    pub(crate) fn activate(&mut self, new_active: usize) -> Result<()> {
        if new_active > self.capacity {
            return Err(Error::Capacity {
                needed: new_active,
                capacity: self.capacity,
            });
        }
        self.active_count = self.active_count.max(new_active);
        Ok(())
    }

    pub fn degree(&self, u: u32) -> usize {
        self.degrees[u as usize] as usize
    }

    #[inline]
    pub fn neighbors(&self, u: u32) -> &[u32] {
        let start = u as usize * self.degree_cap;
        &self.adjacency[start..start + self.degrees[u as usize] as usize]
    }

    /// Replaces `u`'s out-edges after validating the list.
    pub fn set_neighbors(&mut self, u: u32, list: &[u32]) -> Result<()> {
        self.check_active(u)?;
        self.validate_list(u, list)?;
        self.write_row(u, list);
        Ok(())
    }

    pub(crate) fn write_row(&mut self, u: u32, list: &[u32]) {
        debug_assert!(list.len() <= self.degree_cap);
        let start = u as usize * self.degree_cap;
        let row = &mut self.adjacency[start..start + self.degree_cap];
        row[..list.len()].copy_from_slice(list);
        row[list.len()..].fill(EMPTY_SLOT);
        self.degrees[u as usize] = list.len() as u32;
    }

    /// Mutable rows for the vertex range `start..end`, stride `degree_cap`.
    pub(crate) fn rows_mut(&mut self, start: usize, end: usize) -> (&mut [u32], &mut [u32]) {
        let r = self.degree_cap;
        (
            &mut self.adjacency[start * r..end * r],
            &mut self.degrees[start..end],
        )
    }

    fn check_active(&self, u: u32) -> Result<()> {
        if (u as usize) < self.active_count {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange {
                id: u,
                active: self.active_count,
            })
        }
    }

    fn validate_list(&self, u: u32, list: &[u32]) -> Result<()> {
        let fail = |reason: String| Err(Error::Adjacency { vertex: u, reason });
        if list.len() > self.degree_cap {
            return fail(format!(
                "{} neighbors exceed degree cap {}",
                list.len(),
                self.degree_cap
            ));
        }
        let mut sorted = list.to_vec();
        sorted.sort_unstable();
        for (i, &v) in sorted.iter().enumerate() {
            if v == u {
                return fail("self-loop".into());
            }
            if v as usize >= self.active_count {
                return fail(format!("neighbor {v} is not active"));
            }
            if i > 0 && sorted[i - 1] == v {
                return fail(format!("duplicate neighbor {v}"));
            }
        }
        Ok(())
    }

    /// Full scan of the structural invariants: degree cap, no self-loops,
    /// no duplicates, all neighbors live, entry point live.
    pub fn check_invariants(&self) -> Result<()> {
        if self.active_count > 0 {
            self.check_active(self.entry_point)?;
        }
        for u in 0..self.active_count as u32 {
            self.validate_list(u, self.neighbors(u))?;
        }
        Ok(())
    }

    /// Number of live vertices reachable from the entry point.
    pub fn reachable_from_entry(&self) -> usize {
        if self.active_count == 0 {
            return 0;
        }
        let mut seen = vec![false; self.active_count];
        let mut stack = vec![self.entry_point];
        seen[self.entry_point as usize] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in self.neighbors(u) {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.active_count;
        let mut out = Vec::with_capacity(24 + n * 4 * (1 + self.degree_cap));
        out.extend_from_slice(&GRAPH_MAGIC.to_le_bytes());
        out.extend_from_slice(&GRAPH_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.degree_cap as u32).to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&self.entry_point.to_le_bytes());
        for d in &self.degrees[..n] {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.adjacency[..n * self.degree_cap] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.u32()? != GRAPH_MAGIC {
            return Err(Error::Format("bad graph magic".into()));
        }
        let version = r.u32()?;
        if version != GRAPH_VERSION {
            return Err(Error::Format(format!("unsupported graph version {version}")));
        }
        let degree_cap = r.u32()? as usize;
        let n = usize::try_from(r.u64()?)
            .map_err(|_| Error::Format("vertex count overflows".into()))?;
        let entry_point = r.u32()?;
        let slab_len = n
            .checked_mul(degree_cap)
            .ok_or_else(|| Error::Format("slab size overflows".into()))?;
        let degrees = r.u32_vec(n)?;
        let adjacency = r.u32_vec(slab_len)?;
        r.finish()?;
        let mut graph = GraphIndex::new(n, degree_cap)?;
        graph.active_count = n;
        graph.entry_point = entry_point;
        for (u, &deg) in degrees.iter().enumerate() {
            let deg = deg as usize;
            if deg > degree_cap {
                return Err(Error::Format(format!("vertex {u} degree {deg} exceeds cap")));
            }
            let row = &adjacency[u * degree_cap..(u + 1) * degree_cap];
            if row[deg..].iter().any(|&v| v != EMPTY_SLOT) {
                return Err(Error::Format(format!("vertex {u} has data past its degree")));
            }
            graph.write_row(u as u32, &row[..deg]);
        }
        graph
            .check_invariants()
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(graph)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Little-endian cursor shared by the persistence formats.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated: need {n} bytes at offset {}, have {}",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn u32_vec(&mut self, n: usize) -> Result<Vec<u32>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| Error::Format("array size overflows".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .u32_vec(n)?
            .into_iter()
            .map(f32::from_bits)
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )))
        }
    }
}

/// Index of the row closest to the dataset mean (mean taken in `f64`,
/// ties to the lowest id).
pub fn medoid(dataset: &VectorDataset) -> Result<u32> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let dims = dataset.dims();
    let mut mean = vec![0.0f64; dims];
    for i in 0..dataset.len() {
        for_each_coord(dataset.row(i), |j, x| mean[j] += x);
    }
    let n = dataset.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);

    let mut best = (f64::INFINITY, 0u32);
    for i in 0..dataset.len() {
        let mut d = 0.0f64;
        for_each_coord(dataset.row(i), |j, x| d += (x - mean[j]).powi(2));
        if d < best.0 {
            best = (d, i as u32);
        }
    }
    Ok(best.1)
}

fn for_each_coord(row: VectorRef<'_>, mut f: impl FnMut(usize, f64)) {
    match row {
        VectorRef::F32(v) => v.iter().enumerate().for_each(|(j, &x)| f(j, x as f64)),
        VectorRef::U8(v) => v.iter().enumerate().for_each(|(j, &x)| f(j, x as f64)),
    }
}

/// α-robust pruning of `p`'s candidate neighbors.
///
/// Candidates carry their squared distance to `p`; `pair_dist(a, b)` returns
/// the squared distance between two candidates. Domination is tested as
/// `α²·d²(p*, p') ≤ d²(p, p')`, which orders identically to the unsquared
/// test for `α ≥ 1`. Any copy of `p` itself and repeated ids are dropped.
/// Returns kept neighbors in extraction order (ascending distance).
pub fn robust_prune<F>(
    p: u32,
    candidates: &[Candidate],
    alpha: f32,
    degree_cap: usize,
    mut pair_dist: F,
) -> Result<Vec<Candidate>>
where
    F: FnMut(u32, u32) -> f32,
{
    if !(alpha >= 1.0) {
        return Err(invalid("alpha", format!("{alpha} is below 1")));
    }
    if degree_cap == 0 {
        return Err(invalid("degree_cap", "must be at least 1"));
    }
    let alpha_sq = alpha * alpha;

    let mut pool: Vec<Candidate> = candidates.iter().copied().filter(|c| c.id != p).collect();
    pool.sort_unstable_by(Candidate::cmp_key);
    pool.dedup_by_key(|c| c.id);
    // Distances may arrive sorted but with one id appearing twice at
    // different distances; keep only the closest occurrence.
    if pool.len() > 1 {
        let mut seen = std::collections::HashSet::with_capacity(pool.len());
        pool.retain(|c| seen.insert(c.id));
    }

    let mut alive = vec![true; pool.len()];
    let mut kept = Vec::with_capacity(degree_cap.min(pool.len()));
    let mut cursor = 0;
    while kept.len() < degree_cap {
        while cursor < pool.len() && !alive[cursor] {
            cursor += 1;
        }
        if cursor == pool.len() {
            break;
        }
        let star = pool[cursor];
        alive[cursor] = false;
        kept.push(star);
        for j in cursor + 1..pool.len() {
            if alive[j] && alpha_sq * pair_dist(star.id, pool[j].id) <= pool[j].dist {
                alive[j] = false;
            }
        }
    }
    Ok(kept)
}
