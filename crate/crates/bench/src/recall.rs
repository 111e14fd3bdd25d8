use beamgraph::{DistanceKind, GroundTruth, VectorDataset, VectorRef};

use crate::BenchError;

/// Relative slack on the k-th ground-truth distance when matching results.
pub const RECALL_EPSILON: f64 = 1e-6;

/// Mean fraction of each query's first `k` results that fall inside the
/// exact top-`k`.
///
/// A returned id counts when its exact distance (from `distance(query, id)`)
/// is within the k-th ground-truth distance, so ties at the boundary are
/// not penalized. Repeated ids count once.
pub fn recall_at_k<F>(
    results: &[Vec<u32>],
    gt: &GroundTruth,
    k: usize,
    distance: F,
) -> Result<f64, BenchError>
where
    F: Fn(usize, u32) -> f32,
{
    if k == 0 || k > gt.k {
        return Err(BenchError::Invalid(format!(
            "k = {k} must lie in 1..={}",
            gt.k
        )));
    }
    if results.len() != gt.query_count {
        return Err(BenchError::Invalid(format!(
            "{} result rows for {} queries",
            results.len(),
            gt.query_count
        )));
    }
    if results.is_empty() {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for (q, row) in results.iter().enumerate() {
        if row.len() < k {
            return Err(BenchError::Invalid(format!(
                "query {q} returned {} results, need {k}",
                row.len()
            )));
        }
        let kth = gt.dist_row(q)[k - 1] as f64;
        let threshold = kth + RECALL_EPSILON * kth.abs();
        let mut ids = row[..k].to_vec();
        ids.sort_unstable();
        ids.dedup();
        let hits = ids
            .iter()
            .filter(|&&id| distance(q, id) as f64 <= threshold)
            .count();
        total += hits as f64 / k as f64;
    }
    Ok(total / results.len() as f64)
}

/// Exact distance between query `q` and data row `id` in the ground truth's
/// convention (negated inner product for [`DistanceKind::InnerProduct`]).
pub fn exact_distance<'a>(
    data: &'a VectorDataset,
    queries: &'a VectorDataset,
    kind: DistanceKind,
) -> impl Fn(usize, u32) -> f32 + Sync + 'a {
    move |q, id| {
        let (x, y) = (data.row(id as usize), queries.row(q));
        match kind {
            DistanceKind::SquaredEuclidean => match (x, y) {
                (VectorRef::U8(a), VectorRef::U8(b)) => {
                    beamgraph::distance::sq_l2_u8(a, b) as f32
                }
                (VectorRef::F32(a), VectorRef::F32(b)) => beamgraph::distance::sq_l2_f32(a, b),
                (a, b) => beamgraph::distance::sq_l2_f32(&a.to_f32(), &b.to_f32()),
            },
            DistanceKind::InnerProduct => {
                -beamgraph::distance::dot_f32(&x.to_f32(), &y.to_f32())
            }
        }
    }
}
