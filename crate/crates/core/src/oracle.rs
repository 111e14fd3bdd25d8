//! Exhaustive k-nearest-neighbor reference.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::dataset::{VectorDataset, VectorRef};
use crate::distance::{dot_f32, sq_l2_f32, sq_l2_u8, DistanceKind};
use crate::error::{invalid, Error, Result};
use crate::io::GroundTruth;

/// Sort key for one data row. `u8` squared distances stay exact integers
/// until the final conversion so that ties are ordered by id exactly.
#[derive(Clone, Copy, PartialEq)]
enum Key {
    Int(u64),
    Float(f32),
}

impl Key {
    fn cmp(&self, other: &Key) -> Ordering {
        match (self, other) {
            (Key::Int(a), Key::Int(b)) => a.cmp(b),
            (Key::Float(a), Key::Float(b)) => a.total_cmp(b),
            _ => unreachable!("keys within one scan share a kind"),
        }
    }

    fn value(&self) -> f32 {
        match *self {
            Key::Int(v) => v as f32,
            Key::Float(v) => v,
        }
    }
}

fn key(data: &VectorDataset, i: usize, q: VectorRef<'_>, kind: DistanceKind) -> Key {
    match (kind, data.row(i), q) {
        (DistanceKind::SquaredEuclidean, VectorRef::U8(x), VectorRef::U8(y)) => {
            Key::Int(sq_l2_u8(x, y))
        }
        (DistanceKind::SquaredEuclidean, VectorRef::F32(x), VectorRef::F32(y)) => {
            Key::Float(sq_l2_f32(x, y))
        }
        (DistanceKind::InnerProduct, VectorRef::F32(x), VectorRef::F32(y)) => {
            Key::Float(-dot_f32(x, y))
        }
        (DistanceKind::InnerProduct, x, y) => {
            Key::Float(-dot_f32(&x.to_f32(), &y.to_f32()))
        }
        (DistanceKind::SquaredEuclidean, x, y) => {
            Key::Float(sq_l2_f32(&x.to_f32(), &y.to_f32()))
        }
    }
}

/// Exact top-`k` for every query, sorted by `(distance, id)`.
///
/// Inner-product results are stored as negated inner products so rows stay
/// non-decreasing.
pub fn exact_knn(
    data: &VectorDataset,
    queries: &VectorDataset,
    k: usize,
    kind: DistanceKind,
) -> Result<GroundTruth> {
    if k == 0 || k > data.len() {
        return Err(invalid("k", format!("{k} must lie in 1..={}", data.len())));
    }
    if queries.dims() != data.dims() {
        return Err(Error::DimensionMismatch {
            expected: data.dims(),
            actual: queries.dims(),
        });
    }
    let rows: Vec<Vec<(Key, u32)>> = (0..queries.len())
        .into_par_iter()
        .map(|qi| {
            let q = queries.row(qi);
            let mut all: Vec<(Key, u32)> = (0..data.len())
                .map(|i| (key(data, i, q, kind), i as u32))
                .collect();
            let by = |a: &(Key, u32), b: &(Key, u32)| a.0.cmp(&b.0).then(a.1.cmp(&b.1));
            if k < all.len() {
                all.select_nth_unstable_by(k - 1, by);
                all.truncate(k);
            }
            all.sort_unstable_by(by);
            all
        })
        .collect();
    let mut ids = Vec::with_capacity(queries.len() * k);
    let mut distances = Vec::with_capacity(queries.len() * k);
    for row in rows {
        for (key, id) in row {
            ids.push(id);
            distances.push(key.value());
        }
    }
    GroundTruth::new(queries.len(), k, ids, distances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, Distribution};

    #[test]
    fn full_k_returns_everything_sorted() {
        let data = VectorDataset::from_f32(1, vec![5.0, 1.0, 3.0, 1.0]).unwrap();
        let q = VectorDataset::from_f32(1, vec![2.0]).unwrap();
        let gt = exact_knn(&data, &q, 4, DistanceKind::SquaredEuclidean).unwrap();
        assert_eq!(gt.ids, vec![1, 2, 3, 0]);
        assert_eq!(gt.distances, vec![1.0, 1.0, 1.0, 9.0]);
    }

    #[test]
    fn stored_query_ranks_itself_first() {
        let data = gen_synthetic(300, 8, 3, Distribution::Gaussian).unwrap();
        let q = data.slice(17..18).unwrap();
        let gt = exact_knn(&data, &q, 5, DistanceKind::SquaredEuclidean).unwrap();
        assert_eq!(gt.ids[0], 17);
        assert_eq!(gt.distances[0], 0.0);
    }

    #[test]
    fn bad_k_and_dims() {
        let data = VectorDataset::from_f32(2, vec![0.0; 4]).unwrap();
        let q = VectorDataset::from_f32(2, vec![0.0; 2]).unwrap();
        assert!(exact_knn(&data, &q, 0, DistanceKind::SquaredEuclidean).is_err());
        assert!(exact_knn(&data, &q, 3, DistanceKind::SquaredEuclidean).is_err());
        let q3 = VectorDataset::from_f32(3, vec![0.0; 3]).unwrap();
        assert!(exact_knn(&data, &q3, 1, DistanceKind::SquaredEuclidean).is_err());
    }

    #[test]
    fn u8_ties_are_exact() {
        let data = VectorDataset::from_u8(1, vec![10, 0, 20, 10]).unwrap();
        let q = VectorDataset::from_u8(1, vec![10]).unwrap();
        let gt = exact_knn(&data, &q, 4, DistanceKind::SquaredEuclidean).unwrap();
        assert_eq!(gt.ids, vec![0, 3, 1, 2]);
    }

    #[test]
    fn inner_product_orders_by_descending_dot() {
        let data = VectorDataset::from_f32(2, vec![1.0, 0.0, 0.0, 1.0, 2.0, 2.0]).unwrap();
        let q = VectorDataset::from_f32(2, vec![2.0, 1.0]).unwrap();
        let gt = exact_knn(&data, &q, 3, DistanceKind::InnerProduct).unwrap();
        assert_eq!(gt.ids, vec![2, 0, 1]);
        assert_eq!(gt.distances, vec![-6.0, -2.0, -1.0]);
    }

    /// Independent f64 scan with a full sort, no selection step.
    fn reference(data: &VectorDataset, queries: &VectorDataset, k: usize) -> Vec<u32> {
        let mut out = Vec::new();
        for qi in 0..queries.len() {
            let q = queries.row_f32(qi).unwrap();
            let mut all: Vec<(f64, u32)> = (0..data.len())
                .map(|i| {
                    let x = data.row_f32(i).unwrap();
                    let d = x.iter().zip(q).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
                    (d, i as u32)
                })
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            out.extend(all[..k].iter().map(|p| p.1));
        }
        out
    }

    #[test]
    fn agrees_with_f64_reference() {
        let data = gen_synthetic(1000, 32, 41, Distribution::Gaussian).unwrap();
        let queries = gen_synthetic(50, 32, 42, Distribution::Gaussian).unwrap();
        let gt = exact_knn(&data, &queries, 10, DistanceKind::SquaredEuclidean).unwrap();
        assert_eq!(gt.ids, reference(&data, &queries, 10));
        for q in 0..queries.len() {
            for (&id, &d) in gt.ids_row(q).iter().zip(gt.dist_row(q)) {
                let again = sq_l2_f32(data.row_f32(id as usize).unwrap(), queries.row_f32(q).unwrap());
                assert_eq!(again, d);
            }
        }
    }

    #[test]
    fn permutation_invariant() {
        let data = gen_synthetic(200, 6, 5, Distribution::Gaussian).unwrap();
        let queries = gen_synthetic(10, 6, 6, Distribution::Gaussian).unwrap();
        let perm: Vec<usize> = (0..200).map(|i| (i * 37) % 200).collect();
        let shuffled = VectorDataset::from_rows(
            &perm.iter().map(|&i| data.row_f32(i).unwrap().to_vec()).collect::<Vec<_>>(),
        )
        .unwrap();
        let a = exact_knn(&data, &queries, 8, DistanceKind::SquaredEuclidean).unwrap();
        let b = exact_knn(&shuffled, &queries, 8, DistanceKind::SquaredEuclidean).unwrap();
        for q in 0..10 {
            let mut x: Vec<u32> = a.ids_row(q).to_vec();
            let mut y: Vec<u32> = b.ids_row(q).iter().map(|&j| perm[j as usize] as u32).collect();
            x.sort_unstable();
            y.sort_unstable();
            assert_eq!(x, y);
        }
    }
}
