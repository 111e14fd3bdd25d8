//! Distance kernels and the inner-product to Euclidean reduction.
//!
//! Every comparison in the index is made on squared Euclidean distance; no
//! square root is taken anywhere. `f32` kernels accumulate into eight lanes
//! that are combined in a fixed tree, so results are identical run to run.

use crate::dataset::{ElementKind, VectorDataset, VectorRef};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DistanceKind {
    SquaredEuclidean,
    InnerProduct,
}

const LANES: usize = 8;

#[inline]
fn reduce_lanes(acc: [f32; LANES]) -> f32 {
    ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]))
}

/// Squared Euclidean distance between equal-length `f32` slices.
#[inline]
pub fn sq_l2_f32(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            let t = x[l] - y[l];
            acc[l] += t * t;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        let t = x - y;
        tail += t * t;
    }
    reduce_lanes(acc) + tail
}

/// Exact squared Euclidean distance between `u8` vectors, accumulated in 64 bits.
#[inline]
pub fn sq_l2_u8(a: &[u8], b: &[u8]) -> u64 {
    debug_assert_eq!(a.len(), b.len());
    // Each chunk of 4096 differences fits in a u32 (4096 * 255^2 < 2^32).
    let mut total = 0u64;
    for (x, y) in a.chunks(4096).zip(b.chunks(4096)) {
        let part: u32 = x
            .iter()
            .zip(y)
            .map(|(&p, &q)| {
                let t = p as i32 - q as i32;
                (t * t) as u32
            })
            .sum();
        total += part as u64;
    }
    total
}

/// Inner product of equal-length `f32` slices.
#[inline]
pub fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    reduce_lanes(acc) + tail
}

/// Checked squared Euclidean distance. `u8` inputs are computed exactly in
/// integers and then widened to `f64`.
pub fn sq_l2(a: VectorRef<'_>, b: VectorRef<'_>) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    match (a, b) {
        (VectorRef::F32(x), VectorRef::F32(y)) => Ok(sq_l2_f32(x, y) as f64),
        (VectorRef::U8(x), VectorRef::U8(y)) => Ok(sq_l2_u8(x, y) as f64),
        _ => Err(Error::KindMismatch {
            expected: a.kind(),
            actual: b.kind(),
        }),
    }
}

/// Checked inner product.
pub fn dot(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(dot_f32(a, b))
}

/// An `f32` dataset with one appended synthetic coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedDataset {
    pub data: VectorDataset,
    /// Largest row norm of the original data.
    pub max_norm: f32,
}

impl AugmentedDataset {
    pub fn base_dims(&self) -> usize {
        self.data.dims() - 1
    }
}

/// Maps data rows `x` to `[x, sqrt(M² − ‖x‖²)]` and queries `q` to `[q, 0]`,
/// where `M` is the largest data norm. Squared Euclidean order on the
/// augmented rows then equals descending inner-product order on the originals.
pub fn mips_augment(
    data: &VectorDataset,
    queries: &VectorDataset,
) -> Result<(AugmentedDataset, AugmentedDataset)> {
    if data.is_empty() {
        return Err(Error::Empty("data"));
    }
    let rows = data.as_f32().ok_or(Error::KindMismatch {
        expected: ElementKind::F32,
        actual: data.kind(),
    })?;
    let qrows = queries.as_f32().ok_or(Error::KindMismatch {
        expected: ElementKind::F32,
        actual: queries.kind(),
    })?;
    if queries.dims() != data.dims() {
        return Err(Error::DimensionMismatch {
            expected: data.dims(),
            actual: queries.dims(),
        });
    }
    let dims = data.dims();
    let norms: Vec<f64> = rows
        .chunks_exact(dims)
        .map(|r| r.iter().map(|&x| x as f64 * x as f64).sum())
        .collect();
    if let Some(row) = norms.iter().position(|n| !n.is_finite()) {
        return Err(Error::NonFinite { row, col: 0 });
    }
    let max_sq = norms.iter().copied().fold(0.0f64, f64::max);

    let mut out = Vec::with_capacity(data.len() * (dims + 1));
    for (r, &n) in rows.chunks_exact(dims).zip(&norms) {
        out.extend_from_slice(r);
        out.push((max_sq - n).max(0.0).sqrt() as f32);
    }
    let mut qout = Vec::with_capacity(queries.len() * (dims + 1));
    for q in qrows.chunks_exact(dims) {
        qout.extend_from_slice(q);
        qout.push(0.0);
    }
    let max_norm = max_sq.sqrt() as f32;
    Ok((
        AugmentedDataset {
            data: VectorDataset::from_f32(dims + 1, out)?,
            max_norm,
        },
        AugmentedDataset {
            data: VectorDataset::from_f32(dims + 1, qout)?,
            max_norm,
        },
    ))
}
