//! Row-major vector storage.
//!
//! A [`VectorDataset`] owns `count × dims` elements of a single [`ElementKind`].
//! Floating point rows are checked for finiteness when they enter the store, so
//! the distance kernels never see NaN or infinity.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::distance::{sq_l2_f32, sq_l2_u8};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementKind {
    U8,
    F32,
}

impl ElementKind {
    pub fn byte_width(self) -> usize {
        match self {
            ElementKind::U8 => 1,
            ElementKind::F32 => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

/// Borrowed view of a single vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VectorRef<'a> {
    U8(&'a [u8]),
    F32(&'a [f32]),
}

impl<'a> VectorRef<'a> {
    pub fn kind(&self) -> ElementKind {
        match self {
            VectorRef::U8(_) => ElementKind::U8,
            VectorRef::F32(_) => ElementKind::F32,
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            VectorRef::U8(v) => v.len(),
            VectorRef::F32(v) => v.len(),
        }
    }

    /// Widens the view to owned `f32` coordinates.
    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            VectorRef::U8(v) => v.iter().map(|&x| x as f32).collect(),
            VectorRef::F32(v) => v.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorDataset {
    dims: usize,
    count: usize,
    storage: Storage,
}

impl VectorDataset {
    /// Wraps a row-major `f32` buffer, rejecting non-finite elements.
    pub fn from_f32(dims: usize, data: Vec<f32>) -> Result<Self> {
        let count = check_shape(dims, data.len())?;
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dims,
                col: pos % dims,
            });
        }
        Ok(Self {
            dims,
            count,
            storage: Storage::F32(data),
        })
    }

    pub fn from_u8(dims: usize, data: Vec<u8>) -> Result<Self> {
        let count = check_shape(dims, data.len())?;
        Ok(Self {
            dims,
            count,
            storage: Storage::U8(data),
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dims = rows.first().map(Vec::len).ok_or(Error::Empty("rows"))?;
        let mut data = Vec::with_capacity(rows.len() * dims);
        for row in rows {
            if row.len() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_f32(dims, data)
    }

    pub fn kind(&self) -> ElementKind {
        match self.storage {
            Storage::U8(_) => ElementKind::U8,
            Storage::F32(_) => ElementKind::F32,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Size of the element buffer in bytes.
    pub fn byte_len(&self) -> usize {
        self.count * self.dims * self.kind().byte_width()
    }

    pub fn row(&self, i: usize) -> VectorRef<'_> {
        let span = i * self.dims..(i + 1) * self.dims;
        match &self.storage {
            Storage::U8(v) => VectorRef::U8(&v[span]),
            Storage::F32(v) => VectorRef::F32(&v[span]),
        }
    }

    pub fn row_f32(&self, i: usize) -> Option<&[f32]> {
        match &self.storage {
            Storage::F32(v) => Some(&v[i * self.dims..(i + 1) * self.dims]),
            Storage::U8(_) => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.storage {
            Storage::F32(v) => Some(v),
            Storage::U8(_) => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.storage {
            Storage::U8(v) => Some(v),
            Storage::F32(_) => None,
        }
    }

    /// Raw little-endian element bytes in row-major order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        match &self.storage {
            Storage::U8(v) => v.clone(),
            Storage::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    /// Converts to an `f32` dataset; a no-op clone for `f32` storage.
    pub fn to_f32(&self) -> VectorDataset {
        match &self.storage {
            Storage::F32(_) => self.clone(),
            Storage::U8(v) => VectorDataset {
                dims: self.dims,
                count: self.count,
                storage: Storage::F32(v.iter().map(|&x| x as f32).collect()),
            },
        }
    }

    /// Copies the rows in `range` into a new dataset.
    pub fn slice(&self, range: Range<usize>) -> Result<VectorDataset> {
        if range.start > range.end || range.end > self.count {
            return Err(invalid(
                "range",
                format!("{range:?} outside 0..{}", self.count),
            ));
        }
        let span = range.start * self.dims..range.end * self.dims;
        let storage = match &self.storage {
            Storage::U8(v) => Storage::U8(v[span].to_vec()),
            Storage::F32(v) => Storage::F32(v[span].to_vec()),
        };
        Ok(VectorDataset {
            dims: self.dims,
            count: range.len(),
            storage,
        })
    }

    /// Appends every row of `other`, which must share dims and element kind.
    pub fn append(&mut self, other: &VectorDataset) -> Result<()> {
        if other.dims != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                actual: other.dims,
            });
        }
        match (&mut self.storage, &other.storage) {
            (Storage::U8(a), Storage::U8(b)) => a.extend_from_slice(b),
            (Storage::F32(a), Storage::F32(b)) => a.extend_from_slice(b),
            _ => {
                return Err(Error::KindMismatch {
                    expected: self.kind(),
                    actual: other.kind(),
                })
            }
        }
        self.count += other.count;
        Ok(())
    }

    /// Squared Euclidean distance between two stored rows.
    #[inline]
    pub fn sq_dist(&self, i: usize, j: usize) -> f32 {
        let d = self.dims;
        match &self.storage {
            Storage::F32(v) => sq_l2_f32(&v[i * d..(i + 1) * d], &v[j * d..(j + 1) * d]),
            Storage::U8(v) => sq_l2_u8(&v[i * d..(i + 1) * d], &v[j * d..(j + 1) * d]) as f32,
        }
    }

    /// Squared Euclidean distance between a stored row and an external vector
    /// of matching kind and dims. Callers validate the query once up front.
    #[inline]
    pub(crate) fn sq_dist_to(&self, i: usize, query: VectorRef<'_>) -> f32 {
        let d = self.dims;
        match (&self.storage, query) {
            (Storage::F32(v), VectorRef::F32(q)) => sq_l2_f32(&v[i * d..(i + 1) * d], q),
            (Storage::U8(v), VectorRef::U8(q)) => sq_l2_u8(&v[i * d..(i + 1) * d], q) as f32,
            (Storage::U8(v), VectorRef::F32(q)) => {
                let row = &v[i * d..(i + 1) * d];
                let mut acc = 0.0f32;
                for (&a, &b) in row.iter().zip(q) {
                    let t = a as f32 - b;
                    acc += t * t;
                }
                acc
            }
            (Storage::F32(v), VectorRef::U8(q)) => {
                let row = &v[i * d..(i + 1) * d];
                let mut acc = 0.0f32;
                for (&a, &b) in row.iter().zip(q) {
                    let t = a - b as f32;
                    acc += t * t;
                }
                acc
            }
        }
    }

    pub(crate) fn check_query(&self, query: VectorRef<'_>) -> Result<()> {
        if query.dims() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                actual: query.dims(),
            });
        }
        if let VectorRef::F32(q) = query {
            if let Some(col) = q.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { row: 0, col });
            }
        }
        Ok(())
    }
}

fn check_shape(dims: usize, len: usize) -> Result<usize> {
    if dims == 0 {
        return Err(invalid("dims", "must be at least 1"));
    }
    if len % dims != 0 {
        return Err(invalid(
            "data",
            format!("buffer length {len} is not a multiple of dims {dims}"),
        ));
    }
    Ok(len / dims)
}

/// Shape of synthetic data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distribution {
    /// i.i.d. standard normal coordinates.
    Gaussian,
    /// A mixture of [`CLUSTER_COUNT`] Gaussian clusters in a latent space of
    /// [`LATENT_DIMS`] dimensions, embedded into the full space by a fixed
    /// random linear map plus small isotropic noise. The result has the low
    /// intrinsic dimension typical of real embeddings.
    Clustered,
}

pub const CLUSTER_COUNT: usize = 16;

/// Standard deviation of latent cluster centers, relative to the unit
/// within-cluster spread.
pub const CLUSTER_SPREAD: f32 = 2.0;

/// Latent dimensionality (capped at the output dimensionality).
pub const LATENT_DIMS: usize = 32;

/// Per-coordinate standard deviation of the isotropic noise term.
pub const CLUSTER_NOISE: f32 = 0.3;

/// Deterministic synthetic `f32` data.
///
/// For clustered data the centers and embedding depend only on
/// `(dims, seed)`, and rows are drawn one after another, so a longer draw
/// extends a shorter one. Callers wanting a query set from the same
/// clusters draw `count + queries` rows once and split the result with
/// [`VectorDataset::slice`].
pub fn gen_synthetic(
    count: usize,
    dims: usize,
    seed: u64,
    distribution: Distribution,
) -> Result<VectorDataset> {
    if count == 0 {
        return Err(invalid("count", "must be at least 1"));
    }
    if dims == 0 {
        return Err(invalid("dims", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(count * dims);
    match distribution {
        Distribution::Gaussian => {
            data.extend((0..count * dims).map(|_| rng.sample::<f32, _>(StandardNormal)));
        }
        Distribution::Clustered => {
            let latent = LATENT_DIMS.min(dims);
            let centers: Vec<f32> = (0..CLUSTER_COUNT * latent)
                .map(|_| CLUSTER_SPREAD * rng.sample::<f32, _>(StandardNormal))
                .collect();
            // Embedding entries have variance 1/latent, so a unit latent
            // step moves each output coordinate by about one unit.
            let scale = 1.0 / (latent as f32).sqrt();
            let embed: Vec<f32> = (0..latent * dims)
                .map(|_| scale * rng.sample::<f32, _>(StandardNormal))
                .collect();
            let mut z = vec![0.0f32; latent];
            for _ in 0..count {
                let c = rng.random_range(0..CLUSTER_COUNT);
                z.iter_mut()
                    .zip(&centers[c * latent..(c + 1) * latent])
                    .for_each(|(v, &m)| *v = m + rng.sample::<f32, _>(StandardNormal));
                let start = data.len();
                data.extend(
                    (0..dims).map(|_| CLUSTER_NOISE * rng.sample::<f32, _>(StandardNormal)),
                );
                let row = &mut data[start..];
                for (zl, e) in z.iter().zip(embed.chunks_exact(dims)) {
                    row.iter_mut().zip(e).for_each(|(x, &ej)| *x += zl * ej);
                }
            }
        }
    }
    VectorDataset::from_f32(dims, data)
}
