//! RaBitQ quantization with `m`-bit scalar codes.
//!
//! Each stored vector `v` is centered on the dataset mean `c`, normalized,
//! and rotated by a seeded random orthonormal matrix `P`, giving a unit
//! vector `o`. Coordinates of `o` are quantized to `m` bits on a symmetric
//! per-vector grid of step `Δ = 2·max|oᵢ| / (2^m − 1)`:
//!
//! ```text
//! uᵢ = clamp(round(oᵢ/Δ + h), 0, 2^m − 1)     h = (2^m − 1)/2
//! ō  = Δ·(u − h·1)
//! ```
//!
//! With `n = ‖v − c‖` and `q' = P(q − c)`, expanding
//! `‖q − v‖² = ‖q − c‖² + n² − 2n⟨o, q'⟩` and estimating
//! `⟨o, q'⟩ ≈ ⟨ō, q'⟩ / ⟨o, ō⟩` yields
//!
//! ```text
//! est = query_add + data_add + data_rescale · (⟨u, q'⟩ − query_sumq)
//!   query_add    = ‖q − c‖²
//!   query_sumq   = h · Σ q'ᵢ
//!   data_add     = n²
//!   data_rescale = −2 · n·Δ / ⟨o, ō⟩
//! ```
//!
//! Because queries are centered before rotation, the `⟨c, ō⟩` correction in
//! the uncentered form of `data_add` is identically zero here, and the `n`
//! factor of the cross term is folded into the rescale together with `Δ`.
//! The half-range constant in `query_sumq` must be `(2^m − 1)/2` so that it
//! cancels the shift baked into `u`; the estimator tests verify this
//! against exact distances.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dataset::{ElementKind, VectorDataset};
use crate::distance::dot_f32;
use crate::error::{invalid, Error, Result};
use crate::graph::ByteReader;

pub const SUPPORTED_BITS: [u32; 4] = [1, 2, 4, 8];

const QUANT_MAGIC: u32 = u32::from_le_bytes(*b"BGRQ");
const QUANT_VERSION: u32 = 1;

/// Seeded random orthonormal `dims × dims` matrix (Gram-Schmidt on a
/// Gaussian matrix), stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Rotation {
    dims: usize,
    seed: u64,
    matrix: Vec<f32>,
}

impl Rotation {
    pub fn new(dims: usize, seed: u64) -> Result<Self> {
        if dims == 0 {
            return Err(invalid("dims", "must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m: Vec<f64> = (0..dims * dims)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        for i in 0..dims {
            // Two rounds of projection keep the basis orthogonal to f64
            // precision even for large dims.
            for _ in 0..2 {
                for j in 0..i {
                    let (done, rest) = m.split_at_mut(i * dims);
                    let prev = &done[j * dims..(j + 1) * dims];
                    let row = &mut rest[..dims];
                    let proj: f64 = row.iter().zip(prev).map(|(a, b)| a * b).sum();
                    row.iter_mut().zip(prev).for_each(|(a, b)| *a -= proj * b);
                }
            }
            let row = &mut m[i * dims..(i + 1) * dims];
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            row.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(Self {
            dims,
            seed,
            matrix: m.into_iter().map(|x| x as f32).collect(),
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn apply(&self, v: &[f32]) -> Result<Vec<f32>> {
        if v.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                actual: v.len(),
            });
        }
        Ok(self.apply_unchecked(v))
    }

    fn apply_unchecked(&self, v: &[f32]) -> Vec<f32> {
        self.matrix
            .chunks_exact(self.dims)
            .map(|row| dot_f32(row, v))
            .collect()
    }
}

/// Rotates `v` by the orthonormal matrix derived from `seed`.
pub fn rotate(seed: u64, v: &[f32]) -> Result<Vec<f32>> {
    Rotation::new(v.len(), seed)?.apply(v)
}

/// Packs `m`-bit values LSB-first; value `i` occupies bits `i·m .. (i+1)·m`.
pub fn pack_codes(values: &[u8], bits: u32) -> Vec<u8> {
    let bits = bits as usize;
    let mut out = vec![0u8; (values.len() * bits).div_ceil(8)];
    for (i, &v) in values.iter().enumerate() {
        let bit = i * bits;
        out[bit / 8] |= v << (bit % 8);
    }
    out
}

pub fn unpack_codes(packed: &[u8], bits: u32, dims: usize) -> Vec<u8> {
    let bits = bits as usize;
    let mask = ((1u16 << bits) - 1) as u8;
    (0..dims)
        .map(|i| {
            let bit = i * bits;
            (packed[bit / 8] >> (bit % 8)) & mask
        })
        .collect()
}

/// Byte-addressable packed code, read strictly front to back.
pub trait PackedCode {
    fn byte_len(&self) -> usize;
    fn byte(&self, i: usize) -> u8;
}

impl PackedCode for [u8] {
    #[inline]
    fn byte_len(&self) -> usize {
        self.len()
    }

    #[inline]
    fn byte(&self, i: usize) -> u8 {
        self[i]
    }
}

/// `⟨u, q⟩` for packed `m`-bit codes `u`: one forward pass over the bytes,
/// no lookup tables.
#[inline]
pub fn code_dot<C: PackedCode + ?Sized>(code: &C, bits: u32, q: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    match bits {
        8 => {
            for (i, &x) in q.iter().enumerate() {
                acc[i % 8] += code.byte(i) as f32 * x;
            }
        }
        _ => {
            let per_byte = 8 / bits as usize;
            let mask = (1u8 << bits) - 1;
            let mut qi = q.iter();
            for b in 0..code.byte_len() {
                let byte = code.byte(b);
                for slot in 0..per_byte {
                    match qi.next() {
                        Some(&x) => {
                            let u = (byte >> (slot * bits as usize)) & mask;
                            acc[slot] += u as f32 * x;
                        }
                        None => break,
                    }
                }
            }
        }
    }
    ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]))
}

/// Per-query terms of the estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryPrep {
    pub rotated_query: Vec<f32>,
    pub query_add: f32,
    pub query_sumq: f32,
}

/// Quantized vector set: centroid, rotation seed, packed codes and two
/// metadata floats per vector.
#[derive(Clone, Debug, PartialEq)]
pub struct RaBitQIndex {
    dims: usize,
    bits: u32,
    seed: u64,
    centroid: Vec<f32>,
    rotation: Rotation,
    codes: Vec<u8>,
    data_add: Vec<f32>,
    data_rescale: Vec<f32>,
}

fn half_range(bits: u32) -> f32 {
    ((1u32 << bits) - 1) as f32 / 2.0
}

/// Quantizes a unit vector. Returns codes and the grid step.
pub(crate) fn quantize_unit(o: &[f32], bits: u32) -> (Vec<u8>, f32) {
    let levels = ((1u32 << bits) - 1) as f32;
    let h = levels / 2.0;
    let max_abs = o.iter().fold(0.0f32, |m, x| m.max(x.abs()));
    let delta = 2.0 * max_abs / levels;
    let codes = o
        .iter()
        .map(|&x| (x / delta + h).round().clamp(0.0, levels) as u8)
        .collect();
    (codes, delta)
}

fn check_bits(bits: u32) -> Result<()> {
    if SUPPORTED_BITS.contains(&bits) {
        Ok(())
    } else {
        Err(invalid("bits", format!("{bits} not in {SUPPORTED_BITS:?}")))
    }
}

/// Encodes one vector: packed code, `data_add`, `data_rescale`.
fn encode(
    rotation: &Rotation,
    centroid: &[f32],
    bits: u32,
    v: &[f32],
) -> (Vec<u8>, f32, f32) {
    let residual: Vec<f32> = v.iter().zip(centroid).map(|(a, b)| a - b).collect();
    let norm_sq: f64 = residual.iter().map(|&x| x as f64 * x as f64).sum();
    if norm_sq == 0.0 {
        let mid = vec![((1u16 << bits) >> 1) as u8; v.len()];
        return (pack_codes(&mid, bits), 0.0, 0.0);
    }
    let norm = norm_sq.sqrt();
    let unit: Vec<f32> = residual.iter().map(|&x| (x as f64 / norm) as f32).collect();
    let o = rotation.apply_unchecked(&unit);
    let (u, delta) = quantize_unit(&o, bits);
    let h = half_range(bits) as f64;
    let o_dot_obar: f64 = o
        .iter()
        .zip(&u)
        .map(|(&oi, &ui)| oi as f64 * delta as f64 * (ui as f64 - h))
        .sum();
    let data_add = norm_sq as f32;
    let data_rescale = (-2.0 * norm * delta as f64 / o_dot_obar) as f32;
    (pack_codes(&u, bits), data_add, data_rescale)
}

/// Fits a quantizer on `dataset` with `bits` per dimension.
pub fn fit(dataset: &VectorDataset, bits: u32, seed: u64) -> Result<RaBitQIndex> {
    check_bits(bits)?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let rows = dataset.as_f32().ok_or(Error::KindMismatch {
        expected: ElementKind::F32,
        actual: dataset.kind(),
    })?;
    let dims = dataset.dims();
    let mut mean = vec![0.0f64; dims];
    for row in rows.chunks_exact(dims) {
        mean.iter_mut().zip(row).for_each(|(m, &x)| *m += x as f64);
    }
    let centroid: Vec<f32> = mean
        .iter()
        .map(|m| (m / dataset.len() as f64) as f32)
        .collect();
    let rotation = Rotation::new(dims, seed)?;

    let encoded: Vec<(Vec<u8>, f32, f32)> = rows
        .par_chunks_exact(dims)
        .map(|v| encode(&rotation, &centroid, bits, v))
        .collect();
    let stride = (dims * bits as usize).div_ceil(8);
    let mut codes = Vec::with_capacity(stride * dataset.len());
    let mut data_add = Vec::with_capacity(dataset.len());
    let mut data_rescale = Vec::with_capacity(dataset.len());
    for (c, a, r) in encoded {
        codes.extend_from_slice(&c);
        data_add.push(a);
        data_rescale.push(r);
    }
    Ok(RaBitQIndex {
        dims,
        bits,
        seed,
        centroid,
        rotation,
        codes,
        data_add,
        data_rescale,
    })
}

impl RaBitQIndex {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.data_add.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data_add.is_empty()
    }

    pub fn centroid(&self) -> &[f32] {
        &self.centroid
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    /// Packed code bytes per vector, `ceil(dims·bits/8)`.
    pub fn code_bytes(&self) -> usize {
        (self.dims * self.bits as usize).div_ceil(8)
    }

    /// Code bytes plus the two `f32` metadata fields.
    pub fn bytes_per_vector(&self) -> usize {
        self.code_bytes() + 2 * std::mem::size_of::<f32>()
    }

    pub fn code(&self, id: usize) -> &[u8] {
        let s = self.code_bytes();
        &self.codes[id * s..(id + 1) * s]
    }

    /// `(data_add, data_rescale)` for vector `id`.
    pub fn metadata(&self, id: usize) -> (f32, f32) {
        (self.data_add[id], self.data_rescale[id])
    }

    pub fn prep_query(&self, q: &[f32]) -> Result<QueryPrep> {
        if q.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                actual: q.len(),
            });
        }
        let centered: Vec<f32> = q.iter().zip(&self.centroid).map(|(a, b)| a - b).collect();
        let query_add: f64 = centered.iter().map(|&x| x as f64 * x as f64).sum();
        let rotated_query = self.rotation.apply_unchecked(&centered);
        let sum: f64 = rotated_query.iter().map(|&x| x as f64).sum();
        Ok(QueryPrep {
            query_sumq: (half_range(self.bits) as f64 * sum) as f32,
            query_add: query_add as f32,
            rotated_query,
        })
    }

    /// Estimated squared distance between stored vector `id` and a prepared query.
    #[inline]
    pub fn estimate(&self, id: usize, prep: &QueryPrep) -> f32 {
        self.estimate_with(self.code(id), id, prep)
    }

    /// Estimator over an arbitrary [`PackedCode`] carrying vector `id`'s code.
    #[inline]
    pub fn estimate_with<C: PackedCode + ?Sized>(&self, code: &C, id: usize, prep: &QueryPrep) -> f32 {
        let ip = code_dot(code, self.bits, &prep.rotated_query);
        prep.query_add + self.data_add[id] + self.data_rescale[id] * (ip - prep.query_sumq)
    }

    pub fn estimate_sq_dist(&self, id: usize, prep: &QueryPrep) -> Result<f32> {
        if id >= self.len() {
            return Err(invalid("vector_id", format!("{id} out of range {}", self.len())));
        }
        if prep.rotated_query.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                actual: prep.rotated_query.len(),
            });
        }
        Ok(self.estimate(id, prep))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(32 + 4 * self.dims + n * self.bytes_per_vector());
        out.extend_from_slice(&QUANT_MAGIC.to_le_bytes());
        out.extend_from_slice(&QUANT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims as u32).to_le_bytes());
        out.extend_from_slice(&self.bits.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for c in &self.centroid {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for i in 0..n {
            out.extend_from_slice(&self.data_add[i].to_le_bytes());
            out.extend_from_slice(&self.data_rescale[i].to_le_bytes());
        }
        out.extend_from_slice(&self.codes);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.u32()? != QUANT_MAGIC {
            return Err(Error::Format("bad quantizer magic".into()));
        }
        let version = r.u32()?;
        if version != QUANT_VERSION {
            return Err(Error::Format(format!("unsupported quantizer version {version}")));
        }
        let dims = r.u32()? as usize;
        let bits = r.u32()?;
        check_bits(bits).map_err(|e| Error::Format(e.to_string()))?;
        if dims == 0 {
            return Err(Error::Format("zero dims".into()));
        }
        let n = usize::try_from(r.u64()?).map_err(|_| Error::Format("count overflows".into()))?;
        let seed = r.u64()?;
        let centroid = r.f32_vec(dims)?;
        let meta = r.f32_vec(n.checked_mul(2).ok_or_else(|| Error::Format("count overflows".into()))?)?;
        let stride = (dims * bits as usize).div_ceil(8);
        let code_len = n
            .checked_mul(stride)
            .ok_or_else(|| Error::Format("code size overflows".into()))?;
        let codes = r.take(code_len)?.to_vec();
        r.finish()?;
        Ok(RaBitQIndex {
            dims,
            bits,
            seed,
            centroid,
            rotation: Rotation::new(dims, seed)?,
            codes,
            data_add: meta.iter().step_by(2).copied().collect(),
            data_rescale: meta.iter().skip(1).step_by(2).copied().collect(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
