//! Binary vector and ground-truth files in the big-ann-benchmarks layout.
//!
//! Vectors (`.fbin`, `.u8bin`): `u32 count, u32 dims` followed by
//! `count × dims` row-major elements. Ground truth: `u32 queries, u32 k`,
//! then `queries × k` `i32` ids, then `queries × k` `f32` distances.
//! All fields are little-endian.

use std::fs;
use std::path::Path;

use crate::dataset::{ElementKind, VectorDataset};
use crate::error::{Error, Result};

const HEADER_LEN: usize = 8;

fn header(bytes: &[u8]) -> Result<(usize, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the 8-byte header",
            bytes.len()
        )));
    }
    let a = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let b = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    Ok((a, b))
}

fn expect_len(actual: usize, expected: usize) -> Result<()> {
    match actual.cmp(&expected) {
        std::cmp::Ordering::Less => Err(Error::Format(format!(
            "truncated payload: {actual} bytes, expected {expected}"
        ))),
        std::cmp::Ordering::Greater => Err(Error::Format(format!(
            "{} trailing bytes after payload",
            actual - expected
        ))),
        std::cmp::Ordering::Equal => Ok(()),
    }
}

/// Parses an in-memory vector file.
pub fn parse_vectors(bytes: &[u8], kind: ElementKind) -> Result<VectorDataset> {
    let (count, dims) = header(bytes)?;
    if count == 0 || dims == 0 {
        return Err(Error::Format(format!(
            "count and dims must be positive, got {count}×{dims}"
        )));
    }
    let payload = count
        .checked_mul(dims)
        .and_then(|n| n.checked_mul(kind.byte_width()))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format(format!("size of {count}×{dims} overflows")))?;
    expect_len(bytes.len(), payload)?;
    let body = &bytes[HEADER_LEN..];
    match kind {
        ElementKind::U8 => VectorDataset::from_u8(dims, body.to_vec()),
        ElementKind::F32 => VectorDataset::from_f32(
            dims,
            body.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    }
}

pub fn encode_vectors(dataset: &VectorDataset) -> Result<Vec<u8>> {
    let count = u32::try_from(dataset.len())
        .map_err(|_| Error::Format("count exceeds u32".into()))?;
    let dims = u32::try_from(dataset.dims())
        .map_err(|_| Error::Format("dims exceed u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + dataset.byte_len());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dims.to_le_bytes());
    out.extend_from_slice(&dataset.to_le_bytes());
    Ok(out)
}

pub fn read_vectors_bin(path: impl AsRef<Path>, kind: ElementKind) -> Result<VectorDataset> {
    parse_vectors(&fs::read(path)?, kind)
}

pub fn write_vectors_bin(path: impl AsRef<Path>, dataset: &VectorDataset) -> Result<()> {
    fs::write(path, encode_vectors(dataset)?)?;
    Ok(())
}

/// Picks the element kind from a file extension (`.u8bin` or `.fbin`).
pub fn kind_from_path(path: &Path) -> Option<ElementKind> {
    match path.extension()?.to_str()? {
        "u8bin" => Some(ElementKind::U8),
        "fbin" => Some(ElementKind::F32),
        _ => None,
    }
}

/// Exact top-k neighbors per query.
///
/// For inner-product ground truth the stored distance is the negated inner
/// product, so every row is non-decreasing regardless of metric.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub query_count: usize,
    pub k: usize,
    pub ids: Vec<u32>,
    pub distances: Vec<f32>,
}

impl GroundTruth {
    pub fn new(query_count: usize, k: usize, ids: Vec<u32>, distances: Vec<f32>) -> Result<Self> {
        let gt = GroundTruth {
            query_count,
            k,
            ids,
            distances,
        };
        gt.validate()?;
        Ok(gt)
    }

    pub fn ids_row(&self, q: usize) -> &[u32] {
        &self.ids[q * self.k..(q + 1) * self.k]
    }

    pub fn dist_row(&self, q: usize) -> &[f32] {
        &self.distances[q * self.k..(q + 1) * self.k]
    }

    /// Checks shapes, per-row id uniqueness and distance ordering.
    pub fn validate(&self) -> Result<()> {
        let n = self.query_count * self.k;
        if self.ids.len() != n || self.distances.len() != n {
            return Err(Error::Format(format!(
                "ground truth arrays do not match {}×{}",
                self.query_count, self.k
            )));
        }
        for q in 0..self.query_count {
            let d = self.dist_row(q);
            if d.iter().any(|x| x.is_nan()) {
                return Err(Error::Format(format!("NaN distance in row {q}")));
            }
            if d.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Format(format!("distance row {q} is not sorted")));
            }
            let mut ids = self.ids_row(q).to_vec();
            ids.sort_unstable();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Format(format!("duplicate id in row {q}")));
            }
        }
        Ok(())
    }

    /// Checks that every id addresses a row of a dataset with `count` rows.
    pub fn validate_against(&self, count: usize) -> Result<()> {
        match self.ids.iter().find(|&&id| id as usize >= count) {
            Some(&id) => Err(Error::Format(format!(
                "ground-truth id {id} outside dataset of {count} rows"
            ))),
            None => Ok(()),
        }
    }
}

pub fn parse_ground_truth(bytes: &[u8]) -> Result<GroundTruth> {
    let (query_count, k) = header(bytes)?;
    let cells = query_count
        .checked_mul(k)
        .ok_or_else(|| Error::Format("ground-truth size overflows".into()))?;
    let expected = cells
        .checked_mul(8)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format("ground-truth size overflows".into()))?;
    expect_len(bytes.len(), expected)?;
    let body = &bytes[HEADER_LEN..];
    let (id_bytes, dist_bytes) = body.split_at(cells * 4);
    let mut ids = Vec::with_capacity(cells);
    for c in id_bytes.chunks_exact(4) {
        let id = i32::from_le_bytes(c.try_into().unwrap());
        if id < 0 {
            return Err(Error::Format(format!("negative ground-truth id {id}")));
        }
        ids.push(id as u32);
    }
    let distances = dist_bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    GroundTruth::new(query_count, k, ids, distances)
}

pub fn encode_ground_truth(gt: &GroundTruth) -> Result<Vec<u8>> {
    gt.validate()?;
    let mut out = Vec::with_capacity(HEADER_LEN + gt.ids.len() * 8);
    out.extend_from_slice(&(gt.query_count as u32).to_le_bytes());
    out.extend_from_slice(&(gt.k as u32).to_le_bytes());
    for &id in &gt.ids {
        let id = i32::try_from(id).map_err(|_| Error::Format(format!("id {id} exceeds i32")))?;
        out.extend_from_slice(&id.to_le_bytes());
    }
    for &d in &gt.distances {
        out.extend_from_slice(&d.to_le_bytes());
    }
    Ok(out)
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    parse_ground_truth(&fs::read(path)?)
}

pub fn write_ground_truth(path: impl AsRef<Path>, gt: &GroundTruth) -> Result<()> {
    fs::write(path, encode_ground_truth(gt)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn le(values: &[u32]) -> Vec<u8> {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    #[test]
    fn parses_header_and_floats() {
        let mut bytes = le(&[2, 3]);
        for v in [1.0f32, 2.0, 3.0, -4.0, 5.5, 6.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let ds = parse_vectors(&bytes, ElementKind::F32).unwrap();
        assert_eq!((ds.len(), ds.dims()), (2, 3));
        assert_eq!(ds.as_f32().unwrap(), &[1.0, 2.0, 3.0, -4.0, 5.5, 6.0]);
    }

    #[test]
    fn truncated_and_trailing_are_errors() {
        let mut bytes = le(&[2, 3]);
        bytes.extend_from_slice(&[0u8; 23]);
        assert!(parse_vectors(&bytes, ElementKind::F32).is_err());
        bytes.extend_from_slice(&[0u8; 2]);
        assert!(parse_vectors(&bytes, ElementKind::F32).is_err());
        bytes.pop();
        assert!(parse_vectors(&bytes, ElementKind::F32).is_ok());
        assert!(parse_vectors(&[1, 0, 0], ElementKind::U8).is_err());
    }

    #[test]
    fn zero_shape_and_overflow_are_errors() {
        assert!(parse_vectors(&le(&[0, 3]), ElementKind::U8).is_err());
        assert!(parse_vectors(&le(&[3, 0]), ElementKind::U8).is_err());
        assert!(parse_vectors(&le(&[u32::MAX, u32::MAX]), ElementKind::F32).is_err());
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let mut bytes = le(&[1, 1]);
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            parse_vectors(&bytes, ElementKind::F32),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn file_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.fbin");
        write_vectors_bin(&p, &VectorDataset::from_f32(1, vec![2.5]).unwrap()).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 12);
        let p = dir.path().join("two.u8bin");
        write_vectors_bin(&p, &VectorDataset::from_u8(2, vec![1, 2, 3, 4]).unwrap()).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 12);
        assert_eq!(read_vectors_bin(&p, ElementKind::U8).unwrap().as_u8().unwrap(), &[1, 2, 3, 4]);
    }

    #[test]
    fn writing_into_missing_dir_surfaces_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("missing").join("x.fbin");
        let err = write_vectors_bin(&p, &VectorDataset::from_f32(1, vec![0.0]).unwrap());
        assert!(matches!(err, Err(Error::Io(_))));
    }

    #[test]
    fn ground_truth_layout() {
        let gt = GroundTruth::new(1, 2, vec![5, 9], vec![0.0, 1.5]).unwrap();
        let bytes = encode_ground_truth(&gt).unwrap();
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[8..12], &5i32.to_le_bytes());
        assert_eq!(parse_ground_truth(&bytes).unwrap(), gt);
    }

    #[test]
    fn ground_truth_validation() {
        let mut bytes = le(&[1, 2, 5, 9]);
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(parse_ground_truth(&bytes).is_err(), "unsorted row");

        let mut bytes = le(&[1, 2, 5, 5]);
        bytes.extend_from_slice(&[0u8; 8]);
        assert!(parse_ground_truth(&bytes).is_err(), "duplicate id");

        let mut bytes = le(&[1, 1]);
        bytes.extend_from_slice(&(-1i32).to_le_bytes());
        bytes.extend_from_slice(&[0u8; 4]);
        assert!(parse_ground_truth(&bytes).is_err(), "negative id");

        let mut bytes = le(&[1, 1, 0]);
        bytes.extend_from_slice(&[0u8; 5]);
        assert!(parse_ground_truth(&bytes).is_err(), "trailing byte");

        let gt = GroundTruth::new(1, 2, vec![5, 9], vec![0.0, 1.5]).unwrap();
        assert!(gt.validate_against(10).is_ok());
        assert!(gt.validate_against(9).is_err());
    }

    #[test]
    fn kind_from_extension() {
        assert_eq!(kind_from_path(Path::new("a/b.u8bin")), Some(ElementKind::U8));
        assert_eq!(kind_from_path(Path::new("b.fbin")), Some(ElementKind::F32));
        assert_eq!(kind_from_path(Path::new("b.bin")), None);
    }

    proptest! {
        #[test]
        fn vector_round_trip(
            dims in 1usize..9,
            rows in proptest::collection::vec(proptest::collection::vec(-1e6f32..1e6, 8), 1..20),
            as_u8 in any::<bool>(),
        ) {
            let flat: Vec<f32> = rows.iter().flat_map(|r| r[..dims].to_vec()).collect();
            let ds = if as_u8 {
                VectorDataset::from_u8(dims, flat.iter().map(|x| (x.abs() as u32 % 256) as u8).collect()).unwrap()
            } else {
                VectorDataset::from_f32(dims, flat).unwrap()
            };
            let bytes = encode_vectors(&ds).unwrap();
            prop_assert_eq!(parse_vectors(&bytes, ds.kind()).unwrap(), ds);
        }

        #[test]
        fn ground_truth_round_trip(
            rows in proptest::collection::vec(proptest::collection::vec(0.0f32..100.0, 4), 1..10),
        ) {
            let k = 4;
            let mut ids = Vec::new();
            let mut distances = Vec::new();
            for (q, row) in rows.iter().enumerate() {
                let mut r = row.clone();
                r.sort_by(|a, b| a.partial_cmp(b).unwrap());
                distances.extend(r);
                ids.extend((0..k as u32).map(|j| j * 7 + q as u32));
            }
            let gt = GroundTruth::new(rows.len(), k, ids, distances).unwrap();
            let bytes = encode_ground_truth(&gt).unwrap();
            prop_assert_eq!(parse_ground_truth(&bytes).unwrap(), gt);
        }
    }
}
