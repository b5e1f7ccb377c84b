//! The SCPE container for sub-prompt sets and trajectories.
//!
//! Layout, all integers u32 little-endian:
//!
//! ```text
//! magic "SCPE" | version | record_count | rank | shape[rank] | dtype
//! record_count × product(shape) × f32 LE
//! [ metadata_len | metadata JSON (UTF-8) ]
//! ```
//!
//! dtype 0 is the only one defined (float32). The metadata block is optional
//! for sub-prompt sets and required for trajectories. Values are stored as
//! float32 and widened to f64 on read, so `read(write(x))` is `x` rounded to
//! float32 and `write(read(file))` reproduces the file byte for byte.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{element_count, Embedding, EmbeddingError, SubPromptSet};
use crate::interpolation::{first_step_after, BlendMode, ConditioningTrajectory, TrajectoryMeta};
use crate::schedule::{validate, InterpolationSchedule, SpacingPolicy};

pub const MAGIC: [u8; 4] = *b"SCPE";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;
pub const CREATOR: &str = concat!("scope-core ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?} (expected \"SCPE\")")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype {0}")]
    UnsupportedDtype(u32),
    #[error("truncated file: needed {needed} bytes, {available} available")]
    TruncatedFile { needed: usize, available: usize },
    #[error("shape {0:?} is empty, has a zero dimension or overflows")]
    ShapeOverflow(Vec<u64>),
    #[error("file declares zero records")]
    NoRecords,
    #[error("{0} unexpected bytes after the metadata block")]
    TrailingBytes(usize),
    #[error("value {value} at record {record} is not representable as a finite float32")]
    NonFinite { record: usize, value: f64 },
    #[error("malformed metadata: {0}")]
    BadMetadata(String),
    #[error("metadata inconsistent with header: {0}")]
    MetadataInconsistent(String),
    #[error("trajectory file has no metadata block")]
    MissingMetadata,
    #[error("records do not form a valid sub-prompt set: {0}")]
    InvalidRecords(#[from] EmbeddingError),
}

/// Parsed fixed-size header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbFileHeader {
    pub version: u32,
    pub record_count: u32,
    pub shape: Vec<u32>,
    pub dtype: u32,
}

impl EmbFileHeader {
    pub fn encoded_len(&self) -> usize {
        4 * 5 + 4 * self.shape.len()
    }
}

/// The decoded container before it is interpreted as a set or trajectory.
#[derive(Debug, Clone)]
pub struct RawContainer {
    pub header: EmbFileHeader,
    pub shape: Vec<usize>,
    pub records: Vec<Vec<f32>>,
    pub metadata: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetMetadata {
    pub kind: String,
    pub creator: String,
    pub labels: Vec<Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFileMetadata {
    pub kind: String,
    pub creator: String,
    pub sigma: f64,
    pub anchors: Vec<f64>,
    pub q_n: f64,
    pub mode: BlendMode,
    pub total_steps: usize,
    #[serde(default)]
    pub labels: Vec<Option<String>>,
}

/// A trajectory read from disk along with any non-fatal findings.
#[derive(Debug, Clone)]
pub struct TrajectoryRead {
    pub trajectory: ConditioningTrajectory,
    pub warnings: Vec<String>,
}

fn to_f32_records<'a>(
    items: impl Iterator<Item = &'a Embedding>,
) -> Result<Vec<Vec<f32>>, IoError> {
    items
        .enumerate()
        .map(|(record, e)| {
            e.data()
                .iter()
                .map(|&v| {
                    let q = v as f32;
                    if q.is_finite() {
                        Ok(q)
                    } else {
                        Err(IoError::NonFinite { record, value: v })
                    }
                })
                .collect()
        })
        .collect()
}

/// Serialize a container to bytes. `records` must all hold `product(shape)`
/// values.
pub fn encode(shape: &[usize], records: &[Vec<f32>], metadata: Option<&[u8]>) -> Result<Vec<u8>, IoError> {
    let shape_u32 = shape
        .iter()
        .map(|&d| u32::try_from(d).map_err(|_| IoError::ShapeOverflow(shape.iter().map(|&d| d as u64).collect())))
        .collect::<Result<Vec<u32>, _>>()?;
    let record_count = u32::try_from(records.len())
        .map_err(|_| IoError::MetadataInconsistent("too many records".into()))?;
    if records.is_empty() {
        return Err(IoError::NoRecords);
    }
    let per_record = element_count(shape)
        .map_err(|_| IoError::ShapeOverflow(shape.iter().map(|&d| d as u64).collect()))?;

    let mut out = Vec::with_capacity(24 + 4 * shape.len() + 4 * per_record * records.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&record_count.to_le_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for d in &shape_u32 {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    for record in records {
        assert_eq!(record.len(), per_record, "record length must match shape");
        for v in record {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(meta) = metadata {
        let len = u32::try_from(meta.len())
            .map_err(|_| IoError::BadMetadata("metadata block too large".into()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(meta);
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(IoError::TruncatedFile {
                needed: self.pos.saturating_add(n),
                available: self.bytes.len(),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Parse and validate a container from bytes.
pub fn decode(bytes: &[u8]) -> Result<RawContainer, IoError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != MAGIC {
        return Err(IoError::BadMagic([magic[0], magic[1], magic[2], magic[3]]));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }
    let record_count = cur.u32()?;
    let rank = cur.u32()? as usize;
    // each dimension needs 4 bytes; check before allocating
    if rank.saturating_mul(4) > cur.remaining() {
        return Err(IoError::TruncatedFile {
            needed: cur.pos.saturating_add(rank.saturating_mul(4)),
            available: bytes.len(),
        });
    }
    let shape_u32 = (0..rank).map(|_| cur.u32()).collect::<Result<Vec<_>, _>>()?;
    let dtype = cur.u32()?;
    if dtype != DTYPE_F32 {
        return Err(IoError::UnsupportedDtype(dtype));
    }
    if record_count == 0 {
        return Err(IoError::NoRecords);
    }
    let shape: Vec<usize> = shape_u32.iter().map(|&d| d as usize).collect();
    let overflow = || IoError::ShapeOverflow(shape_u32.iter().map(|&d| d as u64).collect());
    let per_record = element_count(&shape).map_err(|_| overflow())?;
    let data_len = per_record
        .checked_mul(record_count as usize)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(overflow)?;
    let data = cur.take(data_len)?;
    let records = data
        .chunks_exact(per_record * 4)
        .map(|rec| {
            rec.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect::<Vec<f32>>()
        })
        .collect::<Vec<_>>();
    for (record, values) in records.iter().enumerate() {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(IoError::NonFinite {
                record,
                value: *v as f64,
            });
        }
    }

    let metadata = if cur.remaining() == 0 {
        None
    } else {
        let len = cur.u32()? as usize;
        let block = cur.take(len)?;
        if cur.remaining() != 0 {
            return Err(IoError::TrailingBytes(cur.remaining()));
        }
        Some(block.to_vec())
    };

    Ok(RawContainer {
        header: EmbFileHeader {
            version,
            record_count,
            shape: shape_u32,
            dtype,
        },
        shape,
        records,
        metadata,
    })
}

/// Write `bytes` to `path` through a temporary file in the same directory
/// and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| IoError::Io(e.error))?;
    Ok(())
}

pub fn encode_subprompt_set(set: &SubPromptSet) -> Result<Vec<u8>, IoError> {
    let records = to_f32_records(set.items().iter())?;
    let meta = SetMetadata {
        kind: "subprompt_set".into(),
        creator: CREATOR.into(),
        labels: set.labels(),
    };
    let meta = serde_json::to_vec(&meta).expect("metadata serializes");
    encode(set.shape(), &records, Some(&meta))
}

pub fn decode_subprompt_set(bytes: &[u8]) -> Result<SubPromptSet, IoError> {
    let raw = decode(bytes)?;
    let labels = match &raw.metadata {
        Some(block) => {
            let value: serde_json::Value =
                serde_json::from_slice(block).map_err(|e| IoError::BadMetadata(e.to_string()))?;
            match value.get("labels") {
                Some(l) => serde_json::from_value::<Vec<Option<String>>>(l.clone())
                    .map_err(|e| IoError::BadMetadata(e.to_string()))?,
                None => Vec::new(),
            }
        }
        None => Vec::new(),
    };
    if !labels.is_empty() && labels.len() != raw.records.len() {
        return Err(IoError::MetadataInconsistent(format!(
            "{} labels for {} records",
            labels.len(),
            raw.records.len()
        )));
    }
    let items = raw
        .records
        .into_iter()
        .enumerate()
        .map(|(i, rec)| {
            let mut e = Embedding::new(raw.shape.clone(), rec.into_iter().map(f64::from).collect())?;
            e.set_label(labels.get(i).cloned().flatten());
            Ok(e)
        })
        .collect::<Result<Vec<_>, EmbeddingError>>()?;
    Ok(SubPromptSet::new(items)?)
}

pub fn write_subprompt_set(set: &SubPromptSet, path: &Path) -> Result<(), IoError> {
    write_atomic(path, &encode_subprompt_set(set)?)
}

pub fn read_subprompt_set(path: &Path) -> Result<SubPromptSet, IoError> {
    decode_subprompt_set(&fs::read(path)?)
}

pub fn encode_trajectory(traj: &ConditioningTrajectory) -> Result<Vec<u8>, IoError> {
    let records = to_f32_records(traj.steps.iter())?;
    let meta = TrajectoryFileMetadata {
        kind: "trajectory".into(),
        creator: CREATOR.into(),
        sigma: traj.meta.sigma,
        anchors: traj.meta.anchors.clone(),
        q_n: traj.meta.q_n,
        mode: traj.meta.mode,
        total_steps: traj.steps.len(),
        labels: traj.meta.labels.clone(),
    };
    let meta = serde_json::to_vec(&meta).expect("metadata serializes");
    encode(traj.shape(), &records, Some(&meta))
}

/// Decode a trajectory. Header/metadata disagreements are errors; a cutover
/// region whose records are not all identical only produces a warning.
pub fn decode_trajectory(bytes: &[u8]) -> Result<TrajectoryRead, IoError> {
    let raw = decode(bytes)?;
    let block = raw.metadata.as_ref().ok_or(IoError::MissingMetadata)?;
    let meta: TrajectoryFileMetadata =
        serde_json::from_slice(block).map_err(|e| IoError::BadMetadata(e.to_string()))?;
    let inconsistent = |msg: String| Err(IoError::MetadataInconsistent(msg));
    if meta.total_steps != raw.records.len() {
        return inconsistent(format!(
            "metadata total_steps {} but header declares {} records",
            meta.total_steps,
            raw.records.len()
        ));
    }
    let schedule = InterpolationSchedule {
        anchors: meta.anchors.clone(),
        sigma: meta.sigma,
        total_steps: meta.total_steps,
        policy: SpacingPolicy::DistanceProportional,
    };
    if let Err(violations) = validate(&schedule) {
        let text = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return inconsistent(text);
    }
    if meta.q_n != schedule.period() {
        return inconsistent(format!(
            "q_n {} differs from last anchor {}",
            meta.q_n,
            schedule.period()
        ));
    }
    if !meta.labels.is_empty() && meta.labels.len() != meta.anchors.len() {
        return inconsistent(format!(
            "{} labels for {} anchors",
            meta.labels.len(),
            meta.anchors.len()
        ));
    }

    let mut warnings = Vec::new();
    let cutover = first_step_after(meta.q_n);
    if cutover < raw.records.len() {
        let reference = &raw.records[raw.records.len() - 1];
        for (t, rec) in raw.records.iter().enumerate().skip(cutover) {
            if rec.iter().zip(reference).any(|(a, b)| a.to_bits() != b.to_bits()) {
                let msg = format!("step {t} is after q_n = {} but differs from the final record", meta.q_n);
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let steps = raw
        .records
        .into_iter()
        .map(|rec| Embedding::new(raw.shape.clone(), rec.into_iter().map(f64::from).collect()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrajectoryRead {
        trajectory: ConditioningTrajectory {
            steps,
            meta: TrajectoryMeta {
                sigma: meta.sigma,
                anchors: meta.anchors,
                q_n: meta.q_n,
                mode: meta.mode,
                labels: meta.labels,
            },
        },
        warnings,
    })
}

pub fn write_trajectory(traj: &ConditioningTrajectory, path: &Path) -> Result<(), IoError> {
    write_atomic(path, &encode_trajectory(traj)?)
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryRead, IoError> {
    decode_trajectory(&fs::read(path)?)
}

/// Human-readable mirror of a sub-prompt set. Values are float32 printed
/// with shortest round-trip decimals, so conversion to and from SCPE is
/// lossless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonSubPromptSet {
    pub shape: Vec<usize>,
    pub records: Vec<Vec<f32>>,
    #[serde(default)]
    pub labels: Vec<Option<String>>,
}

impl JsonSubPromptSet {
    pub fn from_set(set: &SubPromptSet) -> Result<Self, IoError> {
        Ok(Self {
            shape: set.shape().to_vec(),
            records: to_f32_records(set.items().iter())?,
            labels: set.labels(),
        })
    }

    pub fn into_set(self) -> Result<SubPromptSet, IoError> {
        if !self.labels.is_empty() && self.labels.len() != self.records.len() {
            return Err(IoError::MetadataInconsistent(format!(
                "{} labels for {} records",
                self.labels.len(),
                self.records.len()
            )));
        }
        let items = self
            .records
            .into_iter()
            .enumerate()
            .map(|(i, rec)| {
                let mut e = Embedding::new(self.shape.clone(), rec.into_iter().map(f64::from).collect())?;
                e.set_label(self.labels.get(i).cloned().flatten());
                Ok(e)
            })
            .collect::<Result<Vec<_>, EmbeddingError>>()?;
        Ok(SubPromptSet::new(items)?)
    }
}

pub fn read_json_subprompt_set(path: &Path) -> Result<SubPromptSet, IoError> {
    let doc: JsonSubPromptSet = serde_json::from_slice(&fs::read(path)?)
        .map_err(|e| IoError::BadMetadata(e.to_string()))?;
    doc.into_set()
}

pub fn write_json_subprompt_set(set: &SubPromptSet, path: &Path) -> Result<(), IoError> {
    let doc = JsonSubPromptSet::from_set(set)?;
    let mut text = serde_json::to_vec_pretty(&doc).expect("json mirror serializes");
    text.push(b'\n');
    write_atomic(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpolation::trajectory;
    use crate::schedule::build_schedule;

    fn two_prompt_set() -> SubPromptSet {
        SubPromptSet::from_vectors(vec![vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap()
    }

    #[test]
    fn two_record_layout() {
        let bytes = encode(&[2], &[vec![1.0, 0.0], vec![0.0, 2.0]], None).unwrap();
        let mut expected = Vec::new();
        expected.extend_from_slice(b"SCPE");
        for word in [1u32, 2, 1, 2, 0] {
            expected.extend_from_slice(&word.to_le_bytes());
        }
        for v in [1.0f32, 0.0, 0.0, 2.0] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes, expected);
        let raw = decode(&bytes).unwrap();
        assert_eq!(raw.header.record_count, 2);
        assert_eq!(raw.header.shape, vec![2]);
        assert!(raw.metadata.is_none());
    }

    #[test]
    fn set_encoding_is_deterministic() {
        let a = encode_subprompt_set(&two_prompt_set()).unwrap();
        let b = encode_subprompt_set(&two_prompt_set()).unwrap();
        assert_eq!(a, b);
        // the 36 payload bytes are followed by a length-prefixed JSON block
        let len = u32::from_le_bytes(a[40..44].try_into().unwrap()) as usize;
        assert_eq!(a.len(), 44 + len);
        let meta: SetMetadata = serde_json::from_slice(&a[44..]).unwrap();
        assert_eq!(meta.kind, "subprompt_set");
        assert_eq!(meta.labels, vec![None, None]);
    }

    #[test]
    fn set_round_trip_quantizes_to_f32() {
        let set = SubPromptSet::new(vec![
            Embedding::from_vec(vec![0.1, 1.0 / 3.0]).unwrap().with_label("coarse"),
            Embedding::from_vec(vec![std::f64::consts::PI, 2.0]).unwrap().with_label("fine"),
        ])
        .unwrap();
        let back = decode_subprompt_set(&encode_subprompt_set(&set).unwrap()).unwrap();
        for (a, b) in set.items().iter().zip(back.items()) {
            let quantized: Vec<f64> = a.data().iter().map(|&v| v as f32 as f64).collect();
            assert_eq!(b.data(), quantized.as_slice());
            assert_eq!(a.label(), b.label());
        }
        let again = encode_subprompt_set(&back).unwrap();
        assert_eq!(again, encode_subprompt_set(&set).unwrap());
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = encode_subprompt_set(&two_prompt_set()).unwrap();
        // 24-byte header + 16 payload bytes; dropping exactly the metadata block leaves a valid file
        let data_end = 40;
        for cut in 1..bytes.len() {
            if bytes.len() - cut == data_end {
                assert!(decode_subprompt_set(&bytes[..data_end]).is_ok());
                continue;
            }
            let err = decode_subprompt_set(&bytes[..bytes.len() - cut]).unwrap_err();
            assert!(matches!(err, IoError::TruncatedFile { .. }), "cut {cut}: {err}");
        }
    }

    #[test]
    fn header_fuzz_cases() {
        let good = encode_subprompt_set(&two_prompt_set()).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(IoError::BadMagic(_))));
        let mut bad = good.clone();
        bad[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(decode(&bad), Err(IoError::UnsupportedVersion(2))));
        let mut bad = good.clone();
        bad[20..24].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(decode(&bad), Err(IoError::UnsupportedDtype(7))));
        let mut bad = good.clone();
        bad[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode(&bad), Err(IoError::NoRecords)));
        let mut bad = good.clone();
        bad[12..16].copy_from_slice(&0xFFFF_FFFFu32.to_le_bytes());
        assert!(matches!(decode(&bad), Err(IoError::TruncatedFile { .. })));
    }

    #[test]
    fn huge_shape_is_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SCPE");
        for w in [1u32, 1, 3, u32::MAX, u32::MAX, u32::MAX, 0] {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        assert!(matches!(decode(&bytes), Err(IoError::ShapeOverflow(_))));
        let mut zero_dim = Vec::new();
        zero_dim.extend_from_slice(b"SCPE");
        for w in [1u32, 1, 2, 4, 0, 0] {
            zero_dim.extend_from_slice(&w.to_le_bytes());
        }
        assert!(matches!(decode(&zero_dim), Err(IoError::ShapeOverflow(_))));
    }

    #[test]
    fn trailing_bytes_and_bad_metadata() {
        let mut bytes = encode_subprompt_set(&two_prompt_set()).unwrap();
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(IoError::TrailingBytes(1))));
        let bytes = encode(&[2], &[vec![1.0, 0.0], vec![0.0, 2.0]], Some(b"{not json")).unwrap();
        assert!(matches!(decode_subprompt_set(&bytes), Err(IoError::BadMetadata(_))));
    }

    #[test]
    fn non_finite_values_are_refused() {
        let set = SubPromptSet::from_vectors(vec![vec![1e300, 0.0], vec![0.0, 2.0]]).unwrap();
        assert!(matches!(
            encode_subprompt_set(&set),
            Err(IoError::NonFinite { record: 0, .. })
        ));
        let bytes = encode(&[1], &[vec![f32::NAN], vec![1.0]], None).unwrap();
        assert!(matches!(decode(&bytes), Err(IoError::NonFinite { record: 0, .. })));
    }

    #[test]
    fn zero_norm_finest_is_rejected_on_read() {
        let bytes = encode(&[2], &[vec![1.0, 0.0], vec![0.0, 0.0]], None).unwrap();
        assert!(matches!(
            decode_subprompt_set(&bytes),
            Err(IoError::InvalidRecords(EmbeddingError::ZeroNormFinest(1)))
        ));
    }

    fn sample_trajectory() -> ConditioningTrajectory {
        let set = SubPromptSet::from_vectors(vec![
            vec![1.0, 0.2, 0.1],
            vec![0.3, 1.0, -0.4],
            vec![0.2, 0.4, 2.0],
        ])
        .unwrap();
        let s = build_schedule(&set, 12.0, 3.0, 50).unwrap();
        trajectory(&set, &s, BlendMode::Renormalized).unwrap()
    }

    #[test]
    fn trajectory_round_trip() {
        let traj = sample_trajectory();
        let bytes = encode_trajectory(&traj).unwrap();
        let read = decode_trajectory(&bytes).unwrap();
        assert!(read.warnings.is_empty());
        assert_eq!(read.trajectory.meta, traj.meta);
        assert_eq!(read.trajectory.steps.len(), 50);
        assert_eq!(encode_trajectory(&read.trajectory).unwrap(), bytes);
    }

    #[test]
    fn trajectory_metadata_must_match_header() {
        let traj = sample_trajectory();
        let records = to_f32_records(traj.steps.iter()).unwrap();
        let mut meta = TrajectoryFileMetadata {
            kind: "trajectory".into(),
            creator: CREATOR.into(),
            sigma: 3.0,
            anchors: traj.meta.anchors.clone(),
            q_n: traj.meta.q_n,
            mode: traj.meta.mode,
            total_steps: 49,
            labels: vec![],
        };
        let bytes = encode(&[3], &records, Some(&serde_json::to_vec(&meta).unwrap())).unwrap();
        assert!(matches!(decode_trajectory(&bytes), Err(IoError::MetadataInconsistent(_))));
        meta.total_steps = 50;
        meta.sigma = -1.0;
        let bytes = encode(&[3], &records, Some(&serde_json::to_vec(&meta).unwrap())).unwrap();
        assert!(matches!(decode_trajectory(&bytes), Err(IoError::MetadataInconsistent(_))));
        meta.sigma = 3.0;
        meta.q_n = 11.0;
        let bytes = encode(&[3], &records, Some(&serde_json::to_vec(&meta).unwrap())).unwrap();
        assert!(matches!(decode_trajectory(&bytes), Err(IoError::MetadataInconsistent(_))));
        let bare = encode(&[3], &records, None).unwrap();
        assert!(matches!(decode_trajectory(&bare), Err(IoError::MissingMetadata)));
    }

    #[test]
    fn broken_cutover_only_warns() {
        let mut traj = sample_trajectory();
        traj.steps[30] = traj.steps[0].clone();
        let read = decode_trajectory(&encode_trajectory(&traj).unwrap()).unwrap();
        assert_eq!(read.warnings.len(), 1);
        assert!(read.warnings[0].contains("step 30"));
    }

    #[test]
    fn json_mirror_is_lossless() {
        let set = SubPromptSet::new(vec![
            Embedding::new(vec![2, 2], vec![0.1, 1e-7, -3.3, 7.0]).unwrap(),
            Embedding::new(vec![2, 2], vec![1.0 / 3.0, 2.0, 0.0, -0.5]).unwrap().with_label("fine"),
        ])
        .unwrap();
        let doc = JsonSubPromptSet::from_set(&set).unwrap();
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.contains("0.33333334"), "{text}");
        let back: JsonSubPromptSet = serde_json::from_str(&text).unwrap();
        let back = back.into_set().unwrap();
        assert_eq!(
            encode_subprompt_set(&back).unwrap(),
            encode_subprompt_set(&set).unwrap()
        );
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.scpe");
        fs::write(&path, b"old").unwrap();
        write_subprompt_set(&two_prompt_set(), &path).unwrap();
        let set = read_subprompt_set(&path).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
