//! On-disk dataset: `manifest.jsonl` plus one `<id>.hmw` motion payload per record.
//!
//! `.hmw` layout: `HMW1`, u32 LE frame count N, u32 LE width (198), N×198 f32 LE
//! row-major, u32 LE CRC32 of the f32 payload bytes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::{MotionError, MotionSequence, DEFAULT_FPS, FRAME_DIM};
use crate::record::{FilterEntry, SequenceRecord};

pub const HMW_MAGIC: &[u8; 4] = b"HMW1";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
const HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected HMW1")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported frame width {0}, expected {FRAME_DIM}")]
    Width(u32),
    #[error("truncated payload: {got} bytes, expected {expected}")]
    Truncated { expected: usize, got: usize },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("empty motion (0 frames)")]
    Empty,
    #[error(transparent)]
    Motion(#[from] MotionError),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} (record {id}): {source}")]
    Payload { path: PathBuf, id: String, source: FormatError },
    #[error("{path}:{line}: {message}")]
    Manifest { path: PathBuf, line: usize, message: String },
    #[error("record {id}: {message}")]
    Record { id: String, message: String },
}

impl DatasetError {
    /// Record id the error is attributed to, if any.
    pub fn record_id(&self) -> Option<&str> {
        match self {
            DatasetError::Payload { id, .. } | DatasetError::Record { id, .. } => Some(id),
            _ => None,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// Serializes a motion to `.hmw` bytes. Values are stored as f32.
pub fn encode_hmw(m: &MotionSequence) -> Vec<u8> {
    let rows = m.flatten();
    let n = rows.nrows();
    let mut out = Vec::with_capacity(HEADER_LEN + n * FRAME_DIM * 4 + 4);
    out.extend_from_slice(HMW_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(FRAME_DIM as u32).to_le_bytes());
    for &v in rows.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&out[HEADER_LEN..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Parses `.hmw` bytes; the payload must be finite and hold valid rotations.
pub fn decode_hmw(bytes: &[u8], fps: f64) -> Result<MotionSequence, FormatError> {
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated { expected: HEADER_LEN, got: bytes.len() });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
    if &magic != HMW_MAGIC {
        return Err(FormatError::BadMagic { found: magic });
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().expect("length checked")) as usize;
    let width = u32::from_le_bytes(bytes[8..12].try_into().expect("length checked"));
    if width as usize != FRAME_DIM {
        return Err(FormatError::Width(width));
    }
    if n == 0 {
        return Err(FormatError::Empty);
    }
    let expected = n
        .checked_mul(FRAME_DIM * 4)
        .and_then(|p| p.checked_add(HEADER_LEN + 4))
        .ok_or(FormatError::Truncated { expected: usize::MAX, got: bytes.len() })?;
    if bytes.len() != expected {
        return Err(FormatError::Truncated { expected, got: bytes.len() });
    }
    let payload = &bytes[HEADER_LEN..expected - 4];
    let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().expect("length checked"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed });
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
        .collect();
    let rows = Array2::from_shape_vec((n, FRAME_DIM), values).expect("size checked");
    Ok(MotionSequence::unflatten(rows.view(), fps)?)
}

pub fn write_hmw(path: &Path, m: &MotionSequence) -> Result<(), DatasetError> {
    fs::write(path, encode_hmw(m)).map_err(io_err(path))
}

/// Reads a standalone `.hmw` file at the default frame rate.
pub fn read_hmw(path: &Path) -> Result<MotionSequence, DatasetError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    decode_hmw(&bytes, DEFAULT_FPS).map_err(|source| DatasetError::Payload { path: path.to_path_buf(), id, source })
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub num_frames: usize,
    pub fps: f64,
    pub caption_high: String,
    pub caption_fine: String,
    pub filter_log: Vec<FilterEntry>,
    /// Per frame `[left, right]` visibility; absent means fully visible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<Vec<[bool; 2]>>,
}

pub fn parse_manifest_line(line: &str) -> Result<ManifestEntry, String> {
    let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if entry.id.is_empty() {
        return Err("empty id".into());
    }
    if !(entry.fps.is_finite() && entry.fps > 0.0) {
        return Err(format!("fps {} must be positive", entry.fps));
    }
    if entry.file.contains('/') || entry.file.contains('\\') || entry.file.starts_with('.') {
        return Err(format!("file {:?} must be a plain name inside the dataset directory", entry.file));
    }
    if let Some(v) = &entry.visibility {
        if v.len() != entry.num_frames {
            return Err(format!("visibility has {} frames, num_frames is {}", v.len(), entry.num_frames));
        }
    }
    Ok(entry)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Writes `records` to `dir` (created if missing). Ids must be unique file-safe names.
pub fn write_dataset(records: &[SequenceRecord], dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut seen = std::collections::BTreeSet::new();
    let manifest_path = dir.join(MANIFEST_FILE);
    let file = fs::File::create(&manifest_path).map_err(io_err(&manifest_path))?;
    let mut manifest = BufWriter::new(file);
    for rec in records {
        if !valid_id(&rec.id) {
            return Err(DatasetError::Record { id: rec.id.clone(), message: "id is not a file-safe name".into() });
        }
        if !seen.insert(rec.id.as_str()) {
            return Err(DatasetError::Record { id: rec.id.clone(), message: "duplicate id".into() });
        }
        let n = rec.motion.num_frames();
        if rec.visibility.len() != n {
            return Err(DatasetError::Record {
                id: rec.id.clone(),
                message: format!("visibility has {} frames, motion has {n}", rec.visibility.len()),
            });
        }
        let file = format!("{}.hmw", rec.id);
        write_hmw(&dir.join(&file), &rec.motion)?;
        let entry = ManifestEntry {
            id: rec.id.clone(),
            file,
            num_frames: n,
            fps: rec.motion.fps,
            caption_high: rec.caption_high.clone(),
            caption_fine: rec.caption_fine.clone(),
            filter_log: rec.filter_log.clone(),
            visibility: Some(rec.visibility.clone()),
        };
        let line = serde_json::to_string(&entry).expect("manifest entries serialize");
        writeln!(manifest, "{line}").map_err(io_err(&manifest_path))?;
    }
    manifest.flush().map_err(io_err(&manifest_path))
}

/// Reads every record listed in `dir/manifest.jsonl`, in manifest order.
pub fn read_dataset(dir: &Path) -> Result<Vec<SequenceRecord>, DatasetError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let manifest_err = |message| DatasetError::Manifest { path: manifest_path.clone(), line: i + 1, message };
        let entry = parse_manifest_line(line).map_err(manifest_err)?;
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let payload_err = |source| DatasetError::Payload { path: path.clone(), id: entry.id.clone(), source };
        let motion = decode_hmw(&bytes, entry.fps).map_err(payload_err)?;
        if motion.num_frames() != entry.num_frames {
            return Err(DatasetError::Record {
                id: entry.id,
                message: format!("payload has {} frames, manifest says {}", motion.num_frames(), entry.num_frames),
            });
        }
        let visibility = entry.visibility.unwrap_or_else(|| vec![[true, true]; entry.num_frames]);
        out.push(SequenceRecord {
            id: entry.id,
            motion,
            caption_high: entry.caption_high,
            caption_fine: entry.caption_fine,
            visibility,
            filter_log: entry.filter_log,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_corpus;

    #[test]
    fn round_trip_fifty_records() {
        let dir = tempfile::tempdir().unwrap();
        let records = generate_corpus(50, 11);
        write_dataset(&records, dir.path()).unwrap();
        let manifest = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(manifest.lines().count(), 50);
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn corrupted_byte_names_record() {
        let dir = tempfile::tempdir().unwrap();
        let records = generate_corpus(5, 2);
        write_dataset(&records, dir.path()).unwrap();
        let victim = dir.path().join(format!("{}.hmw", records[3].id));
        let mut bytes = fs::read(&victim).unwrap();
        bytes[HEADER_LEN + 17] ^= 0x40;
        fs::write(&victim, bytes).unwrap();
        let err = read_dataset(dir.path()).unwrap_err();
        assert_eq!(err.record_id(), Some(records[3].id.as_str()));
        assert!(matches!(err, DatasetError::Payload { source: FormatError::Checksum { .. }, .. }));
        for rec in records.iter().filter(|r| r.id != records[3].id) {
            read_hmw(&dir.path().join(format!("{}.hmw", rec.id))).unwrap();
        }
    }

    #[test]
    fn header_errors() {
        let m = MotionSequence::rest(3, DEFAULT_FPS);
        let good = encode_hmw(&m);
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_hmw(&bad, 30.0), Err(FormatError::BadMagic { .. })));
        let mut bad = good.clone();
        bad[8] = 7;
        assert!(matches!(decode_hmw(&bad, 30.0), Err(FormatError::Width(_))));
        assert!(matches!(decode_hmw(&good[..good.len() - 1], 30.0), Err(FormatError::Truncated { .. })));
        assert!(matches!(decode_hmw(&good[..5], 30.0), Err(FormatError::Truncated { .. })));
        assert_eq!(decode_hmw(&good, 30.0).unwrap(), m);
    }

    #[test]
    fn manifest_line_validation() {
        assert!(parse_manifest_line("{}").is_err());
        let ok = r#"{"id":"a","file":"a.hmw","num_frames":1,"fps":30.0,"caption_high":"x","caption_fine":"y","filter_log":[]}"#;
        assert!(parse_manifest_line(ok).is_ok());
        let escape = ok.replace("a.hmw", "../a.hmw");
        assert!(parse_manifest_line(&escape).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = generate_corpus(2, 2);
        records[1].id = records[0].id.clone();
        assert!(write_dataset(&records, dir.path()).is_err());
    }
}
