//! OCLF binary feature files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   4 bytes  "OCLF"
//! version u32      1
//! classes u32      K
//! dim     u32      F
//! count   u64      T
//! record  T times  [label u32][F x f32]
//! ```
//!
//! Readers validate the magic, the declared record count and every label,
//! reporting the byte offset of the first defect.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::{AnnotatedExample, DataError, DataReader, DataSource};
use crate::model::Example;

const MAGIC: &[u8; 4] = b"OCLF";
const VERSION: u32 = 1;

/// One stored example.
#[derive(Clone, Debug, PartialEq)]
pub struct OclfRecord {
    pub label: u32,
    pub features: Vec<f32>,
}

/// Feature-file source; the whole file is resident after loading.
#[derive(Debug)]
pub struct FeatureFileSource {
    records: Arc<Vec<OclfRecord>>,
    num_classes: usize,
    feature_dim: usize,
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, offset: u64, reason: impl Into<String>) -> DataError {
    DataError::Format { path: path.display().to_string(), offset, reason: reason.into() }
}

struct Cursor<'a, R: Read> {
    inner: R,
    offset: u64,
    path: &'a Path,
}

impl<'a, R: Read> Cursor<'a, R> {
    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<(), DataError> {
        let at = self.offset;
        self.inner
            .read_exact(buf)
            .map_err(|_| format_err(self.path, at, format!("truncated while reading {what}")))?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u32(&mut self, what: &str) -> Result<u32, DataError> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_u64(&mut self, what: &str) -> Result<u64, DataError> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }
}

/// Load an OCLF file into a restartable source.
pub fn load_feature_file(path: &Path) -> Result<FeatureFileSource, DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut cur = Cursor { inner: BufReader::new(file), offset: 0, path };

    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(format_err(path, 0, format!("bad magic {magic:?}, expected \"OCLF\"")));
    }
    let version = cur.read_u32("version")?;
    if version != VERSION {
        return Err(format_err(path, 4, format!("unsupported version {version}")));
    }
    let num_classes = cur.read_u32("class count")?;
    let feature_dim = cur.read_u32("feature dim")?;
    if num_classes == 0 || feature_dim == 0 {
        return Err(format_err(path, 8, "class count and feature dim must be >= 1"));
    }
    let count = cur.read_u64("record count")?;

    let mut records = Vec::with_capacity(count as usize);
    for i in 0..count {
        let label_offset = cur.offset;
        let label = cur.read_u32(&format!("label of record {i}"))?;
        if label >= num_classes {
            return Err(format_err(
                path,
                label_offset,
                format!("record {i}: label {label} out of range for {num_classes} classes"),
            ));
        }
        let mut raw = vec![0u8; feature_dim as usize * 4];
        cur.read_exact(&mut raw, &format!("features of record {i}"))?;
        let features = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push(OclfRecord { label, features });
    }
    let mut trailing = [0u8; 1];
    if cur.inner.read(&mut trailing).map_err(|e| io_err(path, e))? != 0 {
        return Err(format_err(path, cur.offset, "trailing bytes after declared records"));
    }
    Ok(FeatureFileSource {
        records: Arc::new(records),
        num_classes: num_classes as usize,
        feature_dim: feature_dim as usize,
    })
}

/// Write records in OCLF layout.
pub fn write_feature_file(
    path: &Path,
    num_classes: u32,
    feature_dim: u32,
    records: &[OclfRecord],
) -> Result<(), DataError> {
    for (i, r) in records.iter().enumerate() {
        assert!(r.label < num_classes, "record {i}: label {} out of range for {num_classes} classes", r.label);
        assert_eq!(r.features.len(), feature_dim as usize, "record {i}: feature width mismatch");
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let emit = |w: &mut BufWriter<File>, bytes: &[u8]| w.write_all(bytes).map_err(|e| io_err(path, e));
    emit(&mut w, MAGIC)?;
    emit(&mut w, &VERSION.to_le_bytes())?;
    emit(&mut w, &num_classes.to_le_bytes())?;
    emit(&mut w, &feature_dim.to_le_bytes())?;
    emit(&mut w, &(records.len() as u64).to_le_bytes())?;
    for r in records {
        emit(&mut w, &r.label.to_le_bytes())?;
        for f in &r.features {
            emit(&mut w, &f.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Convert `label, f1, ..., fF` CSV rows to an OCLF file. The class count
/// is the largest label plus one; the feature width comes from the first
/// row.
pub fn convert_csv_to_oclf(csv_path: &Path, oclf_path: &Path) -> Result<(), DataError> {
    let text = std::fs::read_to_string(csv_path).map_err(|e| io_err(csv_path, e))?;
    let mut records = Vec::new();
    let mut feature_dim: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let label: u32 = fields
            .next()
            .unwrap_or("")
            .parse()
            .map_err(|_| format_err(csv_path, 0, format!("line {}: bad label", lineno + 1)))?;
        let features: Result<Vec<f32>, _> = fields.map(|f| f.parse::<f32>()).collect();
        let features = features
            .map_err(|_| format_err(csv_path, 0, format!("line {}: bad feature value", lineno + 1)))?;
        match feature_dim {
            None => feature_dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(format_err(
                    csv_path,
                    0,
                    format!("line {}: {} features, expected {}", lineno + 1, features.len(), d),
                ));
            }
            _ => {}
        }
        records.push(OclfRecord { label, features });
    }
    if records.is_empty() {
        return Err(format_err(csv_path, 0, "no records"));
    }
    let num_classes = records.iter().map(|r| r.label).max().unwrap() + 1;
    let feature_dim = feature_dim.unwrap() as u32;
    if feature_dim == 0 {
        return Err(format_err(csv_path, 0, "rows need at least one feature"));
    }
    write_feature_file(oclf_path, num_classes, feature_dim, &records)
}

struct FeatureFileReader {
    records: Arc<Vec<OclfRecord>>,
    pos: usize,
}

impl DataReader for FeatureFileReader {
    fn next_example(&mut self) -> Option<AnnotatedExample> {
        let r = self.records.get(self.pos)?;
        let item = AnnotatedExample {
            example: Example::new(r.features.iter().map(|&f| f as f64).collect(), r.label as usize),
            task_id: 0,
            within_task_pos: self.pos,
        };
        self.pos += 1;
        Some(item)
    }

    fn position(&self) -> usize {
        self.pos
    }

    fn reset(&mut self) {
        self.pos = 0;
    }
}

impl DataSource for FeatureFileSource {
    fn reader(&self) -> Box<dyn DataReader + Send> {
        Box::new(FeatureFileReader { records: Arc::clone(&self.records), pos: 0 })
    }

    fn len(&self) -> usize {
        self.records.len()
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn feature_dim(&self) -> usize {
        self.feature_dim
    }
}
