//! Feature sets and their on-disk formats.
//!
//! Binary `OWFS` layout (little endian):
//!
//! ```text
//! magic "OWFS" | version u32 = 1 | n u64 | d u32 | label width u32 = 8
//! n records of: label i64 | d x f32
//! ```
//!
//! Text fixtures hold one `label,f1,...,fd` row per line; blank lines and
//! lines starting with `#` are skipped.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ClassId;

pub const OWFS_MAGIC: &[u8; 4] = b"OWFS";
pub const OWFS_VERSION: u32 = 1;
const OWFS_HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4;
const LABEL_WIDTH: u32 = 8;

/// Row-major sample matrix with labels and a per-class index.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    d: usize,
    features: Vec<f64>,
    labels: Vec<ClassId>,
    class_index: BTreeMap<ClassId, Vec<usize>>,
    dropped_rows: usize,
}

impl FeatureSet {
    /// Builds a set from row-major features; rows with non-finite values are
    /// dropped with a warning.
    pub fn new(d: usize, features: Vec<f64>, labels: Vec<ClassId>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("feature dimension must be positive".into()));
        }
        if features.len() != labels.len() * d {
            return Err(Error::InvalidInput(format!(
                "{} feature values do not form {} rows of dimension {d}",
                features.len(),
                labels.len()
            )));
        }
        let mut kept = Vec::with_capacity(features.len());
        let mut kept_labels = Vec::with_capacity(labels.len());
        for (row, &y) in features.chunks_exact(d).zip(&labels) {
            if row.iter().all(|v| v.is_finite()) {
                kept.extend_from_slice(row);
                kept_labels.push(y);
            }
        }
        let dropped_rows = labels.len() - kept_labels.len();
        if dropped_rows > 0 {
            log::warn!("dropped {dropped_rows} rows with non-finite features");
        }
        let mut class_index: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, &y) in kept_labels.iter().enumerate() {
            class_index.entry(y).or_default().push(i);
        }
        Ok(FeatureSet {
            d,
            features: kept,
            labels: kept_labels,
            class_index,
            dropped_rows,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> ClassId {
        self.labels[i]
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Rows removed at construction because they held NaN or infinity.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    /// Class ids in ascending order.
    pub fn classes(&self) -> Vec<ClassId> {
        self.class_index.keys().copied().collect()
    }

    pub fn num_classes(&self) -> usize {
        self.class_index.len()
    }

    /// Row indices of class `y`, in file order.
    pub fn indices_of(&self, y: ClassId) -> &[usize] {
        self.class_index.get(&y).map_or(&[], Vec::as_slice)
    }

    pub(crate) fn map_rows(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> FeatureSet {
        let mut out = vec![0.0; self.features.len()];
        for (src, dst) in self.features.chunks_exact(self.d).zip(out.chunks_exact_mut(self.d)) {
            f(src, dst);
        }
        FeatureSet {
            features: out,
            ..self.clone()
        }
    }
}

/// Loads an `OWFS` binary file or a text fixture, chosen by the magic bytes.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(OWFS_MAGIC) {
        parse_owfs(path, &bytes)
    } else {
        parse_text(path, BufReader::new(bytes.as_slice()))
    }
}

fn parse_owfs(path: &Path, bytes: &[u8]) -> Result<FeatureSet> {
    let err = |offset: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        location: format!("byte offset {offset}"),
        message,
    };
    if bytes.len() < OWFS_HEADER_LEN {
        return Err(err(bytes.len(), "truncated header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != OWFS_VERSION {
        return Err(err(4, format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let d = u32_at(16) as usize;
    let width = u32_at(20);
    if width != LABEL_WIDTH {
        return Err(err(20, format!("unsupported label width {width}")));
    }
    if d == 0 {
        return Err(err(16, "feature dimension is zero".into()));
    }
    let record = 8 + 4 * d;
    let body = &bytes[OWFS_HEADER_LEN..];
    let expected = usize::try_from(n)
        .ok()
        .and_then(|n| n.checked_mul(record))
        .ok_or_else(|| err(8, format!("record count {n} is too large")))?;
    if body.len() != expected {
        let complete = body.len() / record;
        return Err(err(
            OWFS_HEADER_LEN + complete * record,
            format!(
                "expected {n} records of {record} bytes, found {} bytes (record {complete} is incomplete or extra)",
                body.len()
            ),
        ));
    }
    let n = n as usize;
    let mut labels = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n * d);
    for rec in body.chunks_exact(record) {
        labels.push(i64::from_le_bytes(rec[..8].try_into().unwrap()));
        features.extend(
            rec[8..]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))),
        );
    }
    FeatureSet::new(d, features, labels)
}

fn parse_text(path: &Path, reader: impl BufRead) -> Result<FeatureSet> {
    let mut d = None;
    let mut labels = Vec::new();
    let mut features = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {}", lineno + 1),
            message,
        };
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let label = fields
            .next()
            .unwrap_or_default()
            .parse::<ClassId>()
            .map_err(|e| err(format!("bad label: {e}")))?;
        let row = fields
            .map(|f| f.parse::<f64>().map_err(|e| err(format!("bad value '{f}': {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        let width = *d.get_or_insert(row.len());
        if row.is_empty() || row.len() != width {
            return Err(err(format!(
                "row {} has {} features, expected {width}",
                labels.len() + 1,
                row.len()
            )));
        }
        labels.push(label);
        features.extend(row);
    }
    let d = d.ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        location: "line 1".into(),
        message: "no data rows".into(),
    })?;
    FeatureSet::new(d, features, labels)
}

/// Writes the binary `OWFS` format. Features are stored as `f32`.
pub fn save_owfs(fs: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let write = || -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(OWFS_MAGIC)?;
        out.write_all(&OWFS_VERSION.to_le_bytes())?;
        out.write_all(&(fs.len() as u64).to_le_bytes())?;
        out.write_all(&(fs.d as u32).to_le_bytes())?;
        out.write_all(&LABEL_WIDTH.to_le_bytes())?;
        for i in 0..fs.len() {
            out.write_all(&fs.label(i).to_le_bytes())?;
            for &v in fs.row(i) {
                out.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Writes the text fixture format with shortest round-trip float formatting.
pub fn save_text(fs: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let write = || -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for i in 0..fs.len() {
            write!(out, "{}", fs.label(i))?;
            for v in fs.row(i) {
                write!(out, ",{v:?}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
