//! Embedding datasets: ingestion, validation, normalization and the score
//! scale shared by every metric.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! "IDEM" | version: u16 = 1 | dim: u32 | n: u32 | flags: u16 | n*dim values
//! ```
//!
//! Bit 0 of `flags` selects 32-bit values; otherwise values are 64-bit.
//! Identity labels live in a sidecar text file next to the binary file
//! (`<file>.labels`), one token per line.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IDEM";
pub const FORMAT_VERSION: u16 = 1;
const FLAG_F32: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 2;

/// Tolerance on the Euclidean norm of rows in a normalized set.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Storage precision of the values in a binary file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FileFormat {
    Binary,
    Csv,
}

impl FileFormat {
    /// Guess the format from the file extension; anything but `.csv` is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Binary,
        }
    }
}

/// An immutable N x dim matrix of identity feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    name: String,
    dim: usize,
    rows: Vec<f64>,
    labels: Option<Vec<String>>,
    label_ids: Option<Vec<u32>>,
    normalized: bool,
    precision: Precision,
}

impl EmbeddingSet {
    /// Build a validated, unnormalized set from row-major values.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        rows: Vec<f64>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Invalid(format!("dim must be >= 2, got {dim}")));
        }
        if rows.is_empty() || !rows.len().is_multiple_of(dim) {
            return Err(Error::Invalid(format!(
                "{} values do not form a non-empty matrix with {dim} columns",
                rows.len()
            )));
        }
        if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::row(
                pos / dim,
                format!("non-finite value at column {}", pos % dim),
            ));
        }
        let mut set = EmbeddingSet {
            name: name.into(),
            dim,
            rows,
            labels: None,
            label_ids: None,
            normalized: false,
            precision: Precision::F64,
        };
        if let Some(labels) = labels {
            set = set.with_labels(labels)?;
        }
        Ok(set)
    }

    /// Attach (or replace) identity labels.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Invalid(format!(
                "label count mismatch: {} labels for {} rows",
                labels.len(),
                self.len()
            )));
        }
        let mut interned: HashMap<&str, u32> = HashMap::new();
        let mut ids = Vec::with_capacity(labels.len());
        for label in &labels {
            let next = interned.len() as u32;
            ids.push(*interned.entry(label.as_str()).or_insert(next));
        }
        self.label_ids = Some(ids);
        self.labels = Some(labels);
        Ok(self)
    }

    /// Label every row with its own identity, making all pairs non-mated.
    pub fn with_distinct_labels(self) -> Self {
        let labels = (0..self.len()).map(|i| format!("row{i}")).collect();
        self.with_labels(labels)
            .expect("one label per row by construction")
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.rows
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Dense integer identity per row, in order of first appearance.
    pub fn label_ids(&self) -> Option<&[u32]> {
        self.label_ids.as_deref()
    }

    /// Number of distinct identities, if labeled.
    pub fn identity_count(&self) -> Option<usize> {
        self.label_ids
            .as_ref()
            .map(|ids| ids.iter().copied().max().map_or(0, |m| m as usize + 1))
    }

    /// Return a copy with every row scaled to unit Euclidean norm.
    pub fn normalize(&self) -> Result<Self> {
        let mut out = self.clone();
        for (i, row) in out.rows.chunks_exact_mut(self.dim).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::row(i, "zero-norm row cannot be normalized"));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        out.normalized = true;
        Ok(out)
    }

    /// Mark rows already known to be unit-norm as normalized, verifying it.
    pub fn assume_normalized(mut self) -> Result<Self> {
        for (i, row) in self.rows().enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::row(i, format!("norm {norm} is not 1")));
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Keep only the listed rows (labels follow).
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut rows = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            rows.extend_from_slice(self.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i].clone()).collect());
        let mut out = EmbeddingSet::new(self.name.clone(), self.dim, rows, labels)
            .expect("subset of a valid set is valid");
        out.normalized = self.normalized;
        out.precision = self.precision;
        out
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let flags = match self.precision {
            Precision::F32 => FLAG_F32,
            Precision::F64 => 0,
        };
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        w.write_all(&flags.to_le_bytes())?;
        for &v in &self.rows {
            match self.precision {
                Precision::F32 => w.write_all(&(v as f32).to_le_bytes())?,
                Precision::F64 => w.write_all(&v.to_le_bytes())?,
            }
        }
        Ok(())
    }

    /// Parse a binary stream. Labels are not part of the stream.
    pub fn read_binary<R: Read>(mut r: R, name: impl Into<String>) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::format("binary", e.to_string()))?;
        parse_binary(&buf, name.into())
    }

    /// Write the binary file and, when labeled, its `.labels` sidecar.
    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_binary(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))?;
        let sidecar = labels_path(path);
        if let Some(labels) = &self.labels {
            write_labels(&sidecar, labels)?;
        } else if sidecar.exists() {
            fs::remove_file(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "id")?;
        for c in 0..self.dim {
            write!(w, ",v{c}")?;
        }
        writeln!(w)?;
        for (i, row) in self.rows().enumerate() {
            if let Some(labels) = &self.labels {
                write!(w, "{}", labels[i])?;
            }
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Parse CSV: optional `id,v0,v1,...` header, then `label,values...` lines.
    /// A file whose label column is entirely empty yields an unlabeled set.
    pub fn read_csv<R: BufRead>(r: R, name: impl Into<String>) -> Result<Self> {
        let mut dim: Option<usize> = None;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut row = 0usize;
        for (line_no, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::format("csv", e.to_string()))?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if line_no == 0 && fields[0] == "id" && fields.get(1).is_some_and(|f| *f == "v0") {
                dim = Some(fields.len() - 1);
                continue;
            }
            let expected = *dim.get_or_insert(fields.len() - 1);
            if fields.len() - 1 != expected {
                return Err(Error::row(
                    row,
                    format!("expected {expected} values, found {}", fields.len() - 1),
                ));
            }
            labels.push(fields[0].to_string());
            for (c, field) in fields[1..].iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::row(
                        row,
                        format!("column {c}: cannot parse {field:?} as a number"),
                    )
                })?;
                if !v.is_finite() {
                    return Err(Error::row(row, format!("non-finite value at column {c}")));
                }
                values.push(v);
            }
            row += 1;
        }
        let dim = dim.ok_or_else(|| Error::format("csv", "no rows"))?;
        if row == 0 {
            return Err(Error::format("csv", "no rows"));
        }
        let labels = if labels.iter().all(|l| l.is_empty()) {
            None
        } else if let Some(pos) = labels.iter().position(|l| l.is_empty()) {
            return Err(Error::row(pos, "missing label"));
        } else {
            Some(labels)
        };
        EmbeddingSet::new(name, dim, values, labels)
    }
}

fn parse_binary(buf: &[u8], name: String) -> Result<EmbeddingSet> {
    if buf.len() < HEADER_LEN {
        return Err(Error::format("header", "file shorter than header"));
    }
    if &buf[0..4] != MAGIC {
        return Err(Error::format("header", "bad magic, expected \"IDEM\""));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::format(
            "header",
            format!("unsupported version {version}"),
        ));
    }
    let dim = u32::from_le_bytes(buf[6..10].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(buf[10..14].try_into().unwrap()) as usize;
    let flags = u16::from_le_bytes([buf[14], buf[15]]);
    if flags & !FLAG_F32 != 0 {
        return Err(Error::format(
            "header",
            format!("unknown flags {flags:#06x}"),
        ));
    }
    if dim < 2 {
        return Err(Error::format(
            "header",
            format!("dim must be >= 2, got {dim}"),
        ));
    }
    if n == 0 {
        return Err(Error::format("header", "row count is zero"));
    }
    let (precision, width) = if flags & FLAG_F32 != 0 {
        (Precision::F32, 4)
    } else {
        (Precision::F64, 8)
    };
    let body = &buf[HEADER_LEN..];
    let row_bytes = dim * width;
    let expected = n
        .checked_mul(row_bytes)
        .ok_or_else(|| Error::format("header", "size overflow"))?;
    if body.len() < expected {
        return Err(Error::row(body.len() / row_bytes, "truncated row data"));
    }
    if body.len() > expected {
        return Err(Error::format(
            "data",
            format!("{} trailing bytes after {n} rows", body.len() - expected),
        ));
    }
    let mut values = Vec::with_capacity(n * dim);
    for (k, chunk) in body.chunks_exact(width).enumerate() {
        let v = match precision {
            Precision::F32 => f32::from_le_bytes(chunk.try_into().unwrap()) as f64,
            Precision::F64 => f64::from_le_bytes(chunk.try_into().unwrap()),
        };
        if !v.is_finite() {
            return Err(Error::row(
                k / dim,
                format!("non-finite value at column {}", k % dim),
            ));
        }
        values.push(v);
    }
    Ok(EmbeddingSet::new(name, dim, values, None)?.with_precision(precision))
}

/// Sidecar labels path for a binary embedding file: `<file>.labels`.
pub fn labels_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

pub fn read_labels(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let token = line.trim_end_matches('\r');
        if token.is_empty() {
            return Err(Error::row(i, format!("{}: empty label", path.display())));
        }
        labels.push(token.to_string());
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[String]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    labels
        .iter()
        .try_for_each(|l| writeln!(w, "{l}"))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn set_name(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("embeddings")
        .to_string()
}

/// Load an embedding file. Binary files pick up a `.labels` sidecar when one
/// exists. The result is validated and not normalized.
pub fn load_embeddings(path: &Path, format: FileFormat) -> Result<EmbeddingSet> {
    let name = set_name(path);
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        FileFormat::Csv => EmbeddingSet::read_csv(BufReader::new(file), name),
        FileFormat::Binary => {
            let set = EmbeddingSet::read_binary(BufReader::new(file), name)?;
            let sidecar = labels_path(path);
            if sidecar.exists() {
                set.with_labels(read_labels(&sidecar)?)
            } else {
                Ok(set)
            }
        }
    }
}

/// Affine map from cosine similarity to a matcher score, `alpha * cos + beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreScale {
    alpha: f64,
    beta: f64,
}

impl Default for ScoreScale {
    fn default() -> Self {
        ScoreScale {
            alpha: 1.0,
            beta: 0.0,
        }
    }
}

impl ScoreScale {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Invalid(format!(
                "score scale needs finite alpha > 0 and finite beta, got ({alpha}, {beta})"
            )));
        }
        Ok(ScoreScale { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    pub fn apply(&self, cosine: f64) -> f64 {
        self.alpha * cosine + self.beta
    }
}

/// Inner product with four fixed-order partial sums. Every comparison path
/// in the crate goes through this so that scores are bit-identical
/// everywhere, and `dot(a, b) == dot(b, a)` exactly.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (a4, a_rest) = a.split_at(a.len() - a.len() % 4);
    let (b4, b_rest) = b.split_at(a4.len());
    for (x, y) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in a_rest.iter().zip(b_rest) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Matching score between two unit-norm rows.
pub fn score(a: &[f64], b: &[f64], scale: ScoreScale) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(scale.apply(dot(a, b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, dim: usize, seed: u64) -> EmbeddingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        EmbeddingSet::new("r", dim, values, None).unwrap()
    }

    fn minimal_binary() -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"IDEM");
        buf.extend_from_slice(&1u16.to_le_bytes());
        buf.extend_from_slice(&4u32.to_le_bytes());
        buf.extend_from_slice(&2u32.to_le_bytes());
        buf.extend_from_slice(&0u16.to_le_bytes());
        for v in 0..8 {
            buf.extend_from_slice(&(v as f64 + 0.5).to_le_bytes());
        }
        buf
    }

    #[test]
    fn minimal_binary_file_loads() {
        let set = EmbeddingSet::read_binary(&minimal_binary()[..], "m").unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.dim(), 4);
        assert!(!set.is_normalized());
        assert_eq!(set.row(1), &[4.5, 5.5, 6.5, 7.5]);
    }

    #[test]
    fn binary_errors_name_the_problem() {
        let mut bad_magic = minimal_binary();
        bad_magic[0] = b'X';
        assert!(matches!(
            EmbeddingSet::read_binary(&bad_magic[..], "m"),
            Err(Error::Format { .. })
        ));

        let truncated = &minimal_binary()[..HEADER_LEN + 8 * 5];
        match EmbeddingSet::read_binary(truncated, "m") {
            Err(Error::Row { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }

        let mut nan = minimal_binary();
        let at = HEADER_LEN + 8 * 6;
        nan[at..at + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        match EmbeddingSet::read_binary(&nan[..], "m") {
            Err(Error::Row { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_short_row_reports_index() {
        let text = "id,v0,v1,v2,v3\na,1,2,3,4\nb,1,2,3\n";
        let err = EmbeddingSet::read_csv(text.as_bytes(), "c").unwrap_err();
        assert!(
            err.to_string().starts_with("row 1: expected 4 values"),
            "{err}"
        );
    }

    #[test]
    fn csv_without_header_infers_dim() {
        let text = "a,1,0\nb,0,1\n";
        let set = EmbeddingSet::read_csv(text.as_bytes(), "c").unwrap();
        assert_eq!(set.dim(), 2);
        assert_eq!(set.labels().unwrap(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn label_count_mismatch_is_rejected() {
        let set = random_set(3, 4, 1);
        assert!(set.with_labels(vec!["a".into()]).is_err());
    }

    #[test]
    fn normalize_three_four_five() {
        let set = EmbeddingSet::new("t", 2, vec![3.0, 4.0], None).unwrap();
        let n = set.normalize().unwrap();
        assert!(n.is_normalized());
        assert!((n.row(0)[0] - 0.6).abs() < 1e-15);
        assert!((n.row(0)[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_is_idempotent() {
        let once = random_set(50, 8, 2).normalize().unwrap();
        let twice = once.normalize().unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn normalized_rows_are_unit() {
        let set = random_set(100, 16, 3).normalize().unwrap();
        for row in set.rows() {
            let norm = dot(row, row).sqrt();
            assert!((norm - 1.0).abs() <= NORM_TOLERANCE);
        }
    }

    #[test]
    fn zero_row_cannot_be_normalized() {
        let set = EmbeddingSet::new("z", 2, vec![1.0, 0.0, 0.0, 0.0], None).unwrap();
        match set.normalize() {
            Err(Error::Row { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn score_examples() {
        let unit = ScoreScale::default();
        assert_eq!(score(&[1.0, 0.0], &[1.0, 0.0], unit).unwrap(), 1.0);
        assert_eq!(score(&[1.0, 0.0], &[0.0, 1.0], unit).unwrap(), 0.0);
        let wide = ScoreScale::new(5000.0, 0.0).unwrap();
        assert_eq!(score(&[1.0, 0.0], &[0.6, 0.8], wide).unwrap(), 3000.0);
        assert!(score(&[1.0, 0.0], &[1.0, 0.0, 0.0], unit).is_err());
    }

    #[test]
    fn score_scale_rejects_non_positive_alpha() {
        assert!(ScoreScale::new(0.0, 1.0).is_err());
        assert!(ScoreScale::new(-2.0, 0.0).is_err());
        assert!(ScoreScale::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn distinct_labels_cover_every_row() {
        let set = random_set(5, 3, 4).with_distinct_labels();
        assert_eq!(set.identity_count(), Some(5));
    }
}
