//! Answer matrices, label sets, fact embeddings and dataset splits.
//!
//! Binary layouts (all integers little-endian):
//!
//! ```text
//! answers     "IPAM1" | n_rows: u32 | n_cols: u32  | n_rows*n_cols x i8
//! labels      "IPLB1" | n_rows: u32 | n_tasks: u32 | n_rows*n_tasks x u8
//! embeddings  "IPEM1" | count: u32  | dim: u32     | count*dim x f32
//! ```
//!
//! The CSV form of answers and labels is comma-separated integers, one row
//! per line, no header.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ANSWER_MAGIC: &[u8; 5] = b"IPAM1";
pub const LABEL_MAGIC: &[u8; 5] = b"IPLB1";
pub const EMBEDDING_MAGIC: &[u8; 5] = b"IPEM1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("dimension mismatch: expected {expected} values, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("value {value} at row {row}, column {col} is outside the alphabet")]
    OutOfAlphabet { row: usize, col: usize, value: i64 },
    #[error("row {row} has {found} columns, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("cannot parse {token:?} at row {row}, column {col}")]
    Parse {
        row: usize,
        col: usize,
        token: String,
    },
    #[error("embedding row {0} is the zero vector")]
    ZeroVector(usize),
    #[error("split weight {0} is not positive")]
    NonPositiveWeight(f64),
    #[error("cannot split an empty dataset")]
    EmptyDataset,
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// A ternary query answer: contradicted, not inferable, or entailed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(i8)]
pub enum Answer {
    Negative = -1,
    Unknown = 0,
    Positive = 1,
}

impl Answer {
    pub const ALL: [Answer; 3] = [Answer::Negative, Answer::Unknown, Answer::Positive];

    pub fn from_i64(value: i64) -> Option<Self> {
        match value {
            -1 => Some(Answer::Negative),
            0 => Some(Answer::Unknown),
            1 => Some(Answer::Positive),
            _ => None,
        }
    }

    pub fn value(self) -> i8 {
        self as i8
    }

    /// Position in [`Answer::ALL`], useful for contingency tables.
    pub fn index(self) -> usize {
        (self as i8 + 1) as usize
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for Answer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.value())
    }
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Answer::from_i64(v)
            .ok_or_else(|| serde::de::Error::custom(format!("answer {v} outside {{-1,0,1}}")))
    }
}

/// Reports x queries table of ternary answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerMatrix {
    n_reports: usize,
    n_queries: usize,
    values: Vec<Answer>,
}

impl AnswerMatrix {
    pub fn new(n_reports: usize, n_queries: usize, values: Vec<Answer>) -> Result<Self> {
        if values.len() != n_reports * n_queries {
            return Err(CorpusError::Dimension {
                expected: n_reports * n_queries,
                found: values.len(),
            });
        }
        Ok(Self {
            n_reports,
            n_queries,
            values,
        })
    }

    /// Builds a matrix from raw integers, rejecting anything outside {-1, 0, 1}.
    pub fn from_rows<R: AsRef<[i64]>>(rows: &[R]) -> Result<Self> {
        let n_queries = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * n_queries);
        for (row, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_queries {
                return Err(CorpusError::Ragged {
                    row,
                    expected: n_queries,
                    found: r.len(),
                });
            }
            for (col, &value) in r.iter().enumerate() {
                values.push(
                    Answer::from_i64(value).ok_or(CorpusError::OutOfAlphabet { row, col, value })?,
                );
            }
        }
        Self::new(rows.len(), n_queries, values)
    }

    pub fn n_reports(&self) -> usize {
        self.n_reports
    }

    pub fn n_queries(&self) -> usize {
        self.n_queries
    }

    pub fn get(&self, report: usize, query: usize) -> Answer {
        self.values[report * self.n_queries + query]
    }

    pub fn row(&self, report: usize) -> &[Answer] {
        &self.values[report * self.n_queries..(report + 1) * self.n_queries]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Answer]> {
        // chunks_exact panics on a zero chunk size
        (0..self.n_reports).map(move |r| self.row(r))
    }

    /// Sub-matrix of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_queries);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Self {
            n_reports: rows.len(),
            n_queries: self.n_queries,
            values,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.values.len());
        out.extend_from_slice(ANSWER_MAGIC);
        out.extend_from_slice(&(self.n_reports as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_queries as u32).to_le_bytes());
        out.extend(self.values.iter().map(|a| a.value() as u8));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (rows, cols, payload) = split_header(bytes, ANSWER_MAGIC)?;
        check_len(payload.len(), rows * cols)?;
        let mut values = Vec::with_capacity(payload.len());
        for (i, &b) in payload.iter().enumerate() {
            let value = b as i8 as i64;
            values.push(Answer::from_i64(value).ok_or(CorpusError::OutOfAlphabet {
                row: i / cols,
                col: i % cols,
                value,
            })?);
        }
        Self::new(rows, cols, values)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|a| a.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::from_rows(&parse_csv_ints(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

impl MatrixFormat {
    /// `.csv` selects CSV, anything else the binary layout.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

pub fn load_answer_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<AnswerMatrix> {
    let path = path.as_ref();
    match format {
        MatrixFormat::Binary => AnswerMatrix::from_bytes(&read(path)?),
        MatrixFormat::Csv => AnswerMatrix::from_csv(&read_string(path)?),
    }
}

pub fn write_answer_matrix(
    path: impl AsRef<Path>,
    matrix: &AnswerMatrix,
    format: MatrixFormat,
) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Binary => matrix.to_bytes(),
        MatrixFormat::Csv => matrix.to_csv().into_bytes(),
    };
    write_atomic(path.as_ref(), &bytes)
}

/// Binary labels per (report, task).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    n_reports: usize,
    n_tasks: usize,
    values: Vec<u8>,
}

impl LabelSet {
    pub fn new(n_reports: usize, n_tasks: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != n_reports * n_tasks {
            return Err(CorpusError::Dimension {
                expected: n_reports * n_tasks,
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|&v| v > 1) {
            return Err(CorpusError::OutOfAlphabet {
                row: i / n_tasks,
                col: i % n_tasks,
                value: values[i] as i64,
            });
        }
        Ok(Self {
            n_reports,
            n_tasks,
            values,
        })
    }

    /// Single-task label set.
    pub fn from_column(labels: Vec<u8>) -> Result<Self> {
        Self::new(labels.len(), 1, labels)
    }

    pub fn n_reports(&self) -> usize {
        self.n_reports
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn get(&self, report: usize, task: usize) -> u8 {
        self.values[report * self.n_tasks + task]
    }

    pub fn column(&self, task: usize) -> Vec<u8> {
        (0..self.n_reports).map(|r| self.get(r, task)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_tasks);
        for &r in rows {
            values.extend_from_slice(&self.values[r * self.n_tasks..(r + 1) * self.n_tasks]);
        }
        Self {
            n_reports: rows.len(),
            n_tasks: self.n_tasks,
            values,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.values.len());
        out.extend_from_slice(LABEL_MAGIC);
        out.extend_from_slice(&(self.n_reports as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_tasks as u32).to_le_bytes());
        out.extend_from_slice(&self.values);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (rows, tasks, payload) = split_header(bytes, LABEL_MAGIC)?;
        check_len(payload.len(), rows * tasks)?;
        Self::new(rows, tasks, payload.to_vec())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.n_reports {
            let line: Vec<String> = (0..self.n_tasks)
                .map(|t| self.get(r, t).to_string())
                .collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = parse_csv_ints(text)?;
        let n_tasks = rows.first().map_or(0, Vec::len);
        let mut values = Vec::new();
        for (row, r) in rows.iter().enumerate() {
            if r.len() != n_tasks {
                return Err(CorpusError::Ragged {
                    row,
                    expected: n_tasks,
                    found: r.len(),
                });
            }
            for (col, &value) in r.iter().enumerate() {
                if value != 0 && value != 1 {
                    return Err(CorpusError::OutOfAlphabet { row, col, value });
                }
                values.push(value as u8);
            }
        }
        Self::new(rows.len(), n_tasks, values)
    }
}

pub fn load_labels(path: impl AsRef<Path>, format: MatrixFormat) -> Result<LabelSet> {
    let path = path.as_ref();
    match format {
        MatrixFormat::Binary => LabelSet::from_bytes(&read(path)?),
        MatrixFormat::Csv => LabelSet::from_csv(&read_string(path)?),
    }
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelSet, format: MatrixFormat) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Binary => labels.to_bytes(),
        MatrixFormat::Csv => labels.to_csv().into_bytes(),
    };
    write_atomic(path.as_ref(), &bytes)
}

/// Fact embeddings, one row per fact.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, vectors: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(CorpusError::Header("embedding dimension is zero".into()));
        }
        if vectors.len() % dim != 0 {
            return Err(CorpusError::Dimension {
                expected: (vectors.len() / dim + 1) * dim,
                found: vectors.len(),
            });
        }
        let table = Self { dim, vectors };
        if let Some(row) = (0..table.len()).find(|&i| table.row(i).iter().all(|&v| v == 0.0)) {
            return Err(CorpusError::ZeroVector(row));
        }
        Ok(table)
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(CorpusError::Ragged {
                    row,
                    expected: dim,
                    found: r.len(),
                });
            }
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.vectors
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 4 * self.vectors.len());
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (count, dim, payload) = split_header(bytes, EMBEDDING_MAGIC)?;
        check_len(payload.len(), count * dim * 4)?;
        if count > 0 && dim == 0 {
            return Err(CorpusError::Header("embedding dimension is zero".into()));
        }
        let vectors = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if count == 0 {
            return Ok(Self {
                dim: dim.max(1),
                vectors,
            });
        }
        Self::new(dim, vectors)
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    EmbeddingTable::from_bytes(&read(path.as_ref())?)
}

pub fn write_embeddings(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<()> {
    write_atomic(path.as_ref(), &table.to_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub splits: Vec<Split>,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> [usize; 3] {
        let mut sizes = [0; 3];
        for s in &self.splits {
            sizes[*s as usize] += 1;
        }
        sizes
    }
}

/// Largest-remainder apportionment of `n` items over `weights`.
///
/// Ties in the remainder go to the earlier weight.
pub fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Uniform random train/val/test partition with largest-remainder sizes.
pub fn split_dataset(n_reports: usize, ratio: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if let Some(&w) = ratio.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(CorpusError::NonPositiveWeight(w));
    }
    if ratio.iter().sum::<f64>() <= 0.0 {
        return Err(CorpusError::NonPositiveWeight(0.0));
    }
    if n_reports == 0 {
        return Err(CorpusError::EmptyDataset);
    }
    let sizes = apportion(n_reports, &ratio);
    let mut order: Vec<usize> = (0..n_reports).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut splits = vec![Split::Train; n_reports];
    for (pos, &report) in order.iter().enumerate() {
        splits[report] = if pos < sizes[0] {
            Split::Train
        } else if pos < sizes[0] + sizes[1] {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(SplitAssignment { splits, seed })
}

fn split_header<'a>(bytes: &'a [u8], magic: &[u8; 5]) -> Result<(usize, usize, &'a [u8])> {
    if bytes.len() < 13 {
        return Err(CorpusError::Header(format!(
            "file is {} bytes, shorter than the 13-byte header",
            bytes.len()
        )));
    }
    if &bytes[..5] != magic {
        return Err(CorpusError::Header(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&bytes[..5])
        )));
    }
    let a = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let b = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    Ok((a, b, &bytes[13..]))
}

fn check_len(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(CorpusError::Dimension { expected, found });
    }
    Ok(())
}

fn parse_csv_ints(text: &str) -> Result<Vec<Vec<i64>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(row, line)| {
            line.split(',')
                .enumerate()
                .map(|(col, tok)| {
                    tok.trim().parse::<i64>().map_err(|_| CorpusError::Parse {
                        row,
                        col,
                        token: tok.to_string(),
                    })
                })
                .collect()
        })
        .collect()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })
}

fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Writes to a sibling temp file and renames it into place, so a failed
/// write never leaves a partial artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| CorpusError::Io {
        path: path.to_owned(),
        source,
    };
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err)
}
