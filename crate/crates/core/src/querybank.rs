//! Query bank construction from fact embeddings.
//!
//! Facts are clustered with k-means (k-means++ seeding, Lloyd updates), the
//! member nearest each centroid becomes a candidate query, and candidates are
//! deduplicated by cosine similarity with larger clusters taking priority.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, EmbeddingTable};

pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.97;
pub const DEFAULT_K: usize = 600;

#[derive(Debug, Error)]
pub enum QueryBankError {
    #[error("k = {k} is out of range for {n} facts")]
    KOutOfRange { k: usize, n: usize },
    #[error("embedding table is empty")]
    EmptyTable,
    #[error("clustering covers {result} facts but the table has {table}")]
    SizeMismatch { result: usize, table: usize },
    #[error("fact {0} has a zero-norm embedding")]
    ZeroNorm(usize),
    #[error("dedup threshold {0} is outside (-1, 1]")]
    BadThreshold(f64),
    #[error("{texts} fact texts for {facts} embeddings")]
    TextMismatch { texts: usize, facts: usize },
    #[error("query bank io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("query bank line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
}

pub type Result<T, E = QueryBankError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: usize,
    pub text: String,
    pub source_fact_index: usize,
}

/// Ordered set of interpretable queries; ids are `0..len`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueryBank {
    queries: Vec<Query>,
}

impl QueryBank {
    /// Bank over the given fact indices, in order.
    pub fn from_facts(fact_indices: &[usize], fact_texts: &[String]) -> Result<Self> {
        let queries = fact_indices
            .iter()
            .enumerate()
            .map(|(query_id, &f)| {
                let text = fact_texts.get(f).cloned().ok_or(QueryBankError::TextMismatch {
                    texts: fact_texts.len(),
                    facts: f + 1,
                })?;
                Ok(Query {
                    query_id,
                    text,
                    source_fact_index: f,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { queries })
    }

    /// Bank with placeholder texts `q0, q1, ...`.
    pub fn anonymous(n: usize) -> Self {
        Self {
            queries: (0..n)
                .map(|i| Query {
                    query_id: i,
                    text: format!("q{i}"),
                    source_fact_index: i,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn texts(&self) -> Vec<String> {
        self.queries.iter().map(|q| q.text.clone()).collect()
    }

    pub fn get(&self, query_id: usize) -> Option<&Query> {
        self.queries.get(query_id)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for q in &self.queries {
            out.push_str(&serde_json::to_string(q).expect("query serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut queries = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let q: Query = serde_json::from_str(line).map_err(|e| QueryBankError::Format {
                line: i + 1,
                message: e.to_string(),
            })?;
            if q.query_id != queries.len() {
                return Err(QueryBankError::Format {
                    line: i + 1,
                    message: format!("expected query_id {}, found {}", queries.len(), q.query_id),
                });
            }
            queries.push(q);
        }
        Ok(Self { queries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| QueryBankError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_jsonl(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        corpus::write_atomic(path.as_ref(), self.to_jsonl().as_bytes())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub k: usize,
    pub dim: usize,
    pub assignments: Vec<usize>,
    /// Row-major `k x dim`.
    pub centroids: Vec<f64>,
    /// Inertia after every assignment step, first entry from the seeds.
    pub inertia_history: Vec<f64>,
}

impl ClusteringResult {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&0.0)
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

fn sq_dist(a: &[f32], c: &[f64]) -> f64 {
    a.iter()
        .zip(c)
        .map(|(&x, &y)| {
            let d = x as f64 - y;
            d * d
        })
        .sum()
}

/// Nearest centroid per point (lowest index on ties) and total inertia.
///
/// Per-point work runs in parallel; the inertia sum is reduced sequentially
/// so it does not depend on the worker count.
fn assign(table: &EmbeddingTable, centroids: &[f64], k: usize) -> (Vec<usize>, f64) {
    let dim = table.dim();
    let nearest: Vec<(usize, f64)> = (0..table.len())
        .into_par_iter()
        .map(|i| {
            let x = table.row(i);
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(x, &centroids[c * dim..(c + 1) * dim]);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .collect();
    let inertia = nearest.iter().map(|(_, d)| d).sum();
    (nearest.into_iter().map(|(c, _)| c).collect(), inertia)
}

fn kmeans_plus_plus(table: &EmbeddingTable, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = table.len();
    let dim = table.dim();
    let mut chosen = vec![false; n];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rand::Rng::gen_range(rng, 0..n);
    chosen[first] = true;
    centroids.extend(table.row(first).iter().map(|&v| v as f64));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(table.row(i), &centroids)).collect();
    for _ in 1..k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every remaining point coincides with a seed
            Err(_) => (0..n).find(|&i| !chosen[i]).expect("k <= n"),
        };
        chosen[next] = true;
        let start = centroids.len();
        centroids.extend(table.row(next).iter().map(|&v| v as f64));
        let c = &centroids[start..];
        d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            *d = d.min(sq_dist(table.row(i), c));
        });
    }
    centroids
}

/// Lloyd's k-means with k-means++ seeding.
///
/// Stops when no centroid moves by `tol` or more (Euclidean), or after
/// `max_iters` updates. Empty clusters keep their previous centroid.
pub fn kmeans_cluster(
    table: &EmbeddingTable,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<ClusteringResult> {
    let n = table.len();
    if n == 0 {
        return Err(QueryBankError::EmptyTable);
    }
    if k == 0 || k > n {
        return Err(QueryBankError::KOutOfRange { k, n });
    }
    let dim = table.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(table, k, &mut rng);
    let (mut assignments, inertia) = assign(table, &centroids, k);
    let mut inertia_history = vec![inertia];

    for _ in 0..max_iters {
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(table.row(i)) {
                *s += v as f64;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mut moved = 0.0;
            for j in 0..dim {
                let updated = sums[c * dim + j] / counts[c] as f64;
                moved += (updated - centroids[c * dim + j]).powi(2);
                centroids[c * dim + j] = updated;
            }
            shift = shift.max(moved.sqrt());
        }
        let (a, inertia) = assign(table, &centroids, k);
        assignments = a;
        inertia_history.push(inertia);
        if shift < tol {
            break;
        }
    }

    Ok(ClusteringResult {
        k,
        dim,
        assignments,
        centroids,
        inertia_history,
    })
}

/// Per non-empty cluster, the member closest to its centroid (lowest fact
/// index on ties), in cluster order.
pub fn select_representatives(
    result: &ClusteringResult,
    table: &EmbeddingTable,
) -> Result<Vec<usize>> {
    if result.assignments.len() != table.len() || result.dim != table.dim() {
        return Err(QueryBankError::SizeMismatch {
            result: result.assignments.len(),
            table: table.len(),
        });
    }
    let mut best: Vec<Option<(usize, f64)>> = vec![None; result.k];
    for (i, &c) in result.assignments.iter().enumerate() {
        let d = sq_dist(table.row(i), result.centroid(c));
        match best[c] {
            Some((_, bd)) if bd <= d => {}
            _ => best[c] = Some((i, d)),
        }
    }
    Ok(best.into_iter().flatten().map(|(i, _)| i).collect())
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Greedy cosine deduplication.
///
/// Candidates are visited by descending `priority` (ties: lower fact index);
/// one is kept iff its similarity to every already-kept candidate is at most
/// `threshold`. Returns the kept fact indices in retention order.
pub fn dedup_by_cosine(
    candidates: &[usize],
    table: &EmbeddingTable,
    threshold: f64,
    priority: &[usize],
) -> Result<Vec<usize>> {
    if !(threshold > -1.0 && threshold <= 1.0) {
        return Err(QueryBankError::BadThreshold(threshold));
    }
    if priority.len() != candidates.len() {
        return Err(QueryBankError::SizeMismatch {
            result: priority.len(),
            table: candidates.len(),
        });
    }
    for &c in candidates {
        if c >= table.len() {
            return Err(QueryBankError::SizeMismatch {
                result: c + 1,
                table: table.len(),
            });
        }
        if table.row(c).iter().all(|&v| v == 0.0) {
            return Err(QueryBankError::ZeroNorm(c));
        }
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        priority[b]
            .cmp(&priority[a])
            .then(candidates[a].cmp(&candidates[b]))
    });
    let mut kept: Vec<usize> = Vec::new();
    for pos in order {
        let c = candidates[pos];
        let v = table.row(c);
        if kept
            .iter()
            .all(|&k| cosine_similarity(v, table.row(k)) <= threshold)
        {
            kept.push(c);
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankConfig {
    pub k: usize,
    pub threshold: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            threshold: DEFAULT_DEDUP_THRESHOLD,
            seed: 0,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

/// Cluster, pick centroid-nearest facts, deduplicate.
pub fn build_query_bank(
    table: &EmbeddingTable,
    fact_texts: &[String],
    config: &BankConfig,
) -> Result<QueryBank> {
    if fact_texts.len() != table.len() {
        return Err(QueryBankError::TextMismatch {
            texts: fact_texts.len(),
            facts: table.len(),
        });
    }
    let clusters = kmeans_cluster(table, config.k, config.seed, config.max_iters, config.tol)?;
    let reps = select_representatives(&clusters, table)?;
    let sizes = clusters.cluster_sizes();
    let priority: Vec<usize> = reps.iter().map(|&r| sizes[clusters.assignments[r]]).collect();
    let kept = dedup_by_cosine(&reps, table, config.threshold, &priority)?;
    QueryBank::from_facts(&kept, fact_texts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[Vec<f32>]) -> EmbeddingTable {
        EmbeddingTable::from_rows(rows).unwrap()
    }

    fn texts(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("fact {i}")).collect()
    }

    #[test]
    fn k_equal_n_gives_zero_inertia() {
        let t = table(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 3.0], vec![-1.0, 5.0]]);
        let r = kmeans_cluster(&t, 4, 1, 50, 1e-9).unwrap();
        assert_eq!(r.inertia(), 0.0);
        let mut a = r.assignments.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn k_out_of_range() {
        let t = table(&[vec![1.0, 0.0]]);
        assert!(matches!(
            kmeans_cluster(&t, 2, 0, 10, 1e-6),
            Err(QueryBankError::KOutOfRange { .. })
        ));
        assert!(kmeans_cluster(&t, 0, 0, 10, 1e-6).is_err());
    }

    #[test]
    fn singleton_cluster_selects_its_member() {
        let t = table(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let r = ClusteringResult {
            k: 2,
            dim: 2,
            assignments: vec![0, 1],
            centroids: vec![0.9, 0.1, 0.2, 0.7],
            inertia_history: vec![],
        };
        assert_eq!(select_representatives(&r, &t).unwrap(), vec![0, 1]);
    }

    #[test]
    fn nearest_member_is_selected() {
        // cluster {v, 2v} with centroid 1.4v
        let t = table(&[vec![0.0, 2.0], vec![0.0, 1.0]]);
        let r = ClusteringResult {
            k: 1,
            dim: 2,
            assignments: vec![0, 0],
            centroids: vec![0.0, 1.4],
            inertia_history: vec![],
        };
        assert_eq!(select_representatives(&r, &t).unwrap(), vec![1]);
    }

    #[test]
    fn equidistant_members_pick_lower_index() {
        let t = table(&[vec![2.0, 0.0], vec![0.0, 2.0], vec![0.0, 0.5]]);
        let r = ClusteringResult {
            k: 2,
            dim: 2,
            assignments: vec![0, 0, 1],
            centroids: vec![1.0, 1.0, 0.0, 0.5],
            inertia_history: vec![],
        };
        assert_eq!(select_representatives(&r, &t).unwrap(), vec![0, 2]);
    }

    #[test]
    fn mismatched_result_is_rejected() {
        let t = table(&[vec![1.0, 0.0]]);
        let r = ClusteringResult {
            k: 1,
            dim: 2,
            assignments: vec![0, 0],
            centroids: vec![1.0, 0.0],
            inertia_history: vec![],
        };
        assert!(select_representatives(&r, &t).is_err());
    }

    #[test]
    fn dedup_identical_and_orthogonal() {
        let t = table(&[vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let kept = dedup_by_cosine(&[0, 1], &t, 0.97, &[1, 1]).unwrap();
        assert_eq!(kept, vec![0]);
        let kept = dedup_by_cosine(&[0, 2], &t, 0.97, &[1, 1]).unwrap();
        assert_eq!(kept, vec![0, 2]);
    }

    #[test]
    fn dedup_priority_decides_which_survives() {
        let t = table(&[vec![1.0, 0.0], vec![1.0, 0.01]]);
        assert_eq!(dedup_by_cosine(&[0, 1], &t, 0.97, &[1, 5]).unwrap(), vec![1]);
        assert_eq!(dedup_by_cosine(&[0, 1], &t, 0.97, &[5, 1]).unwrap(), vec![0]);
    }

    #[test]
    fn dedup_three_vectors_against_pairwise_scan() {
        // v1 = e1; v2 at cos 0.99 to v1; v3 at cos 0.5 to v1 and below threshold to v2
        let c: f32 = 0.99;
        let v1 = vec![1.0, 0.0, 0.0];
        let v2 = vec![c, (1.0 - c * c).sqrt(), 0.0];
        let v3 = vec![0.5, 0.0, 0.75f32.sqrt()];
        let t = table(&[v1, v2, v3]);
        let kept = dedup_by_cosine(&[0, 1, 2], &t, 0.97, &[3, 2, 1]).unwrap();

        // brute force: greedy over the same order, checking all pairs by hand
        let mut expected = Vec::new();
        for i in 0..3 {
            let ok = expected
                .iter()
                .all(|&j: &usize| cosine_similarity(t.row(i), t.row(j)) <= 0.97);
            if ok {
                expected.push(i);
            }
        }
        assert_eq!(kept, expected);
        assert_eq!(kept, vec![0, 2]);
    }

    #[test]
    fn dedup_rejects_bad_threshold() {
        let t = table(&[vec![1.0, 0.0]]);
        assert!(dedup_by_cosine(&[0], &t, -1.0, &[1]).is_err());
        assert!(dedup_by_cosine(&[0], &t, 1.5, &[1]).is_err());
    }

    #[test]
    fn ten_directions_all_survive() {
        let rows: Vec<Vec<f32>> = (0..10)
            .map(|i| {
                let mut v = vec![0.0; 10];
                v[i] = 1.0;
                v
            })
            .collect();
        let t = table(&rows);
        let bank = build_query_bank(
            &t,
            &texts(10),
            &BankConfig {
                k: 10,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(bank.len(), 10);
    }

    #[test]
    fn ten_copies_collapse_to_one() {
        let rows = vec![vec![0.3f32, -0.2, 0.9]; 10];
        let t = table(&rows);
        let bank = build_query_bank(
            &t,
            &texts(10),
            &BankConfig {
                k: 10,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(bank.len(), 1);
    }

    #[test]
    fn jsonl_roundtrip_and_id_check() {
        let bank = QueryBank::from_facts(&[2, 0], &texts(3)).unwrap();
        let text = bank.to_jsonl();
        assert!(text.starts_with(r#"{"query_id":0,"text":"fact 2","source_fact_index":2}"#));
        assert_eq!(QueryBank::from_jsonl(&text).unwrap(), bank);
        let bad = r#"{"query_id":1,"text":"x","source_fact_index":0}"#;
        assert!(QueryBank::from_jsonl(bad).is_err());
    }
}
