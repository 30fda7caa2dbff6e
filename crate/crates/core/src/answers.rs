//! Answer acquisition.
//!
//! Three providers share the [`AnswerProvider`] interface: a lookup into a
//! stored [`AnswerMatrix`], a synthetic class-conditional sampler with a
//! known joint, and a client for an external entailment service that answers
//! `POST /infer` with `{"label": 0|1|2}`.

use std::thread;
use std::time::Duration;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Answer, AnswerMatrix, LabelSet};

#[derive(Debug, Error)]
pub enum AnswerError {
    #[error("prompt part {0} is empty")]
    EmptyPart(&'static str),
    #[error("raw entailment label {0} is outside {{0, 1, 2}}")]
    OutOfAlphabet(i64),
    #[error("unknown query id {query} (bank has {n_queries})")]
    UnknownQuery { query: usize, n_queries: usize },
    #[error("unknown report index {report} (have {n_reports})")]
    UnknownReport { report: usize, n_reports: usize },
    #[error("entailment service failed after {attempts} attempt(s): {message}")]
    Remote {
        attempts: u32,
        message: String,
        retryable: bool,
    },
    #[error("malformed service response: {0}")]
    BadResponse(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("answer input: {0}")]
    Input(String),
}

impl AnswerError {
    /// Transport-level failures that a caller may retry later.
    pub fn is_retryable(&self) -> bool {
        matches!(self, AnswerError::Remote { retryable: true, .. })
    }
}

pub type Result<T, E = AnswerError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub report_id: String,
    pub text: String,
}

/// Instruction / premise / hypothesis entailment prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliPrompt {
    pub instruction: String,
    pub premise: String,
    pub hypothesis: String,
}

impl NliPrompt {
    pub fn render(&self) -> String {
        format!(
            "{}\n\nPremise: {}\n\nHypothesis: {}",
            self.instruction, self.premise, self.hypothesis
        )
    }
}

pub fn assemble_nli_prompt(instruction: &str, report: &ReportDoc, fact_text: &str) -> Result<NliPrompt> {
    if instruction.is_empty() {
        return Err(AnswerError::EmptyPart("instruction"));
    }
    if report.text.is_empty() {
        return Err(AnswerError::EmptyPart("premise"));
    }
    if fact_text.is_empty() {
        return Err(AnswerError::EmptyPart("hypothesis"));
    }
    Ok(NliPrompt {
        instruction: instruction.to_owned(),
        premise: report.text.clone(),
        hypothesis: fact_text.to_owned(),
    })
}

/// Service label 0/1/2 (contradiction/neutral/entailment) to answer -1/0/1.
pub fn map_nli_output(raw: i64) -> Result<Answer> {
    match raw {
        0 => Ok(Answer::Negative),
        1 => Ok(Answer::Unknown),
        2 => Ok(Answer::Positive),
        other => Err(AnswerError::OutOfAlphabet(other)),
    }
}

/// Source of ternary answers for (report, query) pairs.
pub trait AnswerProvider {
    fn n_queries(&self) -> usize;

    fn answer(&self, report: usize, query: usize) -> Result<Answer>;

    fn check_query(&self, query: usize) -> Result<()> {
        if query >= self.n_queries() {
            return Err(AnswerError::UnknownQuery {
                query,
                n_queries: self.n_queries(),
            });
        }
        Ok(())
    }
}

impl<P: AnswerProvider + ?Sized> AnswerProvider for &P {
    fn n_queries(&self) -> usize {
        (**self).n_queries()
    }

    fn answer(&self, report: usize, query: usize) -> Result<Answer> {
        (**self).answer(report, query)
    }
}

pub fn answer_query<P: AnswerProvider + ?Sized>(provider: &P, report: usize, query: usize) -> Result<Answer> {
    provider.check_query(query)?;
    provider.answer(report, query)
}

pub struct MatrixProvider<'a> {
    matrix: &'a AnswerMatrix,
}

impl<'a> MatrixProvider<'a> {
    pub fn new(matrix: &'a AnswerMatrix) -> Self {
        Self { matrix }
    }
}

impl AnswerProvider for MatrixProvider<'_> {
    fn n_queries(&self) -> usize {
        self.matrix.n_queries()
    }

    fn answer(&self, report: usize, query: usize) -> Result<Answer> {
        self.check_query(query)?;
        if report >= self.matrix.n_reports() {
            return Err(AnswerError::UnknownReport {
                report,
                n_reports: self.matrix.n_reports(),
            });
        }
        Ok(self.matrix.get(report, query))
    }
}

/// Answers for a single report held in memory.
pub struct RowProvider<'a> {
    row: &'a [Answer],
}

impl<'a> RowProvider<'a> {
    pub fn new(row: &'a [Answer]) -> Self {
        Self { row }
    }
}

impl AnswerProvider for RowProvider<'_> {
    fn n_queries(&self) -> usize {
        self.row.len()
    }

    fn answer(&self, _report: usize, query: usize) -> Result<Answer> {
        self.check_query(query)?;
        Ok(self.row[query])
    }
}

/// Class-conditional answer distribution over (-1, 0, 1), indexed by
/// [`Answer::index`].
pub type Categorical = [f64; 3];

/// Naive-Bayes generator: `y ~ Bernoulli(prior)`, then every answer
/// independently from `cond_tables[q][y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_queries: usize,
    pub prior: f64,
    /// `cond_tables[q][y]`
    pub cond_tables: Vec<[Categorical; 2]>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prior) {
            return Err(AnswerError::InvalidSpec(format!("prior {} outside [0, 1]", self.prior)));
        }
        if self.cond_tables.len() != self.n_queries {
            return Err(AnswerError::InvalidSpec(format!(
                "{} tables for {} queries",
                self.cond_tables.len(),
                self.n_queries
            )));
        }
        for (q, tables) in self.cond_tables.iter().enumerate() {
            for (y, t) in tables.iter().enumerate() {
                let sum: f64 = t.iter().sum();
                if t.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(AnswerError::InvalidSpec(format!(
                        "table for query {q}, class {y} is not a distribution: {t:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Query 0 reveals the label exactly (`answer = 2y - 1`); the remaining
    /// queries are label-independent noise.
    pub fn separable(n_queries: usize, prior: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e9a);
        let mut cond_tables = vec![[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]];
        for _ in 1..n_queries {
            let t = random_categorical(&mut rng, 1.0);
            cond_tables.push([t, t]);
        }
        Self {
            n_queries,
            prior,
            cond_tables,
            seed,
        }
    }

    /// Every query carries some evidence: class 1 leans towards positive
    /// answers and class 0 towards negative, with a shared share of
    /// "unknown". Strength varies per query.
    pub fn informative(n_queries: usize, prior: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1f0a);
        let cond_tables = (0..n_queries)
            .map(|_| {
                let unknown = rng.gen_range(0.1..0.5);
                let lean = rng.gen_range(0.55..0.8);
                let known = 1.0 - unknown;
                let pos = [known * (1.0 - lean), unknown, known * lean];
                let neg = [known * lean, unknown, known * (1.0 - lean)];
                if rng.gen_bool(0.5) {
                    [neg, pos]
                } else {
                    [pos, neg]
                }
            })
            .collect();
        Self {
            n_queries,
            prior,
            cond_tables,
            seed,
        }
    }

    /// Label-independent tables drawn at random.
    pub fn uninformative(n_queries: usize, prior: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77aa);
        let cond_tables = (0..n_queries)
            .map(|_| {
                let t = random_categorical(&mut rng, 0.5);
                [t, t]
            })
            .collect();
        Self {
            n_queries,
            prior,
            cond_tables,
            seed,
        }
    }

    /// Independent random tables per class.
    pub fn random(n_queries: usize, prior: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3c3c);
        let cond_tables = (0..n_queries)
            .map(|_| [random_categorical(&mut rng, 0.1), random_categorical(&mut rng, 0.1)])
            .collect();
        Self {
            n_queries,
            prior,
            cond_tables,
            seed,
        }
    }

    pub fn label(&self, report: usize) -> u8 {
        (cell_uniform(self.seed, report as u64, u64::MAX) < self.prior) as u8
    }

    pub fn sample(&self, report: usize, query: usize, label: u8) -> Answer {
        let u = cell_uniform(self.seed, report as u64, query as u64);
        let t = &self.cond_tables[query][label as usize];
        if u < t[0] {
            Answer::Negative
        } else if u < t[0] + t[1] {
            Answer::Unknown
        } else {
            Answer::Positive
        }
    }
}

fn random_categorical(rng: &mut ChaCha8Rng, floor: f64) -> Categorical {
    let raw = [
        rng.gen_range(floor..1.0 + floor),
        rng.gen_range(floor..1.0 + floor),
        rng.gen_range(floor..1.0 + floor),
    ];
    let s: f64 = raw.iter().sum();
    let mut t = [raw[0] / s, raw[1] / s, 0.0];
    t[2] = 1.0 - t[0] - t[1];
    t
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw in [0, 1) that depends only on (seed, a, b), so cells can be
/// generated in any order or in parallel.
fn cell_uniform(seed: u64, a: u64, b: u64) -> f64 {
    let h = splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

pub fn synth_generate(spec: &SyntheticSpec, n_reports: usize) -> Result<(AnswerMatrix, LabelSet)> {
    spec.validate()?;
    let labels: Vec<u8> = (0..n_reports).map(|r| spec.label(r)).collect();
    let values: Vec<Answer> = (0..n_reports)
        .into_par_iter()
        .flat_map_iter(|r| {
            let y = labels[r];
            (0..spec.n_queries).map(move |q| spec.sample(r, q, y))
        })
        .collect();
    let answers = AnswerMatrix::new(n_reports, spec.n_queries, values).expect("sized by construction");
    let labels = LabelSet::from_column(labels).expect("binary by construction");
    Ok((answers, labels))
}

/// Samples answers on demand from a [`SyntheticSpec`]; report `r` gets the
/// same label and answers as row `r` of [`synth_generate`].
pub struct SyntheticProvider {
    spec: SyntheticSpec,
}

impl SyntheticProvider {
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn label(&self, report: usize) -> u8 {
        self.spec.label(report)
    }
}

impl AnswerProvider for SyntheticProvider {
    fn n_queries(&self) -> usize {
        self.spec.n_queries
    }

    fn answer(&self, report: usize, query: usize) -> Result<Answer> {
        self.check_query(query)?;
        Ok(self.spec.sample(report, query, self.spec.label(report)))
    }
}

#[derive(Debug, Clone)]
pub struct NliClientConfig {
    pub base_url: String,
    pub timeout: Duration,
    pub attempts: u32,
    pub backoff: Duration,
}

impl NliClientConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout: Duration::from_secs(30),
            attempts: 3,
            backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Deserialize)]
struct InferResponse {
    label: i64,
}

/// Blocking client for the entailment service.
pub struct NliClient {
    config: NliClientConfig,
    agent: ureq::Agent,
}

impl NliClient {
    pub fn new(config: NliClientConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self { config, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/infer", self.config.base_url.trim_end_matches('/'))
    }

    /// Raw service label, retried with exponential backoff on transport
    /// errors, 5xx and 429.
    pub fn infer_raw(&self, prompt: &NliPrompt) -> Result<i64> {
        let url = self.endpoint();
        let attempts = self.config.attempts.max(1);
        let mut delay = self.config.backoff;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.agent.post(&url).send_json(prompt) {
                Ok(resp) => {
                    let body: InferResponse = resp
                        .into_json()
                        .map_err(|e| AnswerError::BadResponse(e.to_string()))?;
                    return Ok(body.label);
                }
                Err(ureq::Error::Status(code, _)) if code != 429 && code < 500 => {
                    return Err(AnswerError::Remote {
                        attempts: attempt,
                        message: format!("HTTP {code}"),
                        retryable: false,
                    });
                }
                Err(e) => last = e.to_string(),
            }
            if attempt < attempts {
                thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(AnswerError::Remote {
            attempts,
            message: last,
            retryable: true,
        })
    }

    pub fn infer(&self, prompt: &NliPrompt) -> Result<Answer> {
        map_nli_output(self.infer_raw(prompt)?)
    }
}

/// Answers queries about report documents through an [`NliClient`].
pub struct NliProvider {
    client: NliClient,
    instruction: String,
    reports: Vec<ReportDoc>,
    query_texts: Vec<String>,
}

impl NliProvider {
    pub fn new(
        client: NliClient,
        instruction: impl Into<String>,
        reports: Vec<ReportDoc>,
        query_texts: Vec<String>,
    ) -> Self {
        Self {
            client,
            instruction: instruction.into(),
            reports,
            query_texts,
        }
    }

    pub fn n_reports(&self) -> usize {
        self.reports.len()
    }

    /// Fills the full reports x queries matrix with at most `fan_out`
    /// requests in flight. The first failure (in row-major order) is returned.
    pub fn answer_all(&self, fan_out: usize) -> Result<AnswerMatrix> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(fan_out.max(1))
            .build()
            .map_err(|e| AnswerError::Input(e.to_string()))?;
        let nq = self.query_texts.len();
        let cells: Vec<Result<Answer>> = pool.install(|| {
            (0..self.reports.len() * nq)
                .into_par_iter()
                .map(|i| self.answer(i / nq, i % nq))
                .collect()
        });
        let values = cells.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(AnswerMatrix::new(self.reports.len(), nq, values).expect("sized by construction"))
    }
}

impl AnswerProvider for NliProvider {
    fn n_queries(&self) -> usize {
        self.query_texts.len()
    }

    fn answer(&self, report: usize, query: usize) -> Result<Answer> {
        self.check_query(query)?;
        let doc = self.reports.get(report).ok_or(AnswerError::UnknownReport {
            report,
            n_reports: self.reports.len(),
        })?;
        let prompt = assemble_nli_prompt(&self.instruction, doc, &self.query_texts[query])?;
        self.client.infer(&prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> ReportDoc {
        ReportDoc {
            report_id: "r".into(),
            text: text.into(),
        }
    }

    #[test]
    fn prompt_places_parts() {
        let p = assemble_nli_prompt("Decide entailment.", &doc("Heart size normal."), "normal heart size").unwrap();
        assert_eq!(p.premise, "Heart size normal.");
        assert_eq!(p.hypothesis, "normal heart size");
        assert_eq!(
            p.render(),
            "Decide entailment.\n\nPremise: Heart size normal.\n\nHypothesis: normal heart size"
        );
    }

    #[test]
    fn empty_prompt_parts_are_rejected() {
        assert!(matches!(
            assemble_nli_prompt("i", &doc("x"), ""),
            Err(AnswerError::EmptyPart("hypothesis"))
        ));
        assert!(assemble_nli_prompt("", &doc("x"), "f").is_err());
        assert!(assemble_nli_prompt("i", &doc(""), "f").is_err());
    }

    #[test]
    fn instruction_is_identical_across_reports() {
        let a = assemble_nli_prompt("Decide.", &doc("one"), "f").unwrap().render();
        let b = assemble_nli_prompt("Decide.", &doc("two"), "f").unwrap().render();
        let head = |s: &str| s.split("\n\n").next().unwrap().as_bytes().to_vec();
        assert_eq!(head(&a), head(&b));
    }

    #[test]
    fn output_mapping() {
        assert_eq!(map_nli_output(0).unwrap(), Answer::Negative);
        assert_eq!(map_nli_output(1).unwrap(), Answer::Unknown);
        assert_eq!(map_nli_output(2).unwrap(), Answer::Positive);
        assert!(matches!(map_nli_output(3), Err(AnswerError::OutOfAlphabet(3))));
        assert!(!map_nli_output(-1).unwrap_err().is_retryable());
    }

    #[test]
    fn matrix_provider_lookup() {
        let mut rows = vec![vec![1i64; 8]; 5];
        rows[3][7] = 0;
        let m = AnswerMatrix::from_rows(&rows).unwrap();
        let p = MatrixProvider::new(&m);
        assert_eq!(answer_query(&p, 3, 7).unwrap(), Answer::Unknown);
        assert!(matches!(answer_query(&p, 0, 8), Err(AnswerError::UnknownQuery { .. })));
        assert!(matches!(p.answer(5, 0), Err(AnswerError::UnknownReport { .. })));
    }

    #[test]
    fn degenerate_tables_and_prior() {
        let mut spec = SyntheticSpec::random(3, 1.0, 9);
        spec.cond_tables[1][1] = [0.0, 0.0, 1.0];
        let (m, l) = synth_generate(&spec, 200).unwrap();
        assert!(l.column(0).iter().all(|&y| y == 1));
        assert!((0..200).all(|r| m.get(r, 1) == Answer::Positive));
        let p = SyntheticProvider::new(spec).unwrap();
        assert!((0..50).all(|r| p.answer(r, 1).unwrap() == Answer::Positive));
    }

    #[test]
    fn deterministic_channel_column() {
        let spec = SyntheticSpec::separable(4, 0.5, 1);
        let (m, l) = synth_generate(&spec, 10_000).unwrap();
        for r in 0..10_000 {
            assert_eq!(m.get(r, 0).value() as i32, 2 * l.get(r, 0) as i32 - 1);
        }
    }

    #[test]
    fn provider_matches_generated_rows() {
        let spec = SyntheticSpec::random(6, 0.3, 4);
        let (m, l) = synth_generate(&spec, 40).unwrap();
        let p = SyntheticProvider::new(spec.clone()).unwrap();
        for r in 0..40 {
            assert_eq!(p.label(r), l.get(r, 0));
            for q in 0..6 {
                assert_eq!(p.answer(r, q).unwrap(), m.get(r, q));
            }
        }
        assert_eq!(synth_generate(&spec, 40).unwrap().0, m);
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let mut spec = SyntheticSpec::random(2, 0.5, 0);
        spec.cond_tables[0][0] = [0.5, 0.5, 0.1];
        assert!(synth_generate(&spec, 1).is_err());
        let mut spec = SyntheticSpec::random(2, 0.5, 0);
        spec.prior = 1.5;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn empirical_frequencies_within_three_sigma() {
        let spec = SyntheticSpec::random(5, 0.4, 11);
        let n = 50_000;
        let (m, l) = synth_generate(&spec, n).unwrap();
        for q in 0..5 {
            for y in 0..2u8 {
                let rows: Vec<usize> = (0..n).filter(|&r| l.get(r, 0) == y).collect();
                let ny = rows.len() as f64;
                for a in Answer::ALL {
                    let p = spec.cond_tables[q][y as usize][a.index()];
                    let count = rows.iter().filter(|&&r| m.get(r, q) == a).count() as f64;
                    let sigma = (ny * p * (1.0 - p)).sqrt();
                    assert!(
                        (count - ny * p).abs() <= 3.0 * sigma + 1e-9,
                        "q{q} y{y} a{a}: {count} vs {}",
                        ny * p
                    );
                }
            }
        }
    }
}
