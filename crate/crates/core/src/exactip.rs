//! Exact information pursuit on an empirical joint.
//!
//! The joint of (answers, label) is the sample table itself; conditioning on
//! a history keeps the rows whose answers agree with it exactly. This is
//! exponential in history length in the worst case and only meant for small
//! query sets, where it serves as the reference the learned querier is
//! checked against.

use rayon::prelude::*;
use thiserror::Error;

use crate::answers::{Categorical, SyntheticSpec};
use crate::corpus::{Answer, AnswerMatrix, LabelSet};
use crate::history::History;
use crate::pursuit::{PursuitTrace, StopReason, TraceStep};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_EPSILON_STOP: f64 = 1e-3;
/// MI values closer than this are ties and go to the lowest query id.
pub const MI_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ExactIpError {
    #[error("unknown query id {query} (have {n_queries})")]
    UnknownQuery { query: usize, n_queries: usize },
    #[error("every query has already been asked")]
    AllAsked,
    #[error("{answers} answer rows but {labels} labels")]
    LengthMismatch { answers: usize, labels: usize },
    #[error("task {task} out of range ({n_tasks} tasks)")]
    BadTask { task: usize, n_tasks: usize },
    #[error("observed row has {found} answers, expected {expected}")]
    RowLength { expected: usize, found: usize },
    #[error("smoothing alpha {0} must be non-negative")]
    BadAlpha(f64),
}

pub type Result<T, E = ExactIpError> = std::result::Result<T, E>;

/// Samples of (answers, label) with additive smoothing for every
/// (answer, label) contingency cell.
#[derive(Debug, Clone)]
pub struct TabularJoint<'a> {
    answers: &'a AnswerMatrix,
    labels: Vec<u8>,
    alpha: f64,
}

impl<'a> TabularJoint<'a> {
    pub fn new(answers: &'a AnswerMatrix, labels: &LabelSet, task: usize, alpha: f64) -> Result<Self> {
        if labels.n_reports() != answers.n_reports() {
            return Err(ExactIpError::LengthMismatch {
                answers: answers.n_reports(),
                labels: labels.n_reports(),
            });
        }
        if task >= labels.n_tasks() {
            return Err(ExactIpError::BadTask {
                task,
                n_tasks: labels.n_tasks(),
            });
        }
        if !(alpha >= 0.0) {
            return Err(ExactIpError::BadAlpha(alpha));
        }
        Ok(Self {
            answers,
            labels: labels.column(task),
            alpha,
        })
    }

    pub fn n_queries(&self) -> usize {
        self.answers.n_queries()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Row indices whose answers match every history entry.
    pub fn consistent_rows(&self, history: &History) -> Vec<usize> {
        (0..self.answers.n_reports())
            .filter(|&r| history.entries().iter().all(|&(q, a)| self.answers.get(r, q) == a))
            .collect()
    }

    fn narrow(&self, rows: &[usize], query: usize, answer: Answer) -> Vec<usize> {
        rows.iter()
            .copied()
            .filter(|&r| self.answers.get(r, query) == answer)
            .collect()
    }

    /// Smoothed counts `table[answer.index()][label]` over `rows`.
    pub fn contingency(&self, rows: &[usize], query: usize) -> [[f64; 2]; 3] {
        let mut table = [[self.alpha; 2]; 3];
        for &r in rows {
            table[self.answers.get(r, query).index()][self.labels[r] as usize] += 1.0;
        }
        table
    }

    /// Smoothed `P(Y = 1)` over `rows`; 0.5 when nothing is left to count.
    pub fn posterior_over(&self, rows: &[usize]) -> f64 {
        let n1 = rows.iter().filter(|&&r| self.labels[r] == 1).count() as f64;
        let n = rows.len() as f64;
        let denom = n + 2.0 * self.alpha;
        if denom == 0.0 {
            0.5
        } else {
            (n1 + self.alpha) / denom
        }
    }

    pub fn posterior(&self, history: &History) -> f64 {
        self.posterior_over(&self.consistent_rows(history))
    }

    fn mi_over(&self, rows: &[usize], query: usize) -> f64 {
        mutual_information(&self.contingency(rows, query))
    }

    pub fn conditional_mutual_information(&self, query: usize, history: &History) -> Result<f64> {
        if query >= self.n_queries() {
            return Err(ExactIpError::UnknownQuery {
                query,
                n_queries: self.n_queries(),
            });
        }
        // the column is constant on the conditioned rows; smoothing would
        // otherwise leak a spurious dependence into the empty cells
        if history.contains(query) {
            return Ok(0.0);
        }
        Ok(self.mi_over(&self.consistent_rows(history), query))
    }

    fn select_over(&self, rows: &[usize], asked: &[bool]) -> Result<(usize, f64)> {
        let scores: Vec<Option<f64>> = (0..self.n_queries())
            .into_par_iter()
            .map(|q| (!asked[q]).then(|| self.mi_over(rows, q)))
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (q, s) in scores.into_iter().enumerate() {
            if let Some(mi) = s {
                if best.map_or(true, |(_, b)| mi > b + MI_TIE_TOLERANCE) {
                    best = Some((q, mi));
                }
            }
        }
        best.ok_or(ExactIpError::AllAsked)
    }

    /// Unasked query of maximal conditional MI (lowest id on ties, see
    /// [`MI_TIE_TOLERANCE`]).
    pub fn select_next(&self, history: &History, asked: &[bool]) -> Result<(usize, f64)> {
        self.select_over(&self.consistent_rows(history), asked)
    }

    pub fn run(&self, x_obs: &[Answer], epsilon_stop: f64, max_steps: usize) -> Result<OracleRun> {
        if x_obs.len() != self.n_queries() {
            return Err(ExactIpError::RowLength {
                expected: self.n_queries(),
                found: x_obs.len(),
            });
        }
        let mut rows: Vec<usize> = (0..self.answers.n_reports()).collect();
        let mut asked = vec![false; self.n_queries()];
        let initial_posterior = self.posterior_over(&rows);
        let mut steps = Vec::new();
        let mut mi_per_step = Vec::new();
        let stop_reason = loop {
            if steps.len() >= max_steps {
                break StopReason::Budget;
            }
            if asked.iter().all(|&a| a) {
                break StopReason::Exhausted;
            }
            let (q, mi) = self.select_over(&rows, &asked)?;
            if mi <= epsilon_stop {
                break StopReason::Uninformative;
            }
            let answer = x_obs[q];
            asked[q] = true;
            rows = self.narrow(&rows, q, answer);
            let posterior = self.posterior_over(&rows);
            steps.push(TraceStep {
                step: steps.len() + 1,
                query_id: q,
                query_text: format!("q{q}"),
                answer,
                posterior,
            });
            mi_per_step.push(mi);
        };
        let final_posterior = steps.last().map_or(initial_posterior, |s| s.posterior);
        Ok(OracleRun {
            trace: PursuitTrace {
                task: String::new(),
                report_id: String::new(),
                steps,
                stop_reason,
                prediction: (final_posterior >= 0.5) as u8,
            },
            initial_posterior,
            mi_per_step,
        })
    }
}

/// Plug-in mutual information (nats) of an (answer x label) count table.
pub fn mutual_information(table: &[[f64; 2]; 3]) -> f64 {
    let total: f64 = table.iter().flatten().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let pa: Vec<f64> = table.iter().map(|r| (r[0] + r[1]) / total).collect();
    let py = [
        table.iter().map(|r| r[0]).sum::<f64>() / total,
        table.iter().map(|r| r[1]).sum::<f64>() / total,
    ];
    let mut mi = 0.0;
    for (a, row) in table.iter().enumerate() {
        for (y, &c) in row.iter().enumerate() {
            if c > 0.0 {
                let p = c / total;
                mi += p * (p / (pa[a] * py[y])).ln();
            }
        }
    }
    mi
}

/// Result of [`ip_run`]: the trace plus quantities that do not fit the
/// trace schema.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub trace: PursuitTrace,
    pub initial_posterior: f64,
    /// MI of the chosen query at each step.
    pub mi_per_step: Vec<f64>,
}

pub fn conditional_mutual_information(
    joint: &TabularJoint<'_>,
    query: usize,
    history: &History,
) -> Result<f64> {
    joint.conditional_mutual_information(query, history)
}

pub fn ip_select_next(
    joint: &TabularJoint<'_>,
    history: &History,
    asked: &[bool],
) -> Result<(usize, f64)> {
    joint.select_next(history, asked)
}

pub fn ip_run(
    joint: &TabularJoint<'_>,
    x_obs: &[Answer],
    epsilon_stop: f64,
    max_steps: usize,
) -> Result<OracleRun> {
    joint.run(x_obs, epsilon_stop, max_steps)
}

/// Closed-form class-conditional model, typically the generator of a
/// synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayesModel {
    pub prior: f64,
    pub cond_tables: Vec<[Categorical; 2]>,
}

impl From<&SyntheticSpec> for NaiveBayesModel {
    fn from(spec: &SyntheticSpec) -> Self {
        Self {
            prior: spec.prior,
            cond_tables: spec.cond_tables.clone(),
        }
    }
}

impl NaiveBayesModel {
    pub fn n_queries(&self) -> usize {
        self.cond_tables.len()
    }

    /// Posterior given a full answer row.
    pub fn posterior_row(&self, row: &[Answer]) -> f64 {
        let history = History::from_entries(row.iter().copied().enumerate()).expect("distinct ids");
        bayes_posterior_naive(self, &history)
    }
}

/// Exact `P(Y = 1 | history)` under conditional independence.
pub fn bayes_posterior_naive(model: &NaiveBayesModel, history: &History) -> f64 {
    let mut log1 = model.prior.ln();
    let mut log0 = (1.0 - model.prior).ln();
    for &(q, a) in history.entries() {
        log1 += model.cond_tables[q][1][a.index()].ln();
        log0 += model.cond_tables[q][0][a.index()].ln();
    }
    let m = log1.max(log0);
    if m == f64::NEG_INFINITY {
        return 0.5;
    }
    let e1 = (log1 - m).exp();
    let e0 = (log0 - m).exp();
    e1 / (e1 + e0)
}
