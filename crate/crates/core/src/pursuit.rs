//! Sequential query selection with a trained model.
//!
//! Each step encodes the history, lets the querier pick the best unasked
//! query, fetches its answer, and recomputes the posterior. The stop check
//! runs after the new answer is incorporated, so every trace asks at least
//! one query.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::{AnswerError, AnswerProvider};
use crate::corpus::Answer;
use crate::history::History;
use crate::vip::{PursuitModel, TrainError};

pub const DEFAULT_CONFIDENCE: f64 = 0.85;
pub const DEFAULT_MAX_QUERIES: usize = 200;

#[derive(Debug, Error)]
pub enum PursuitError {
    #[error("model has {model} queries but the answer source has {source_queries}")]
    QueryCountMismatch { model: usize, source_queries: usize },
    #[error("head {head} out of range ({heads} heads)")]
    BadHead { head: usize, heads: usize },
    #[error("invalid stop rule: {0}")]
    BadRule(String),
    #[error("answer provider failed after {} step(s): {source}", partial.steps.len())]
    Provider {
        partial: Box<PursuitTrace>,
        #[source]
        source: AnswerError,
    },
    #[error(transparent)]
    Model(#[from] TrainError),
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = PursuitError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    /// Posterior confidence reached the threshold.
    Confidence,
    /// Query budget spent.
    Budget,
    /// Every query has been asked.
    Exhausted,
    /// No remaining query carries information (exact oracle only).
    Uninformative,
    /// The answer source failed mid-pursuit.
    Incomplete,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StopReason::Confidence => "confidence",
            StopReason::Budget => "budget",
            StopReason::Exhausted => "exhausted",
            StopReason::Uninformative => "uninformative",
            StopReason::Incomplete => "incomplete",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// 1-based.
    pub step: usize,
    pub query_id: usize,
    pub query_text: String,
    pub answer: Answer,
    /// `P(Y = 1)` after this answer.
    pub posterior: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PursuitTrace {
    pub task: String,
    pub report_id: String,
    pub steps: Vec<TraceStep>,
    pub stop_reason: StopReason,
    pub prediction: u8,
}

impl PursuitTrace {
    pub fn final_posterior(&self) -> Option<f64> {
        self.steps.last().map(|s| s.posterior)
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Serialize, Deserialize)]
struct StepLine {
    task: String,
    report_id: String,
    step: usize,
    query_id: usize,
    query_text: String,
    answer: Answer,
    posterior: f64,
}

#[derive(Serialize, Deserialize)]
struct FinalLine {
    report_id: String,
    stop_reason: StopReason,
    prediction: u8,
    n_steps: usize,
}

/// One JSON object per step, then a summary line for the report.
pub fn trace_to_jsonl(trace: &PursuitTrace) -> String {
    let mut out = String::new();
    for s in &trace.steps {
        let line = StepLine {
            task: trace.task.clone(),
            report_id: trace.report_id.clone(),
            step: s.step,
            query_id: s.query_id,
            query_text: s.query_text.clone(),
            answer: s.answer,
            posterior: s.posterior,
        };
        out.push_str(&serde_json::to_string(&line).expect("step serializes"));
        out.push('\n');
    }
    let fin = FinalLine {
        report_id: trace.report_id.clone(),
        stop_reason: trace.stop_reason,
        prediction: trace.prediction,
        n_steps: trace.steps.len(),
    };
    out.push_str(&serde_json::to_string(&fin).expect("summary serializes"));
    out.push('\n');
    out
}

/// Parses concatenated [`trace_to_jsonl`] output. A trace without steps
/// comes back with an empty task name.
pub fn traces_from_jsonl(text: &str) -> Result<Vec<PursuitTrace>> {
    let mut traces = Vec::new();
    let mut pending: Vec<StepLine> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let err = |message: String| PursuitError::Parse { line: i + 1, message };
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if value.get("stop_reason").is_some() {
            let fin: FinalLine = serde_json::from_value(value).map_err(|e| err(e.to_string()))?;
            if fin.n_steps != pending.len() || pending.iter().any(|s| s.report_id != fin.report_id) {
                return Err(err(format!(
                    "summary for {} claims {} steps, found {}",
                    fin.report_id,
                    fin.n_steps,
                    pending.len()
                )));
            }
            let task = pending.first().map(|s| s.task.clone()).unwrap_or_default();
            traces.push(PursuitTrace {
                task,
                report_id: fin.report_id,
                steps: pending
                    .drain(..)
                    .map(|s| TraceStep {
                        step: s.step,
                        query_id: s.query_id,
                        query_text: s.query_text,
                        answer: s.answer,
                        posterior: s.posterior,
                    })
                    .collect(),
                stop_reason: fin.stop_reason,
                prediction: fin.prediction,
            });
        } else {
            pending.push(serde_json::from_value(value).map_err(|e| err(e.to_string()))?);
        }
    }
    if !pending.is_empty() {
        return Err(PursuitError::Parse {
            line: text.lines().count(),
            message: "trailing steps without a summary line".into(),
        });
    }
    Ok(traces)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    confidence_threshold: f64,
    max_queries: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            confidence_threshold: DEFAULT_CONFIDENCE,
            max_queries: DEFAULT_MAX_QUERIES,
        }
    }
}

impl StopRule {
    pub fn new(confidence_threshold: f64, max_queries: usize) -> Result<Self> {
        if !(confidence_threshold > 0.5 && confidence_threshold <= 1.0) {
            return Err(PursuitError::BadRule(format!(
                "confidence threshold {confidence_threshold} outside (0.5, 1]"
            )));
        }
        if max_queries == 0 {
            return Err(PursuitError::BadRule("max_queries must be at least 1".into()));
        }
        Ok(Self {
            confidence_threshold,
            max_queries,
        })
    }

    /// Rule that also admits a threshold of exactly 0.5, which stops after
    /// the first answer; used for threshold sweeps.
    fn sweep(confidence_threshold: f64, max_queries: usize) -> Result<Self> {
        if confidence_threshold == 0.5 {
            return Ok(Self {
                confidence_threshold,
                max_queries: max_queries.max(1),
            });
        }
        Self::new(confidence_threshold, max_queries.max(1))
    }

    pub fn confidence_threshold(&self) -> f64 {
        self.confidence_threshold
    }

    pub fn max_queries(&self) -> usize {
        self.max_queries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop(StopReason),
}

pub fn confidence(posterior: f64) -> f64 {
    posterior.max(1.0 - posterior)
}

/// Confidence first, then budget, then exhaustion.
pub fn stop_check(posterior: f64, k: usize, rule: &StopRule, unasked_remaining: usize) -> StopDecision {
    if confidence(posterior) >= rule.confidence_threshold {
        StopDecision::Stop(StopReason::Confidence)
    } else if k >= rule.max_queries {
        StopDecision::Stop(StopReason::Budget)
    } else if unasked_remaining == 0 {
        StopDecision::Stop(StopReason::Exhausted)
    } else {
        StopDecision::Continue
    }
}

fn check_compat<P: AnswerProvider + ?Sized>(model: &PursuitModel, provider: &P, head: usize) -> Result<()> {
    if provider.n_queries() != model.n_queries() {
        return Err(PursuitError::QueryCountMismatch {
            model: model.n_queries(),
            source_queries: provider.n_queries(),
        });
    }
    if head >= model.n_heads() {
        return Err(PursuitError::BadHead {
            head,
            heads: model.n_heads(),
        });
    }
    Ok(())
}

/// Pursuit on classifier head 0.
pub fn pursue<P: AnswerProvider + ?Sized>(
    model: &PursuitModel,
    provider: &P,
    report: usize,
    rule: &StopRule,
) -> Result<PursuitTrace> {
    pursue_head(model, provider, report, rule, 0)
}

pub fn pursue_head<P: AnswerProvider + ?Sized>(
    model: &PursuitModel,
    provider: &P,
    report: usize,
    rule: &StopRule,
    head: usize,
) -> Result<PursuitTrace> {
    check_compat(model, provider, head)?;
    let n = model.n_queries();
    let mut trace = PursuitTrace {
        task: model.tasks[head].clone(),
        report_id: report.to_string(),
        steps: Vec::new(),
        stop_reason: StopReason::Exhausted,
        prediction: 0,
    };
    let mut history = History::new();
    loop {
        let Some(query) = model.next_query(&history)? else {
            break;
        };
        let answer = match provider.answer(report, query) {
            Ok(a) => a,
            Err(source) => {
                trace.stop_reason = StopReason::Incomplete;
                trace.prediction = trace.final_posterior().map_or(0, |p| (p >= 0.5) as u8);
                return Err(PursuitError::Provider {
                    partial: Box::new(trace),
                    source,
                });
            }
        };
        history.push(query, answer).expect("querier never repeats");
        let posterior = model.posterior(&history, head)?;
        trace.steps.push(TraceStep {
            step: history.len(),
            query_id: query,
            query_text: model.query_texts[query].clone(),
            answer,
            posterior,
        });
        if let StopDecision::Stop(reason) = stop_check(posterior, history.len(), rule, n - history.len()) {
            trace.stop_reason = reason;
            break;
        }
    }
    trace.prediction = trace.final_posterior().map_or(0, |p| (p >= 0.5) as u8);
    Ok(trace)
}

/// Posteriors after 0, 1, ..., `budget` queries (capped at `|Q|`), ignoring
/// confidence. Entry 0 is the empty-history posterior.
pub fn posterior_path<P: AnswerProvider + ?Sized>(
    model: &PursuitModel,
    provider: &P,
    report: usize,
    budget: usize,
    head: usize,
) -> Result<Vec<f64>> {
    check_compat(model, provider, head)?;
    let mut history = History::new();
    let mut path = vec![model.posterior(&history, head)?];
    for _ in 0..budget.min(model.n_queries()) {
        let query = model.next_query(&history)?.expect("budget capped at |Q|");
        let answer = provider.answer(report, query).map_err(|source| PursuitError::Provider {
            partial: Box::new(PursuitTrace {
                task: model.tasks[head].clone(),
                report_id: report.to_string(),
                steps: Vec::new(),
                stop_reason: StopReason::Incomplete,
                prediction: 0,
            }),
            source,
        })?;
        history.push(query, answer).expect("querier never repeats");
        path.push(model.posterior(&history, head)?);
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueriesNeeded {
    pub threshold: f64,
    pub mean: f64,
    pub variance: f64,
    /// Steps to stop for every report, in input order.
    pub steps: Vec<usize>,
}

/// Mean and (population) variance of steps-to-stop per confidence
/// threshold, with the budget capped at `|Q|` only.
pub fn queries_needed_curve<P: AnswerProvider + ?Sized>(
    model: &PursuitModel,
    provider: &P,
    reports: &[usize],
    thresholds: &[f64],
    head: usize,
) -> Result<Vec<QueriesNeeded>> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(PursuitError::BadRule("thresholds must be ascending".into()));
    }
    thresholds
        .iter()
        .map(|&t| {
            let rule = StopRule::sweep(t, model.n_queries())?;
            let steps = reports
                .iter()
                .map(|&r| Ok(pursue_head(model, provider, r, &rule, head)?.n_steps()))
                .collect::<Result<Vec<_>>>()?;
            let n = steps.len().max(1) as f64;
            let mean = steps.iter().sum::<usize>() as f64 / n;
            let variance = steps.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / n;
            Ok(QueriesNeeded {
                threshold: t,
                mean,
                variance,
                steps,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answers::RowProvider;
    use crate::nn::Mlp;

    /// Querier prefers lower ids; classifier emits a constant logit.
    fn pinned_model(n: usize, logit: f32) -> PursuitModel {
        let mut q = Mlp::<f32>::zeros(&[2 * n, 2, n]).unwrap();
        q.layers_mut()[1].bias = (0..n).map(|i| -(i as f32)).collect();
        let mut c = Mlp::<f32>::zeros(&[2 * n, 2, 1]).unwrap();
        c.layers_mut()[1].bias = vec![logit];
        PursuitModel::new(q, c, vec!["t".into()]).unwrap()
    }

    fn row(n: usize) -> Vec<Answer> {
        (0..n).map(|i| Answer::ALL[i % 3]).collect()
    }

    #[test]
    fn stop_check_examples() {
        let rule = StopRule::default();
        assert_eq!(stop_check(0.9, 3, &rule, 5), StopDecision::Stop(StopReason::Confidence));
        assert_eq!(stop_check(0.1, 3, &rule, 5), StopDecision::Stop(StopReason::Confidence));
        assert_eq!(stop_check(0.6, 200, &rule, 5), StopDecision::Stop(StopReason::Budget));
        assert_eq!(stop_check(0.5, 3, &rule, 10), StopDecision::Continue);
        assert_eq!(stop_check(0.5, 3, &rule, 0), StopDecision::Stop(StopReason::Exhausted));
    }

    #[test]
    fn stop_rule_validation() {
        assert!(StopRule::new(0.5, 10).is_err());
        assert!(StopRule::new(1.01, 10).is_err());
        assert!(StopRule::new(0.9, 0).is_err());
        assert!(StopRule::new(1.0, 1).is_ok());
    }

    #[test]
    fn confident_classifier_stops_after_one_query() {
        // sigmoid(4.6) ≈ 0.99
        let model = pinned_model(10, 4.6);
        let x = row(10);
        let t = pursue(&model, &RowProvider::new(&x), 0, &StopRule::default()).unwrap();
        assert_eq!(t.n_steps(), 1);
        assert_eq!(t.stop_reason, StopReason::Confidence);
        assert_eq!(t.prediction, 1);
        assert_eq!(t.steps[0].query_id, 0);
    }

    #[test]
    fn undecided_classifier_exhausts_queries() {
        let model = pinned_model(10, 0.0);
        let x = row(10);
        let t = pursue(&model, &RowProvider::new(&x), 0, &StopRule::default()).unwrap();
        assert_eq!(t.n_steps(), 10);
        assert_eq!(t.stop_reason, StopReason::Exhausted);
        let ids: Vec<usize> = t.steps.iter().map(|s| s.query_id).collect();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
        assert_eq!(t.steps[4].answer, x[4]);
    }

    #[test]
    fn budget_prefix_consistency() {
        let model = pinned_model(12, 0.0);
        let x = row(12);
        let p = RowProvider::new(&x);
        let short = pursue(&model, &p, 0, &StopRule::new(0.9, 4).unwrap()).unwrap();
        let long = pursue(&model, &p, 0, &StopRule::new(0.9, 9).unwrap()).unwrap();
        assert_eq!(short.stop_reason, StopReason::Budget);
        assert_eq!(short.steps[..], long.steps[..4]);
    }

    struct Failing;

    impl AnswerProvider for Failing {
        fn n_queries(&self) -> usize {
            4
        }

        fn answer(&self, _: usize, query: usize) -> crate::answers::Result<Answer> {
            if query < 2 {
                Ok(Answer::Unknown)
            } else {
                Err(AnswerError::Remote {
                    attempts: 3,
                    message: "down".into(),
                    retryable: true,
                })
            }
        }
    }

    #[test]
    fn provider_failure_yields_partial_trace() {
        let model = pinned_model(4, 0.0);
        match pursue(&model, &Failing, 7, &StopRule::default()) {
            Err(PursuitError::Provider { partial, source }) => {
                assert_eq!(partial.n_steps(), 2);
                assert_eq!(partial.stop_reason, StopReason::Incomplete);
                assert_eq!(partial.report_id, "7");
                assert!(source.is_retryable());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_provider_is_rejected() {
        let model = pinned_model(4, 0.0);
        let x = row(5);
        assert!(matches!(
            pursue(&model, &RowProvider::new(&x), 0, &StopRule::default()),
            Err(PursuitError::QueryCountMismatch { .. })
        ));
    }

    #[test]
    fn half_threshold_needs_one_query() {
        let model = pinned_model(6, 0.3);
        let x = row(6);
        let curve = queries_needed_curve(&model, &RowProvider::new(&x), &[0, 1, 2], &[0.5, 0.9, 1.0], 0).unwrap();
        assert_eq!(curve[0].steps, vec![1, 1, 1]);
        assert_eq!(curve[0].mean, 1.0);
        assert_eq!(curve[0].variance, 0.0);
        // a constant posterior of sigmoid(0.3) never reaches 0.9
        assert_eq!(curve[1].steps, vec![6, 6, 6]);
        assert_eq!(curve[2].mean, 6.0);
    }

    #[test]
    fn jsonl_schema_and_roundtrip() {
        let trace = PursuitTrace {
            task: "LO".into(),
            report_id: "r1".into(),
            steps: vec![
                TraceStep {
                    step: 1,
                    query_id: 4,
                    query_text: "patchy opacity".into(),
                    answer: Answer::Unknown,
                    posterior: 0.625,
                },
                TraceStep {
                    step: 2,
                    query_id: 0,
                    query_text: "effusion".into(),
                    answer: Answer::Negative,
                    posterior: 0.1 + 0.2,
                },
            ],
            stop_reason: StopReason::Budget,
            prediction: 0,
        };
        let text = trace_to_jsonl(&trace);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            r#"{"task":"LO","report_id":"r1","step":1,"query_id":4,"query_text":"patchy opacity","answer":0,"posterior":0.625}"#
        );
        assert_eq!(lines[2], r#"{"report_id":"r1","stop_reason":"budget","prediction":0,"n_steps":2}"#);
        let mut two = text.clone();
        two.push_str(&text);
        let back = traces_from_jsonl(&two).unwrap();
        assert_eq!(back, vec![trace.clone(), trace]);
    }

    #[test]
    fn malformed_trace_file() {
        let bad = r#"{"report_id":"r","stop_reason":"budget","prediction":0,"n_steps":3}"#;
        assert!(traces_from_jsonl(bad).is_err());
        let dangling = r#"{"task":"t","report_id":"r","step":1,"query_id":0,"query_text":"q","answer":1,"posterior":0.5}"#;
        assert!(traces_from_jsonl(dangling).is_err());
    }
}
