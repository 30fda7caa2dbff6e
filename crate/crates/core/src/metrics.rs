//! Average precision, F1, and split-level model evaluation.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::answers::AnswerProvider;
use crate::corpus::{self, LabelSet};
use crate::pursuit::{posterior_path, pursue_head, PursuitError, StopRule};
use crate::vip::PursuitModel;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("score and label lengths differ ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("average precision needs at least one positive label")]
    NoPositives,
    #[error("evaluation split is empty")]
    EmptySplit,
    #[error("label {0} is not binary")]
    NonBinary(u8),
    #[error(transparent)]
    Pursuit(#[from] PursuitError),
    #[error(transparent)]
    Io(#[from] corpus::CorpusError),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// Non-interpolated step sum `Σ (Rₙ − Rₙ₋₁)·Pₙ`.
///
/// Scores are visited in descending order with a stable sort. Equal scores
/// form a single threshold, so precision and recall only change once the
/// whole tie group is consumed. Constant scores therefore give the positive
/// prevalence.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(MetricError::NonBinary(bad));
    }
    let total_pos = labels.iter().filter(|&&l| l == 1).count();
    if total_pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut ap = 0.0;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let group_tp_before = tp;
        while i < order.len() && scores[order[i]].total_cmp(&s).is_eq() {
            tp += labels[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        if tp > group_tp_before {
            let recall_gain = (tp - group_tp_before) as f64 / total_pos as f64;
            ap += recall_gain * tp as f64 / seen as f64;
        }
    }
    Ok(ap)
}

/// `(precision, recall, f1)`; each is 0 when its denominator is.
pub fn f1_score(predictions: &[u8], labels: &[u8]) -> Result<(f64, f64, f64)> {
    if predictions.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: predictions.len(),
            labels: labels.len(),
        });
    }
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p != 0, l != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fne);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((precision, recall, f1))
}

pub fn accuracy(predictions: &[u8], labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub task_name: String,
    /// AP of the final posterior under the stop rule.
    pub ap: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub mean_queries: f64,
    /// `(budget, ap)` with the posterior after exactly `budget` queries.
    pub ap_curve: Vec<(usize, f64)>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("budget,ap\n");
        for (b, ap) in &self.ap_curve {
            out.push_str(&format!("{b},{ap}\n"));
        }
        out
    }

    pub fn write(&self, json_path: impl AsRef<Path>, curve_path: Option<&Path>) -> Result<()> {
        corpus::write_atomic(json_path.as_ref(), self.to_json().as_bytes())?;
        if let Some(p) = curve_path {
            corpus::write_atomic(p, self.curve_csv().as_bytes())?;
        }
        Ok(())
    }
}

/// Evaluates `model` on `reports` (indices understood by `provider`) with
/// labels from column `head` of `labels`, indexed in the same order as
/// `reports`.
pub fn evaluate_model<P: AnswerProvider + Sync + ?Sized>(
    model: &PursuitModel,
    provider: &P,
    reports: &[usize],
    labels: &LabelSet,
    budgets: &[usize],
    rule: &StopRule,
    head: usize,
) -> Result<EvalReport> {
    use rayon::prelude::*;

    if reports.is_empty() {
        return Err(MetricError::EmptySplit);
    }
    if labels.n_reports() != reports.len() {
        return Err(MetricError::LengthMismatch {
            scores: reports.len(),
            labels: labels.n_reports(),
        });
    }
    let y = labels.column(head.min(labels.n_tasks().saturating_sub(1)));
    let max_budget = budgets.iter().copied().max().unwrap_or(0);

    let per_report: Vec<(Vec<f64>, f64, u8, usize)> = reports
        .par_iter()
        .map(|&r| {
            let path = posterior_path(model, provider, r, max_budget, head)?;
            let trace = pursue_head(model, provider, r, rule, head)?;
            let p = trace.final_posterior().unwrap_or(path[0]);
            Ok((path, p, trace.prediction, trace.n_steps()))
        })
        .collect::<Result<_>>()?;

    let mut ap_curve = Vec::with_capacity(budgets.len());
    for &b in budgets {
        let scores: Vec<f64> = per_report
            .iter()
            .map(|(path, ..)| path[b.min(path.len() - 1)])
            .collect();
        ap_curve.push((b, average_precision(&scores, &y)?));
    }
    let scores: Vec<f64> = per_report.iter().map(|r| r.1).collect();
    let preds: Vec<u8> = per_report.iter().map(|r| r.2).collect();
    let ap = average_precision(&scores, &y)?;
    let (precision, recall, f1) = f1_score(&preds, &y)?;
    let n_pos = y.iter().filter(|&&l| l == 1).count();
    Ok(EvalReport {
        task_name: model.tasks[head].clone(),
        ap,
        f1,
        precision,
        recall,
        accuracy: accuracy(&preds, &y),
        n_pos,
        n_neg: y.len() - n_pos,
        mean_queries: per_report.iter().map(|r| r.3 as f64).sum::<f64>() / reports.len() as f64,
        ap_curve,
    })
}
