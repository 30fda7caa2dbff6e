//! Variational information pursuit training.
//!
//! Two networks share the `mask ++ answers` history encoding: the querier
//! `g` scores every query given a history `S`, and the classifier `f`
//! predicts the label from `S` extended by the querier's pick and its true
//! answer. Both are trained jointly on the weighted cross-entropy of `f`;
//! gradients reach `g` through a straight-through one-hot selection.
//!
//! Training runs in two phases. Histories are first drawn uniformly at
//! random, then rolled out by the current querier so the classifier sees
//! the distribution it meets at inference.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::corpus::{self, Answer, AnswerMatrix, LabelSet};
pub use crate::history::{encode_history, History, HistoryEncoding, HistoryError};
use crate::nn::{
    adamw_step, cosine_lr, logistic, masked_argmax, straight_through_select, weighted_bce,
    LrSchedule, Mlp, MlpGrads, NnError, OptimizerState, SelectMode,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("answers have {answers} rows but labels have {labels}")]
    LengthMismatch { answers: usize, labels: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr}, temperature {temperature})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        lr: f64,
        temperature: f64,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("model metadata: {0}")]
    Meta(String),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    pub temperature_start: f64,
    pub temperature_end: f64,
    /// Share of epochs using random histories; the rest use querier rollouts.
    pub random_phase_fraction: f64,
    /// `None`: `n_neg / n_pos` on the training split, per task.
    pub pos_weight: Option<f64>,
    /// Longest history drawn in training; `None` means `|Q| - 1`.
    pub max_history: Option<usize>,
    /// Label column for a single-task model.
    pub task: usize,
    /// Train one classifier head per label column instead.
    pub multi_head: bool,
    pub task_names: Vec<String>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 1000,
            lr: 1e-4,
            lr_min: 0.0,
            weight_decay: 0.01,
            hidden: 512,
            temperature_start: 1.0,
            temperature_end: 0.2,
            random_phase_fraction: 0.7,
            pos_weight: None,
            max_history: None,
            task: 0,
            multi_head: false,
            task_names: Vec::new(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        if self.hidden == 0 {
            return fail("hidden width must be positive".into());
        }
        if !(self.lr > 0.0) || !(self.lr_min >= 0.0) || self.lr_min > self.lr {
            return fail(format!("learning rates lr={} lr_min={} are invalid", self.lr, self.lr_min));
        }
        if !(self.weight_decay >= 0.0) {
            return fail(format!("weight_decay {} is negative", self.weight_decay));
        }
        if !(self.temperature_start > 0.0 && self.temperature_end > 0.0) {
            return fail("temperatures must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.random_phase_fraction) {
            return fail(format!(
                "random_phase_fraction {} outside [0, 1]",
                self.random_phase_fraction
            ));
        }
        if let Some(w) = self.pos_weight {
            if !(w > 0.0) {
                return fail(format!("pos_weight {w} must be positive"));
            }
        }
        Ok(())
    }

    /// (random-history epochs, rollout epochs); always sums to `epochs`.
    pub fn phase_split(&self) -> (usize, usize) {
        let random = ((self.epochs as f64 * self.random_phase_fraction).round() as usize).min(self.epochs);
        (random, self.epochs - random)
    }

    pub fn temperature(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.temperature_start;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        self.temperature_start + (self.temperature_end - self.temperature_start) * t
    }
}

/// `n_neg / n_pos`; 1 when either class is absent.
pub fn pos_weight_from_labels(labels: &[u8]) -> f64 {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        1.0
    } else {
        neg as f64 / pos as f64
    }
}

/// A trained querier/classifier pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PursuitModel {
    pub querier: Mlp<f32>,
    pub classifier: Mlp<f32>,
    pub tasks: Vec<String>,
    pub query_texts: Vec<String>,
    pub pos_weights: Vec<f64>,
    pub config: TrainConfig,
    pub best_epoch: usize,
    /// Optimizer steps the learning-rate schedule spans.
    pub schedule_steps: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    format: String,
    n_queries: usize,
    tasks: Vec<String>,
    query_texts: Vec<String>,
    pos_weights: Vec<f64>,
    best_epoch: usize,
    config: TrainConfig,
    schedule: LrSchedule,
}

impl PursuitModel {
    pub fn new(querier: Mlp<f32>, classifier: Mlp<f32>, tasks: Vec<String>) -> Result<Self> {
        let n = querier.output_dim();
        if querier.input_dim() != 2 * n || classifier.input_dim() != 2 * n {
            return Err(TrainError::Meta(format!(
                "querier {:?} and classifier {:?} do not fit {n} queries",
                querier.dims(),
                classifier.dims()
            )));
        }
        if classifier.output_dim() != tasks.len() {
            return Err(TrainError::Meta(format!(
                "classifier has {} heads for {} tasks",
                classifier.output_dim(),
                tasks.len()
            )));
        }
        let heads = tasks.len();
        Ok(Self {
            querier,
            classifier,
            tasks,
            query_texts: (0..n).map(|i| format!("q{i}")).collect(),
            pos_weights: vec![1.0; heads],
            config: TrainConfig::default(),
            best_epoch: 0,
            schedule_steps: 0,
        })
    }

    pub fn n_queries(&self) -> usize {
        self.querier.output_dim()
    }

    pub fn n_heads(&self) -> usize {
        self.tasks.len()
    }

    pub fn with_query_texts(mut self, texts: Vec<String>) -> Result<Self> {
        if texts.len() != self.n_queries() {
            return Err(TrainError::Meta(format!(
                "{} query texts for {} queries",
                texts.len(),
                self.n_queries()
            )));
        }
        self.query_texts = texts;
        Ok(self)
    }

    pub fn query_scores(&self, history: &History) -> Result<Vec<f32>> {
        let enc = encode_history(history, self.n_queries())?;
        Ok(self.querier.predict(&enc.to_input())?)
    }

    /// Querier's choice among unasked queries; `None` once all are asked.
    pub fn next_query(&self, history: &History) -> Result<Option<usize>> {
        let scores = self.query_scores(history)?;
        Ok(masked_argmax(&scores, &history.asked_mask(self.n_queries())))
    }

    /// `P(Y = 1 | history)` for classifier head `head`.
    pub fn posterior(&self, history: &History, head: usize) -> Result<f64> {
        let enc = encode_history(history, self.n_queries())?;
        let logits = self.classifier.predict(&enc.to_input())?;
        Ok(logistic(logits[head]) as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = ModelMeta {
            format: "infopursuit-model".into(),
            n_queries: self.n_queries(),
            tasks: self.tasks.clone(),
            query_texts: self.query_texts.clone(),
            pos_weights: self.pos_weights.clone(),
            best_epoch: self.best_epoch,
            config: self.config.clone(),
            schedule: LrSchedule {
                eta_max: self.config.lr,
                eta_min: self.config.lr_min,
                total_steps: self.schedule_steps,
            },
        };
        let mut ck = Checkpoint::new(serde_json::to_value(meta).expect("meta serializes"));
        ck.push_mlp("querier", &self.querier);
        ck.push_mlp("classifier", &self.classifier);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: ModelMeta =
            serde_json::from_value(ck.meta.clone()).map_err(|e| TrainError::Meta(e.to_string()))?;
        let mut model = Self::new(ck.mlp("querier")?, ck.mlp("classifier")?, meta.tasks)?;
        if meta.n_queries != model.n_queries() || meta.pos_weights.len() != model.n_heads() {
            return Err(TrainError::Meta("metadata disagrees with tensor shapes".into()));
        }
        model = model.with_query_texts(meta.query_texts)?;
        model.pos_weights = meta.pos_weights;
        model.config = meta.config;
        model.best_epoch = meta.best_epoch;
        model.schedule_steps = meta.schedule.total_steps;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// `k ~ U{0..=max_len}`, then a uniform `k`-subset of queries.
pub fn sample_random_history<R: Rng>(x_answers: &[Answer], rng: &mut R, max_len: usize) -> History {
    let max_len = max_len.min(x_answers.len());
    let k = rng.gen_range(0..=max_len);
    let picks = index::sample(rng, x_answers.len(), k);
    History::from_entries(picks.into_iter().map(|q| (q, x_answers[q]))).expect("sampled without replacement")
}

/// Lets the querier pick `rollout_len` queries in turn, answering each from
/// `x_answers`. Forward selection is the hard argmax over unasked queries.
pub fn biased_history_rollout(
    querier: &Mlp<f32>,
    x_answers: &[Answer],
    rollout_len: usize,
    temperature: f32,
) -> Result<History> {
    let n = x_answers.len();
    let mut history = History::new();
    for _ in 0..rollout_len.min(n) {
        let enc = encode_history(&history, n)?;
        let logits = querier.predict(&enc.to_input())?;
        let sel = straight_through_select(&logits, &history.asked_mask(n), temperature, SelectMode::Eval)?;
        history.push(sel.index, x_answers[sel.index])?;
    }
    Ok(history)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Random,
    Biased,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Random => "random",
            Phase::Biased => "biased",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: Phase,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub temperature: f64,
}

pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,phase,train_loss,val_loss,lr,temperature\n");
    for r in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch,
            r.phase.as_str(),
            r.train_loss,
            r.val_loss,
            r.lr,
            r.temperature
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PursuitModel,
    pub log: Vec<EpochLog>,
}

/// Answers with labels for every trained head.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub answers: &'a AnswerMatrix,
    pub labels: &'a LabelSet,
}

impl<'a> Dataset<'a> {
    pub fn new(answers: &'a AnswerMatrix, labels: &'a LabelSet) -> Result<Self> {
        if answers.n_reports() != labels.n_reports() {
            return Err(TrainError::LengthMismatch {
                answers: answers.n_reports(),
                labels: labels.n_reports(),
            });
        }
        Ok(Self { answers, labels })
    }

    pub fn len(&self) -> usize {
        self.answers.n_reports()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Nets<'a> {
    querier: &'a Mlp<f32>,
    classifier: &'a Mlp<f32>,
    heads: &'a [usize],
    pos_weights: &'a [f32],
}

struct SampleGrads {
    loss: f64,
    querier: MlpGrads<f32>,
    classifier: MlpGrads<f32>,
}

impl Nets<'_> {
    /// Classifier input after revealing `pick`.
    fn extend_input(input: &[f32], n: usize, pick: usize, x: &[Answer]) -> Vec<f32> {
        let mut extended = input.to_vec();
        extended[pick] = 1.0;
        extended[n + pick] = x[pick].value() as f32;
        extended
    }

    fn loss_of(&self, logits: &[f32], data: &Dataset<'_>, row: usize) -> (f64, Vec<f32>) {
        let mut loss = 0.0;
        let grads = self
            .heads
            .iter()
            .zip(self.pos_weights)
            .zip(logits)
            .map(|((&task, &w), &z)| {
                let (l, g) = weighted_bce(z, data.labels.get(row, task), w);
                loss += l as f64;
                g
            })
            .collect();
        (loss, grads)
    }

    /// Loss and gradients of both networks for one (sample, history).
    fn sample(&self, data: &Dataset<'_>, row: usize, history: &History, temperature: f32) -> Result<SampleGrads> {
        let x = data.answers.row(row);
        let n = x.len();
        let input = encode_history(history, n)?.to_input();
        let (q_logits, q_cache) = self.querier.forward(&input)?;
        let sel = straight_through_select(&q_logits, &history.asked_mask(n), temperature, SelectMode::Train)?;

        // revealing query i adds z_i to mask[i] and z_i * x_i to answers[i]
        let extended = Self::extend_input(&input, n, sel.index, x);
        let (c_logits, c_cache) = self.classifier.forward(&extended)?;
        let (loss, d_logits) = self.loss_of(&c_logits, data, row);
        let (classifier, d_input) = self.classifier.backward(&c_cache, &d_logits)?;
        let d_select: Vec<f32> = (0..n)
            .map(|i| d_input[i] + x[i].value() as f32 * d_input[n + i])
            .collect();
        let (querier, _) = self.querier.backward(&q_cache, &sel.backward(&d_select))?;
        Ok(SampleGrads {
            loss,
            querier,
            classifier,
        })
    }

    /// Loss with the querier's hard pick; no gradients.
    fn eval_loss(&self, data: &Dataset<'_>, row: usize, history: &History) -> Result<f64> {
        let x = data.answers.row(row);
        let n = x.len();
        let input = encode_history(history, n)?.to_input();
        let q_logits = self.querier.predict(&input)?;
        let pick = masked_argmax(&q_logits, &history.asked_mask(n)).ok_or(NnError::AllMasked)?;
        let logits = self.classifier.predict(&Self::extend_input(&input, n, pick, x))?;
        Ok(self.loss_of(&logits, data, row).0)
    }
}

/// Samples per gradient-accumulation chunk; fixes the reduction order so
/// results do not depend on the thread count.
const CHUNK: usize = 8;

pub fn train_vip(train: Dataset<'_>, val: Dataset<'_>, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySplit("val"));
    }
    let n = train.answers.n_queries();
    if n < 2 {
        return Err(TrainError::Config("need at least two queries".into()));
    }
    if val.answers.n_queries() != n || val.labels.n_tasks() != train.labels.n_tasks() {
        return Err(TrainError::Config("train and val shapes differ".into()));
    }
    let heads: Vec<usize> = if config.multi_head {
        (0..train.labels.n_tasks()).collect()
    } else {
        if config.task >= train.labels.n_tasks() {
            return Err(TrainError::Config(format!(
                "task {} out of range ({} tasks)",
                config.task,
                train.labels.n_tasks()
            )));
        }
        vec![config.task]
    };
    let tasks: Vec<String> = heads
        .iter()
        .enumerate()
        .map(|(i, &t)| config.task_names.get(i).cloned().unwrap_or_else(|| format!("task{t}")))
        .collect();
    let pos_weights: Vec<f64> = heads
        .iter()
        .map(|&t| config.pos_weight.unwrap_or_else(|| pos_weight_from_labels(&train.labels.column(t))))
        .collect();
    let pos_weights_f32: Vec<f32> = pos_weights.iter().map(|&w| w as f32).collect();
    let max_history = config.max_history.unwrap_or(n - 1).min(n - 1);

    let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0, u64::MAX));
    let mut querier = Mlp::<f32>::five_layer(2 * n, config.hidden, n, &mut init_rng)?;
    let mut classifier = Mlp::<f32>::five_layer(2 * n, config.hidden, heads.len(), &mut init_rng)?;
    let mut q_state = OptimizerState::new(&querier, config.weight_decay);
    let mut c_state = OptimizerState::new(&classifier, config.weight_decay);

    let batches_per_epoch = train.len().div_ceil(config.batch_size);
    let schedule = LrSchedule::new(config.lr, config.lr_min, config.epochs * batches_per_epoch)?;
    let (random_epochs, _) = config.phase_split();

    // fixed validation histories so epochs are comparable
    let val_histories: Vec<History> = (0..val.len())
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, u64::MAX - 1, r as u64));
            sample_random_history(val.answers.row(r), &mut rng, max_history)
        })
        .collect();

    let mut best: Option<(f64, usize, Mlp<f32>, Mlp<f32>)> = None;
    let mut log = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.epochs {
        let phase = if epoch < random_epochs {
            Phase::Random
        } else {
            Phase::Biased
        };
        let temperature = config.temperature(epoch);
        let temp_f32 = temperature as f32;
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(config.seed, epoch as u64, u64::MAX)));
        let mut epoch_loss = 0.0;
        let mut epoch_lr = 0.0;

        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let lr = cosine_lr(&schedule, step)?;
            if b == 0 {
                epoch_lr = lr;
            }
            let nets = Nets {
                querier: &querier,
                classifier: &classifier,
                heads: &heads,
                pos_weights: &pos_weights_f32,
            };
            let chunk_results: Vec<Result<SampleGrads>> = batch
                .par_chunks(CHUNK)
                .enumerate()
                .map(|(c, rows)| {
                    let mut acc: Option<SampleGrads> = None;
                    for (j, &row) in rows.iter().enumerate() {
                        let pos = (b * config.batch_size + c * CHUNK + j) as u64;
                        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, epoch as u64, pos));
                        let x = train.answers.row(row);
                        let history = match phase {
                            Phase::Random => sample_random_history(x, &mut rng, max_history),
                            Phase::Biased => {
                                let len = rng.gen_range(0..=max_history);
                                biased_history_rollout(&querier, x, len, temp_f32)?
                            }
                        };
                        let g = nets.sample(&train, row, &history, temp_f32)?;
                        match &mut acc {
                            None => acc = Some(g),
                            Some(a) => {
                                a.loss += g.loss;
                                a.querier.add_assign(&g.querier);
                                a.classifier.add_assign(&g.classifier);
                            }
                        }
                    }
                    Ok(acc.expect("chunks are non-empty"))
                })
                .collect();
            let mut total: Option<SampleGrads> = None;
            for r in chunk_results {
                let g = r?;
                match &mut total {
                    None => total = Some(g),
                    Some(t) => {
                        t.loss += g.loss;
                        t.querier.add_assign(&g.querier);
                        t.classifier.add_assign(&g.classifier);
                    }
                }
            }
            let mut total = total.expect("batches are non-empty");
            let scale = 1.0 / batch.len() as f32;
            total.querier.scale(scale);
            total.classifier.scale(scale);
            let batch_loss = total.loss / batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    lr,
                    temperature,
                });
            }
            epoch_loss += total.loss;
            adamw_step(&mut querier, &total.querier, &mut q_state, lr)?;
            adamw_step(&mut classifier, &total.classifier, &mut c_state, lr)?;
            step += 1;
        }

        let nets = Nets {
            querier: &querier,
            classifier: &classifier,
            heads: &heads,
            pos_weights: &pos_weights_f32,
        };
        let val_losses: Vec<Result<f64>> = (0..val.len())
            .into_par_iter()
            .map(|r| nets.eval_loss(&val, r, &val_histories[r]))
            .collect();
        let mut val_loss = 0.0;
        for l in val_losses {
            val_loss += l?;
        }
        val_loss /= val.len() as f64;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                batch: batches_per_epoch,
                lr: epoch_lr,
                temperature,
            });
        }
        if best.as_ref().map_or(true, |(l, ..)| val_loss < *l) {
            best = Some((val_loss, epoch, querier.clone(), classifier.clone()));
        }
        log.push(EpochLog {
            epoch,
            phase,
            train_loss: epoch_loss / train.len() as f64,
            val_loss,
            lr: epoch_lr,
            temperature,
        });
    }

    let (_, best_epoch, querier, classifier) = best.expect("at least one epoch");
    let mut model = PursuitModel::new(querier, classifier, tasks)?;
    model.pos_weights = pos_weights;
    model.config = config.clone();
    model.best_epoch = best_epoch;
    model.schedule_steps = schedule.total_steps;
    Ok(TrainOutcome { model, log })
}

/// Writes the per-epoch log as CSV.
pub fn write_log(path: impl AsRef<Path>, log: &[EpochLog]) -> Result<(), corpus::CorpusError> {
    corpus::write_atomic(path.as_ref(), log_to_csv(log).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answers::{synth_generate, SyntheticSpec};

    fn answers(values: &[i64]) -> Vec<Answer> {
        values.iter().map(|&v| Answer::from_i64(v).unwrap()).collect()
    }

    #[test]
    fn zero_budget_history_is_empty() {
        let x = answers(&[1, 0, -1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert!(sample_random_history(&x, &mut rng, 0).is_empty());
        }
    }

    #[test]
    fn random_history_inclusion_rate() {
        // k ~ U{0..10} so E[k] / |Q| = 5 / 10 = 0.5 per query
        let x = answers(&[1, 0, -1, 1, 0, 0, 1, -1, -1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            let h = sample_random_history(&x, &mut rng, 10);
            for (q, a) in h.entries() {
                assert_eq!(*a, x[*q]);
                counts[*q] += 1;
            }
        }
        // inclusion indicators have variance Var(k/10) + E[k/10](1 - E[k/10]) = 0.25
        let sigma = (0.25f64 / draws as f64).sqrt();
        for c in counts {
            let rate = c as f64 / draws as f64;
            assert!((rate - 0.5).abs() <= 3.0 * sigma, "{rate}");
        }
    }

    #[test]
    fn rollout_follows_fixed_scores() {
        // last-layer bias decides the order when all weights are zero
        let mut q = Mlp::<f32>::zeros(&[8, 3, 4]).unwrap();
        q.layers_mut()[1].bias = vec![0.1, 0.9, -0.5, 0.4];
        let x = answers(&[1, -1, 0, 1]);
        let one = biased_history_rollout(&q, &x, 1, 1.0).unwrap();
        assert_eq!(one.entries(), &[(1, Answer::Negative)]);
        let full = biased_history_rollout(&q, &x, 4, 1.0).unwrap();
        assert_eq!(full.queries().collect::<Vec<_>>(), vec![1, 3, 0, 2]);
        let again = biased_history_rollout(&q, &x, 4, 0.3).unwrap();
        assert_eq!(full, again);
    }

    #[test]
    fn pos_weight_is_class_ratio() {
        let labels: Vec<u8> = (0..100).map(|i| (i < 10) as u8).collect();
        assert_eq!(pos_weight_from_labels(&labels), 9.0);
        assert_eq!(pos_weight_from_labels(&[0, 0]), 1.0);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(TrainError::Config(_))));
        let c = TrainConfig {
            epochs: 10,
            ..Default::default()
        };
        assert_eq!(c.phase_split(), (7, 3));
        assert_eq!(c.temperature(0), 1.0);
        assert!((c.temperature(9) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_split_is_rejected() {
        let spec = SyntheticSpec::random(4, 0.5, 1);
        let (m, l) = synth_generate(&spec, 10).unwrap();
        let empty_m = m.select_rows(&[]);
        let empty_l = l.select_rows(&[]);
        let train = Dataset::new(&m, &l).unwrap();
        let val = Dataset::new(&empty_m, &empty_l).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            hidden: 4,
            ..Default::default()
        };
        assert!(matches!(train_vip(train, val, &cfg), Err(TrainError::EmptySplit("val"))));
    }

    #[test]
    fn short_training_is_deterministic_and_roundtrips() {
        let spec = SyntheticSpec::random(6, 0.4, 3);
        let (m, l) = synth_generate(&spec, 120).unwrap();
        let tr: Vec<usize> = (0..100).collect();
        let va: Vec<usize> = (100..120).collect();
        let (mt, lt, mv, lv) = (m.select_rows(&tr), l.select_rows(&tr), m.select_rows(&va), l.select_rows(&va));
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 16,
            hidden: 8,
            lr: 1e-3,
            seed: 5,
            ..Default::default()
        };
        let a = train_vip(Dataset::new(&mt, &lt).unwrap(), Dataset::new(&mv, &lv).unwrap(), &cfg).unwrap();
        let b = train_vip(Dataset::new(&mt, &lt).unwrap(), Dataset::new(&mv, &lv).unwrap(), &cfg).unwrap();
        let bytes = a.model.to_checkpoint().to_bytes();
        assert_eq!(bytes, b.model.to_checkpoint().to_bytes());
        assert_eq!(a.log.len(), 4);
        assert_eq!(a.log.iter().filter(|r| r.phase == Phase::Biased).count(), 1);

        let back = PursuitModel::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, a.model);
        let csv = log_to_csv(&a.log);
        assert!(csv.starts_with("epoch,phase,train_loss,val_loss,lr,temperature\n0,random,"));
    }

    #[test]
    fn posterior_is_a_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = Mlp::<f32>::five_layer(10, 6, 5, &mut rng).unwrap();
        let c = Mlp::<f32>::five_layer(10, 6, 1, &mut rng).unwrap();
        let model = PursuitModel::new(q, c, vec!["t".into()]).unwrap();
        let x = answers(&[1, -1, 0, 0, 1]);
        for len in 0..=5 {
            let h = History::from_entries((0..len).map(|i| (i, x[i]))).unwrap();
            let p = model.posterior(&h, 0).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }
}
