//! Interpretable binary classification by sequential information pursuit.
//!
//! A report is described by ternary answers to a bank of yes/no queries. A
//! querier network picks the next query given the answers seen so far, and a
//! classifier network turns the partial history into a posterior. Pursuit
//! stops once the posterior is confident enough, leaving a readable chain of
//! query/answer pairs as the explanation.
//!
//! Modules, bottom-up:
//!
//! - [`corpus`]: answer matrices, labels, embeddings, splits and their file formats
//! - [`querybank`]: k-means query selection with cosine deduplication
//! - [`answers`]: answer providers (matrix, synthetic, remote entailment service)
//! - [`history`]: query/answer histories and their network encoding
//! - [`exactip`]: exact mutual-information pursuit on tabular data
//! - [`nn`]: MLP, AdamW, losses and straight-through selection
//! - [`checkpoint`]: the `IPCK1` container
//! - [`config`]: layered run configuration for the command-line tool
//! - [`vip`]: the joint querier/classifier trainer
//! - [`pursuit`]: inference-time pursuit, stop rules and traces
//! - [`metrics`]: average precision, F1 and evaluation

pub mod answers;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod exactip;
pub mod history;
pub mod metrics;
pub mod nn;
pub mod pursuit;
pub mod querybank;
pub mod vip;

pub use answers::{AnswerError, AnswerProvider, MatrixProvider, RowProvider, SyntheticProvider, SyntheticSpec};
pub use corpus::{Answer, AnswerMatrix, EmbeddingTable, LabelSet};
pub use history::History;
pub use metrics::{average_precision, evaluate_model, f1_score, EvalReport};
pub use pursuit::{pursue, PursuitTrace, StopReason, StopRule};
pub use querybank::{build_query_bank, BankConfig, QueryBank};
pub use vip::{train_vip, Dataset, PursuitModel, TrainConfig};

