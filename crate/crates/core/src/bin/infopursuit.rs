use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use infopursuit::answers::{self, AnswerError, AnswerProvider, MatrixProvider, NliClient, NliProvider, ReportDoc};
use infopursuit::config::{module_seed, RunConfig, SynthKind};
use infopursuit::corpus::{self, Answer, AnswerMatrix, LabelSet, MatrixFormat, Split};
use infopursuit::exactip::TabularJoint;
use infopursuit::metrics::evaluate_model;
use infopursuit::pursuit::{pursue_head, trace_to_jsonl, PursuitError, PursuitTrace};
use infopursuit::querybank::{build_query_bank, QueryBank};
use infopursuit::vip::{train_vip, write_log, Dataset, PursuitModel};
use infopursuit::SyntheticSpec;

#[derive(Parser)]
#[command(name = "infopursuit", version, about = "Interpretable classification by sequential query pursuit")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags mirroring the run configuration keys.
#[derive(Args, Default)]
struct Overrides {
    /// `key = value` config file, applied before environment and flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    dedup_threshold: Option<f64>,
    #[arg(long, global = true)]
    kmeans_iters: Option<usize>,
    #[arg(long, global = true)]
    nli_url: Option<String>,
    #[arg(long, global = true)]
    nli_timeout_ms: Option<u64>,
    #[arg(long, global = true)]
    nli_attempts: Option<u32>,
    #[arg(long, global = true)]
    fan_out: Option<usize>,
    #[arg(long, global = true)]
    instruction: Option<String>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    queries: Option<usize>,
    #[arg(long, global = true)]
    prior: Option<f64>,
    /// informative | separable | random | uninformative
    #[arg(long, global = true)]
    synth_kind: Option<String>,
    /// Train:val:test weights, e.g. 7:1:2.
    #[arg(long, global = true)]
    ratio: Option<String>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    lr_min: Option<f64>,
    #[arg(long, global = true)]
    weight_decay: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    hidden: Option<usize>,
    #[arg(long, global = true)]
    temperature_start: Option<f64>,
    #[arg(long, global = true)]
    temperature_end: Option<f64>,
    #[arg(long, global = true)]
    random_phase_fraction: Option<f64>,
    /// Number or `auto`.
    #[arg(long, global = true)]
    pos_weight: Option<String>,
    /// Number or `auto`.
    #[arg(long, global = true)]
    max_history: Option<String>,
    #[arg(long, global = true)]
    task: Option<usize>,
    #[arg(long, global = true)]
    multi_head: Option<bool>,
    #[arg(long, global = true)]
    confidence: Option<f64>,
    #[arg(long, global = true)]
    max_queries: Option<usize>,
    /// Comma-separated query budgets for the AP curve.
    #[arg(long, global = true)]
    budgets: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster fact embeddings into a deduplicated query bank.
    BuildQueries {
        /// IPEM1 embedding table.
        #[arg(long)]
        embeddings: PathBuf,
        /// Fact texts, one per line, aligned with the embeddings.
        #[arg(long)]
        facts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer every query for every report through the entailment service.
    Answer {
        /// JSON lines of {"report_id", "text"}.
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        /// Answer matrix; `.csv` selects the text format.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a Naive Bayes synthetic dataset.
    Synth {
        /// Output directory for answers.ipam, labels.iplb and spec.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the querier and classifier.
    Train {
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        bank: Option<PathBuf>,
        /// IPCK1 checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch training log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Compute AP, F1 and the AP-vs-budget curve on a split.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Report JSON.
        #[arg(long)]
        out: PathBuf,
        /// AP curve CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Run pursuit and write the explanation trace.
    Pursue {
        #[arg(long)]
        model: PathBuf,
        /// Answer matrix; without it answers are read from standard input.
        #[arg(long)]
        answers: Option<PathBuf>,
        /// Rows to explain; defaults to every row of `--split`.
        #[arg(long = "report-row")]
        report_rows: Vec<usize>,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Run exact mutual-information pursuit against the empirical joint.
    Oracle {
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long = "report-row")]
        report_rows: Vec<usize>,
        /// Split the joint is estimated from.
        #[arg(long, default_value = "train")]
        fit_split: String,
        #[arg(long)]
        trace: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BuildQueries { .. } => "build-queries",
            Command::Answer { .. } => "answer",
            Command::Synth { .. } => "synth",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Pursue { .. } => "pursue",
            Command::Oracle { .. } => "oracle",
        }
    }
}

enum Failure {
    /// Bad configuration or inputs; nothing was written.
    Validation(String),
    Runtime(String),
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

type Outcome = Result<Value, Failure>;

macro_rules! apply_flags {
    ($cfg:expr, $o:expr, $($field:ident),* $(,)?) => {
        $(
            if let Some(v) = &$o.$field {
                $cfg.set(stringify!($field), &v.to_string()).map_err(invalid)?;
            }
        )*
    };
}

fn resolve_config(o: &Overrides) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &o.config {
        cfg.apply_file(path).map_err(invalid)?;
    }
    cfg.apply_env(std::env::vars()).map_err(invalid)?;
    apply_flags!(
        cfg, o, seed, threads, k, dedup_threshold, kmeans_iters, nli_url, nli_timeout_ms, nli_attempts, fan_out,
        instruction, n, queries, prior, synth_kind, ratio, lr, lr_min, weight_decay, batch_size, epochs, hidden,
        temperature_start, temperature_end, random_phase_fraction, pos_weight, max_history, task, multi_head,
        confidence, max_queries, budgets, alpha, epsilon,
    );
    cfg.validate().map_err(invalid)?;
    Ok(cfg)
}

fn parse_split(s: &str) -> Result<Option<Split>, Failure> {
    Ok(Some(match s {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        "all" => return Ok(None),
        other => return Err(Failure::Validation(format!("unknown split `{other}`"))),
    }))
}

/// Row indices of `split` under the configured ratio and seed.
fn split_rows(cfg: &RunConfig, n: usize, split: Option<Split>) -> Result<Vec<usize>, Failure> {
    let Some(split) = split else {
        return Ok((0..n).collect());
    };
    let assignment = corpus::split_dataset(n, cfg.ratio, module_seed(cfg.seed, "split")).map_err(invalid)?;
    Ok(assignment.indices(split))
}

fn load_matrix(path: &Path) -> Result<AnswerMatrix, Failure> {
    corpus::load_answer_matrix(path, MatrixFormat::from_path(path)).map_err(invalid)
}

fn load_labels(path: &Path) -> Result<LabelSet, Failure> {
    corpus::load_labels(path, MatrixFormat::from_path(path)).map_err(invalid)
}

fn check_rows(rows: &[usize], n: usize) -> Result<(), Failure> {
    match rows.iter().find(|&&r| r >= n) {
        Some(r) => Err(Failure::Validation(format!("report row {r} out of range ({n} rows)"))),
        None => Ok(()),
    }
}

fn write_traces(path: &Path, traces: &[PursuitTrace]) -> Result<(), Failure> {
    let text: String = traces.iter().map(trace_to_jsonl).collect();
    corpus::write_atomic(path, text.as_bytes()).map_err(runtime)
}

fn cmd_build_queries(cfg: &RunConfig, embeddings: &Path, facts: &Path, out: &Path) -> Outcome {
    let table = corpus::load_embeddings(embeddings).map_err(invalid)?;
    let texts: Vec<String> = std::fs::read_to_string(facts)
        .map_err(|e| Failure::Validation(format!("{}: {e}", facts.display())))?
        .lines()
        .map(str::to_owned)
        .collect();
    if texts.len() != table.len() {
        return Err(Failure::Validation(format!(
            "{} fact texts for {} embeddings",
            texts.len(),
            table.len()
        )));
    }
    if cfg.k > table.len() {
        return Err(Failure::Validation(format!("k = {} exceeds {} facts", cfg.k, table.len())));
    }
    let bank = build_query_bank(&table, &texts, &cfg.bank_config(module_seed(cfg.seed, "querybank")))
        .map_err(runtime)?;
    bank.save(out).map_err(runtime)?;
    Ok(json!({"facts": table.len(), "clusters": cfg.k, "queries": bank.len(), "out": out}))
}

fn cmd_answer(cfg: &RunConfig, reports: &Path, bank: &Path, out: &Path) -> Outcome {
    let client_cfg = cfg
        .nli_client_config()
        .ok_or_else(|| Failure::Validation("answer needs --nli-url".into()))?;
    let bank = QueryBank::load(bank).map_err(invalid)?;
    let text = std::fs::read_to_string(reports).map_err(|e| Failure::Validation(format!("{}: {e}", reports.display())))?;
    let docs = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str::<ReportDoc>(l).map_err(|e| Failure::Validation(format!("report line {}: {e}", i + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    let provider = NliProvider::new(NliClient::new(client_cfg), cfg.instruction.clone(), docs, bank.texts());
    let matrix = provider.answer_all(cfg.fan_out).map_err(runtime)?;
    corpus::write_answer_matrix(out, &matrix, MatrixFormat::from_path(out)).map_err(runtime)?;
    Ok(json!({"reports": matrix.n_reports(), "queries": matrix.n_queries(), "out": out}))
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Outcome {
    let seed = module_seed(cfg.seed, "synth");
    let spec = match cfg.synth_kind {
        SynthKind::Informative => SyntheticSpec::informative(cfg.queries, cfg.prior, seed),
        SynthKind::Separable => SyntheticSpec::separable(cfg.queries, cfg.prior, seed),
        SynthKind::Random => SyntheticSpec::random(cfg.queries, cfg.prior, seed),
        SynthKind::Uninformative => SyntheticSpec::uninformative(cfg.queries, cfg.prior, seed),
    };
    spec.validate().map_err(invalid)?;
    let (matrix, labels) = answers::synth_generate(&spec, cfg.n).map_err(runtime)?;
    std::fs::create_dir_all(out).map_err(runtime)?;
    let spec_json = serde_json::to_string_pretty(&spec).map_err(runtime)?;
    corpus::write_answer_matrix(out.join("answers.ipam"), &matrix, MatrixFormat::Binary).map_err(runtime)?;
    corpus::write_labels(out.join("labels.iplb"), &labels, MatrixFormat::Binary).map_err(runtime)?;
    corpus::write_atomic(&out.join("spec.json"), spec_json.as_bytes()).map_err(runtime)?;
    let positives = labels.column(0).iter().filter(|&&y| y == 1).count();
    Ok(json!({
        "kind": cfg.synth_kind.as_str(),
        "reports": cfg.n,
        "queries": cfg.queries,
        "positives": positives,
        "out": out,
    }))
}

fn cmd_train(cfg: &RunConfig, answers: &Path, labels: &Path, bank: Option<&Path>, out: &Path, log: Option<&Path>) -> Outcome {
    let matrix = load_matrix(answers)?;
    let labels = load_labels(labels)?;
    if matrix.n_reports() != labels.n_reports() {
        return Err(Failure::Validation(format!(
            "{} answer rows but {} label rows",
            matrix.n_reports(),
            labels.n_reports()
        )));
    }
    let texts = match bank {
        Some(p) => {
            let b = QueryBank::load(p).map_err(invalid)?;
            if b.len() != matrix.n_queries() {
                return Err(Failure::Validation(format!(
                    "bank has {} queries, answers have {}",
                    b.len(),
                    matrix.n_queries()
                )));
            }
            Some(b.texts())
        }
        None => None,
    };
    let train_rows = split_rows(cfg, matrix.n_reports(), Some(Split::Train))?;
    let val_rows = split_rows(cfg, matrix.n_reports(), Some(Split::Val))?;
    let (tr_x, tr_y) = (matrix.select_rows(&train_rows), labels.select_rows(&train_rows));
    let (va_x, va_y) = (matrix.select_rows(&val_rows), labels.select_rows(&val_rows));
    let train = Dataset::new(&tr_x, &tr_y).map_err(invalid)?;
    let val = Dataset::new(&va_x, &va_y).map_err(invalid)?;
    let tc = cfg.train_config(module_seed(cfg.seed, "train"));
    let outcome = train_vip(train, val, &tc).map_err(runtime)?;
    let model = match texts {
        Some(t) => outcome.model.with_query_texts(t).map_err(runtime)?,
        None => outcome.model,
    };
    model.save(out).map_err(runtime)?;
    if let Some(path) = log {
        write_log(path, &outcome.log).map_err(runtime)?;
    }
    let best = &outcome.log[model.best_epoch];
    Ok(json!({
        "train": train_rows.len(),
        "val": val_rows.len(),
        "epochs": outcome.log.len(),
        "best_epoch": model.best_epoch,
        "best_val_loss": best.val_loss,
        "out": out,
    }))
}

/// Single-head models read label column `model.config.task`; multi-head
/// models expose every column and `cfg.task` picks the head.
fn head_and_column(cfg: &RunConfig, model: &PursuitModel) -> (usize, usize) {
    if model.n_heads() > 1 {
        (cfg.task, cfg.task)
    } else {
        (0, model.config.task)
    }
}

fn cmd_evaluate(cfg: &RunConfig, model: &Path, answers: &Path, labels: &Path, split: &str, out: &Path, curve: Option<&Path>) -> Outcome {
    let model = PursuitModel::load(model).map_err(invalid)?;
    let matrix = load_matrix(answers)?;
    let labels = load_labels(labels)?;
    if matrix.n_reports() != labels.n_reports() {
        return Err(Failure::Validation("answer and label row counts differ".into()));
    }
    let (head, column) = head_and_column(cfg, &model);
    if head >= model.n_heads() || column >= labels.n_tasks() {
        return Err(Failure::Validation(format!("task {} is out of range", cfg.task)));
    }
    let rows = split_rows(cfg, matrix.n_reports(), parse_split(split)?)?;
    let y: Vec<u8> = rows.iter().map(|&r| labels.get(r, column)).collect();
    let y = LabelSet::from_column(y).map_err(invalid)?;
    let rule = cfg.stop_rule().map_err(invalid)?;
    let budgets = cfg.budgets_for(model.n_queries());
    let provider = MatrixProvider::new(&matrix);
    let report = evaluate_model(&model, &provider, &rows, &y, &budgets, &rule, head).map_err(runtime)?;
    report.write(out, curve).map_err(runtime)?;
    Ok(json!({
        "task": report.task_name,
        "reports": rows.len(),
        "ap": report.ap,
        "f1": report.f1,
        "accuracy": report.accuracy,
        "mean_queries": report.mean_queries,
        "out": out,
    }))
}

/// Asks the user for each answer on standard input.
struct StdinProvider {
    texts: Vec<String>,
}

impl AnswerProvider for StdinProvider {
    fn n_queries(&self) -> usize {
        self.texts.len()
    }

    fn answer(&self, _report: usize, query: usize) -> answers::Result<Answer> {
        self.check_query(query)?;
        let stdin = io::stdin();
        loop {
            eprint!("{}? [y]es / [n]o / [u]nknown: ", self.texts[query]);
            io::stderr().flush().ok();
            let mut line = String::new();
            if stdin.lock().read_line(&mut line).map_err(|e| AnswerError::Input(e.to_string()))? == 0 {
                return Err(AnswerError::Input("standard input closed".into()));
            }
            match line.trim() {
                "y" | "yes" | "1" => return Ok(Answer::Positive),
                "n" | "no" | "-1" => return Ok(Answer::Negative),
                "u" | "unknown" | "0" => return Ok(Answer::Unknown),
                _ => eprintln!("please answer y, n or u"),
            }
        }
    }
}

fn cmd_pursue(cfg: &RunConfig, model: &Path, answers: Option<&Path>, rows: &[usize], split: Option<&str>, trace: &Path) -> Outcome {
    let model = PursuitModel::load(model).map_err(invalid)?;
    let rule = cfg.stop_rule().map_err(invalid)?;
    let (head, _) = head_and_column(cfg, &model);
    if head >= model.n_heads() {
        return Err(Failure::Validation(format!("task {} is out of range", cfg.task)));
    }
    let matrix = answers.map(load_matrix).transpose()?;
    let (provider, rows): (Box<dyn AnswerProvider + Sync>, Vec<usize>) = match &matrix {
        Some(m) => {
            let rows = if rows.is_empty() {
                split_rows(cfg, m.n_reports(), parse_split(split.unwrap_or("test"))?)?
            } else {
                rows.to_vec()
            };
            check_rows(&rows, m.n_reports())?;
            (Box::new(MatrixProvider::new(m)), rows)
        }
        None => {
            let rows = if rows.is_empty() { vec![0] } else { rows.to_vec() };
            (Box::new(StdinProvider { texts: model.query_texts.clone() }), rows)
        }
    };
    let mut traces = Vec::with_capacity(rows.len());
    for &r in &rows {
        match pursue_head(&model, provider.as_ref(), r, &rule, head) {
            Ok(t) => traces.push(t),
            Err(PursuitError::Provider { partial, source }) => {
                traces.push(*partial);
                write_traces(trace, &traces)?;
                return Err(Failure::Runtime(format!("report {r}: {source}")));
            }
            Err(e @ PursuitError::QueryCountMismatch { .. }) => return Err(invalid(e)),
            Err(e) => return Err(runtime(e)),
        }
    }
    write_traces(trace, &traces)?;
    let mean = traces.iter().map(|t| t.n_steps() as f64).sum::<f64>() / traces.len() as f64;
    let last = traces.last().expect("at least one report");
    Ok(json!({
        "reports": traces.len(),
        "mean_steps": mean,
        "stop_reason": last.stop_reason.to_string(),
        "prediction": last.prediction,
        "trace": trace,
    }))
}

fn cmd_oracle(cfg: &RunConfig, answers: &Path, labels: &Path, bank: Option<&Path>, rows: &[usize], fit_split: &str, trace: &Path) -> Outcome {
    let matrix = load_matrix(answers)?;
    let labels = load_labels(labels)?;
    if matrix.n_reports() != labels.n_reports() {
        return Err(Failure::Validation("answer and label row counts differ".into()));
    }
    if cfg.task >= labels.n_tasks() {
        return Err(Failure::Validation(format!("task {} is out of range", cfg.task)));
    }
    let texts = match bank {
        Some(p) => QueryBank::load(p).map_err(invalid)?.texts(),
        None => (0..matrix.n_queries()).map(|q| format!("q{q}")).collect(),
    };
    if texts.len() != matrix.n_queries() {
        return Err(Failure::Validation("bank size does not match the answer matrix".into()));
    }
    let rows = if rows.is_empty() {
        split_rows(cfg, matrix.n_reports(), Some(Split::Test))?
    } else {
        rows.to_vec()
    };
    check_rows(&rows, matrix.n_reports())?;
    let fit = split_rows(cfg, matrix.n_reports(), parse_split(fit_split)?)?;
    let (fit_x, fit_y) = (matrix.select_rows(&fit), labels.select_rows(&fit));
    let joint = TabularJoint::new(&fit_x, &fit_y, cfg.task, cfg.alpha).map_err(invalid)?;
    let mut traces = Vec::with_capacity(rows.len());
    for &r in &rows {
        let run = joint.run(matrix.row(r), cfg.epsilon, cfg.max_queries).map_err(runtime)?;
        let mut t = run.trace;
        t.task = format!("task{}", cfg.task);
        t.report_id = r.to_string();
        for s in &mut t.steps {
            s.query_text = texts[s.query_id].clone();
        }
        traces.push(t);
    }
    write_traces(trace, &traces)?;
    let mean = traces.iter().map(|t| t.n_steps() as f64).sum::<f64>() / traces.len().max(1) as f64;
    Ok(json!({"fit_rows": fit.len(), "reports": traces.len(), "mean_steps": mean, "trace": trace}))
}

fn run(cli: &Cli) -> Outcome {
    let cfg = resolve_config(&cli.overrides)?;
    if let Some(n) = cfg.threads {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::BuildQueries { embeddings, facts, out } => cmd_build_queries(&cfg, embeddings, facts, out),
        Command::Answer { reports, bank, out } => cmd_answer(&cfg, reports, bank, out),
        Command::Synth { out } => cmd_synth(&cfg, out),
        Command::Train { answers, labels, bank, out, log } => {
            cmd_train(&cfg, answers, labels, bank.as_deref(), out, log.as_deref())
        }
        Command::Evaluate { model, answers, labels, split, out, curve } => {
            cmd_evaluate(&cfg, model, answers, labels, split, out, curve.as_deref())
        }
        Command::Pursue { model, answers, report_rows, split, trace } => {
            cmd_pursue(&cfg, model, answers.as_deref(), report_rows, split.as_deref(), trace)
        }
        Command::Oracle { answers, labels, bank, report_rows, fit_split, trace } => {
            cmd_oracle(&cfg, answers, labels, bank.as_deref(), report_rows, fit_split, trace)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let command = cli.command.name();
    let (summary, code) = match run(&cli) {
        Ok(mut v) => {
            v.as_object_mut()
                .expect("summaries are objects")
                .insert("status".into(), json!("ok"));
            (v, 0)
        }
        Err(f) => {
            let (kind, msg, code) = match f {
                Failure::Validation(m) => ("validation", m, 1),
                Failure::Runtime(m) => ("runtime", m, 2),
            };
            eprintln!("error: {msg}");
            (json!({"status": "error", "kind": kind, "message": msg}), code)
        }
    };
    let mut line = json!({"command": command});
    line.as_object_mut().unwrap().extend(summary.as_object().unwrap().clone());
    println!("{line}");
    ExitCode::from(code)
}
