//! Trains a small model and prints the query/answer chain behind each
//! prediction, in the trace file format.
//!
//! cargo run --release --example explanation_chain

use infopursuit::answers::synth_generate;
use infopursuit::pursuit::{pursue, trace_to_jsonl, StopRule};
use infopursuit::{train_vip, Dataset, MatrixProvider, SyntheticSpec, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec::informative(12, 0.5, 8);
    let (answers, labels) = synth_generate(&spec, 1300)?;
    let train: Vec<usize> = (0..1000).collect();
    let val: Vec<usize> = (1000..1200).collect();
    let (tr_x, tr_y) = (answers.select_rows(&train), labels.select_rows(&train));
    let (va_x, va_y) = (answers.select_rows(&val), labels.select_rows(&val));
    let config = TrainConfig {
        epochs: 40,
        hidden: 64,
        lr: 1e-3,
        batch_size: 64,
        ..TrainConfig::default()
    };
    let texts = [
        "pleural effusion", "lung opacity", "cardiomegaly", "atelectasis", "consolidation", "pneumothorax",
        "edema", "support device", "fracture", "nodule", "hilar enlargement", "emphysema",
    ];
    let model = train_vip(Dataset::new(&tr_x, &tr_y)?, Dataset::new(&va_x, &va_y)?, &config)?
        .model
        .with_query_texts(texts.iter().map(|s| s.to_string()).collect())?;

    let rule = StopRule::new(0.9, 12)?;
    let provider = MatrixProvider::new(&answers);
    for report in 1200..1204 {
        let trace = pursue(&model, &provider, report, &rule)?;
        println!("report {report}, label {}:", labels.get(report, 0));
        for s in &trace.steps {
            let said = ["no", "unknown", "yes"][s.answer.index()];
            println!("  {}? {said}  (P = {:.2})", s.query_text, s.posterior);
        }
        println!("  => {} after {} queries ({})", trace.prediction, trace.n_steps(), trace.stop_reason);
        if report == 1200 {
            print!("{}", trace_to_jsonl(&trace));
        }
    }
    Ok(())
}
