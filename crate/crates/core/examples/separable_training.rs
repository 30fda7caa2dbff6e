//! Trains on a task where query 0 is the label and every other query is
//! noise, then checks that the querier asks query 0 first.
//!
//! cargo run --release --example separable_training

use infopursuit::answers::synth_generate;
use infopursuit::corpus::split_dataset;
use infopursuit::pursuit::posterior_path;
use infopursuit::{train_vip, Dataset, History, MatrixProvider, SyntheticSpec, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec::separable(10, 0.5, 11);
    let (answers, labels) = synth_generate(&spec, 1500)?;
    let split = split_dataset(answers.n_reports(), [7.0, 1.0, 2.0], 3)?;
    let rows = |s| split.indices(s);
    use infopursuit::corpus::Split::*;
    let (tr_x, tr_y) = (answers.select_rows(&rows(Train)), labels.select_rows(&rows(Train)));
    let (va_x, va_y) = (answers.select_rows(&rows(Val)), labels.select_rows(&rows(Val)));
    let test = rows(Test);

    let config = TrainConfig {
        epochs: 30,
        hidden: 64,
        lr: 1e-3,
        batch_size: 64,
        seed: 1,
        ..TrainConfig::default()
    };
    let outcome = train_vip(Dataset::new(&tr_x, &tr_y)?, Dataset::new(&va_x, &va_y)?, &config)?;
    let model = outcome.model;
    println!("best epoch {} of {}", model.best_epoch, outcome.log.len());

    let first = model.next_query(&History::new())?.expect("queries remain");
    println!("first query: q{first}");

    let provider = MatrixProvider::new(&answers);
    let mut correct = 0;
    for &r in &test {
        let path = posterior_path(&model, &provider, r, 1, 0)?;
        correct += ((path[1] >= 0.5) as u8 == labels.get(r, 0)) as usize;
    }
    println!("one-query accuracy: {:.3}", correct as f64 / test.len() as f64);
    Ok(())
}
