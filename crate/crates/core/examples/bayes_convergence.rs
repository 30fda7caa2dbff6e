//! Compares the trained model with the closed-form Bayes posterior on a
//! Naive Bayes synthetic task.
//!
//! cargo run --release --example bayes_convergence

use std::time::Instant;

use infopursuit::answers::synth_generate;
use infopursuit::exactip::NaiveBayesModel;
use infopursuit::history::History;
use infopursuit::metrics::accuracy;
use infopursuit::{average_precision, train_vip, Dataset, SyntheticSpec, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec::informative(20, 0.5, 21);
    let (answers, labels) = synth_generate(&spec, 2750)?;
    let train: Vec<usize> = (0..2000).collect();
    let val: Vec<usize> = (2000..2250).collect();
    let test: Vec<usize> = (2250..2750).collect();
    let (tr_x, tr_y) = (answers.select_rows(&train), labels.select_rows(&train));
    let (va_x, va_y) = (answers.select_rows(&val), labels.select_rows(&val));

    let config = TrainConfig {
        epochs: std::env::args().nth(1).map_or(Ok(60), |s| s.parse())?,
        hidden: 64,
        lr: 1e-3,
        batch_size: 64,
        seed: 2,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let model = train_vip(Dataset::new(&tr_x, &tr_y)?, Dataset::new(&va_x, &va_y)?, &config)?.model;
    println!("trained in {:.1?}", start.elapsed());

    let bayes = NaiveBayesModel::from(&spec);
    let y: Vec<u8> = test.iter().map(|&r| labels.get(r, 0)).collect();
    let (mut learned, mut exact) = (Vec::new(), Vec::new());
    for &r in &test {
        let row = answers.row(r);
        let full = History::from_entries(row.iter().copied().enumerate())?;
        learned.push(model.posterior(&full, 0)?);
        exact.push(bayes.posterior_row(row));
    }
    let hard = |p: &[f64]| p.iter().map(|&v| (v >= 0.5) as u8).collect::<Vec<_>>();
    println!(
        "accuracy: model {:.3}  bayes {:.3}",
        accuracy(&hard(&learned), &y),
        accuracy(&hard(&exact), &y)
    );
    println!(
        "AP:       model {:.4}  bayes {:.4}",
        average_precision(&learned, &y)?,
        average_precision(&exact, &y)?
    );
    Ok(())
}
