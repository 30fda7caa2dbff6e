//! Average precision and F1 on small hand-checkable inputs.
//!
//! cargo run --example metrics

use infopursuit::{average_precision, f1_score};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ap = average_precision(&[0.9, 0.8, 0.7, 0.6], &[1, 0, 1, 0])?;
    println!("AP = {ap:.4} (5/6 = {:.4})", 5.0 / 6.0);

    let ap = average_precision(&[0.5; 8], &[1, 0, 0, 1, 0, 0, 0, 0])?;
    println!("constant scores: AP = {ap} (prevalence 0.25)");

    let (p, r, f1) = f1_score(&[1, 1, 0], &[1, 0, 1])?;
    println!("precision {p}, recall {r}, F1 {f1}");

    match average_precision(&[0.1, 0.2], &[0, 0]) {
        Err(e) => println!("no positives: {e}"),
        Ok(v) => println!("unexpected AP {v}"),
    }
    Ok(())
}
