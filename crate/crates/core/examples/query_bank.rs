//! Builds a query bank from fact embeddings: k-means, one representative per
//! cluster, then near-duplicate removal.
//!
//! cargo run --release --example query_bank

use infopursuit::corpus::EmbeddingTable;
use infopursuit::querybank::{build_query_bank, cosine_similarity, kmeans_cluster, BankConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // 40 topics with 5 close paraphrases each
    let dim = 16;
    let topics: Vec<Vec<f32>> = (0..40)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut rows = Vec::new();
    let mut texts = Vec::new();
    for (t, centre) in topics.iter().enumerate() {
        for p in 0..5 {
            rows.push(centre.iter().map(|c| c + rng.gen_range(-0.05..0.05)).collect::<Vec<f32>>());
            texts.push(format!("finding {t}, wording {p}"));
        }
    }
    let table = EmbeddingTable::from_rows(&rows)?;

    let clusters = kmeans_cluster(&table, 40, 1, 100, 1e-9)?;
    println!("inertia per iteration: {:.3?}", clusters.inertia_history);

    let bank = build_query_bank(&table, &texts, &BankConfig { k: 40, seed: 1, ..BankConfig::default() })?;
    println!("{} queries kept from {} facts", bank.len(), table.len());
    for q in bank.queries().iter().take(5) {
        println!("  [{}] {} (fact {})", q.query_id, q.text, q.source_fact_index);
    }
    println!(
        "cos(fact 0, fact 1) = {:.4}",
        cosine_similarity(table.row(0), table.row(1))
    );
    print!("{}", &bank.to_jsonl()[..bank.to_jsonl().find('\n').unwrap() + 1]);
    Ok(())
}
