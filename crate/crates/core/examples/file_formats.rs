//! Writes and reads back every on-disk format: answer matrices, labels,
//! embeddings, query banks and checkpoints.
//!
//! cargo run --example file_formats

use infopursuit::checkpoint::Checkpoint;
use infopursuit::corpus::{self, AnswerMatrix, EmbeddingTable, LabelSet, MatrixFormat};
use infopursuit::nn::Mlp;
use infopursuit::querybank::QueryBank;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("infopursuit-formats");
    std::fs::create_dir_all(&dir)?;

    let answers = AnswerMatrix::from_csv("1,0,-1\n0,0,1\n")?;
    corpus::write_answer_matrix(dir.join("a.ipam"), &answers, MatrixFormat::Binary)?;
    let bytes = std::fs::read(dir.join("a.ipam"))?;
    println!("IPAM1 bytes: {bytes:?}");
    assert_eq!(corpus::load_answer_matrix(dir.join("a.ipam"), MatrixFormat::Binary)?, answers);

    let labels = LabelSet::from_column(vec![1, 0])?;
    corpus::write_labels(dir.join("l.csv"), &labels, MatrixFormat::Csv)?;
    assert_eq!(corpus::load_labels(dir.join("l.csv"), MatrixFormat::Csv)?, labels);

    let table = EmbeddingTable::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8]])?;
    corpus::write_embeddings(dir.join("e.ipem"), &table)?;
    assert_eq!(corpus::load_embeddings(dir.join("e.ipem"))?, table);

    let bank = QueryBank::from_facts(&[1, 0], &["effusion".into(), "opacity".into()])?;
    print!("query bank:\n{}", bank.to_jsonl());

    let mlp = Mlp::<f32>::five_layer(4, 8, 2, &mut ChaCha8Rng::seed_from_u64(1))?;
    let mut ck = Checkpoint::new(serde_json::json!({"note": "example"}));
    ck.push_mlp("querier", &mlp);
    ck.save(dir.join("m.ipck"))?;
    let back = Checkpoint::load(dir.join("m.ipck"))?;
    assert_eq!(back.mlp("querier")?, mlp);
    println!("checkpoint tensors: {:?}", back.tensors.iter().map(|(i, _)| &i.name).collect::<Vec<_>>());
    Ok(())
}
