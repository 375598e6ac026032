//! Planted-phrase separation run: plain GCN against the joint model.
//!
//! `cargo run --release --example separation -- [seeds]`

use bitype::corpus::{Document, NgramMiner};
use bitype::pipeline::prepare;
use bitype::synthetic::{generate, SyntheticConfig};
use bitype::train::{run_ablation, Dataset, ModelOptions, TrainConfig, Variant};

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let cfg = SyntheticConfig::default();
    let corpus = generate(&cfg, 0);
    let docs: Vec<Document> = corpus
        .texts
        .iter()
        .enumerate()
        .map(|(i, t)| Document::from_text(i, t))
        .collect();
    let p = prepare(docs, &corpus.citations, &NgramMiner::new(2, 2)).expect("prepare");
    println!("docs {} phrases {}", p.graph.n_docs(), p.phrases.len());
    let labels = corpus.labels.iter().map(|&c| Some(c)).collect();
    let ds = Dataset::new(p.graph, p.features, labels).expect("dataset");
    let seeds: Vec<u64> = (0..seeds).collect();
    let t = run_ablation(
        &ds,
        &[Variant::Gcn, Variant::B, Variant::A],
        &seeds,
        &ModelOptions::default(),
        &TrainConfig::default(),
    )
    .expect("ablation");
    for s in t.summary() {
        println!("{}\t{:.4} ± {:.4}", s.variant.label(), s.test_mean, s.test_std);
    }
}
