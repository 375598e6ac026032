//! Fixtures shared by the benchmarks in `benches/`.

pub use bitype;

use bitype::corpus::{Document, NgramMiner};
use bitype::pipeline::{prepare, Prepared};
use bitype::synthetic::{generate, SyntheticConfig};

/// A prepared planted-phrase corpus with `docs` documents and its labels.
pub fn synthetic(docs: usize, seed: u64) -> (Prepared, Vec<usize>) {
    let cfg = SyntheticConfig {
        docs,
        ..Default::default()
    };
    let corpus = generate(&cfg, seed);
    let texts: Vec<Document> = corpus
        .texts
        .iter()
        .enumerate()
        .map(|(i, t)| Document::from_text(i, t))
        .collect();
    let prepared = prepare(texts, &corpus.citations, &NgramMiner::new(2, 2)).expect("synthetic corpus prepares");
    (prepared, corpus.labels)
}
