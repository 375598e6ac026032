//! Planted-phrase synthetic citation corpora.
//!
//! Each class owns a small set of class words; its planted phrases are
//! ordered pairs of those words, so phrases of one class share words with
//! each other and never with another class. A document of class `c` is a
//! random mix of background words and a few planted phrases of `c`. Citation
//! edges join same-class documents, except that each edge endpoint is
//! replaced by a document of a different class with probability
//! `cross_class`.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::train::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub docs: usize,
    /// Distinct words per class; planted phrases are pairs of them.
    pub class_words: usize,
    /// Planted phrases per class.
    pub phrases_per_class: usize,
    /// Planted phrase occurrences per document.
    pub phrases_per_doc: usize,
    /// Background words shared by all classes.
    pub background_words: usize,
    /// Background tokens per document.
    pub background_per_doc: usize,
    /// Citation edges started per document.
    pub citations_per_doc: usize,
    /// Probability that a citation lands in a different class.
    pub cross_class: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            docs: 400,
            class_words: 12,
            phrases_per_class: 40,
            phrases_per_doc: 2,
            background_words: 400,
            background_per_doc: 20,
            citations_per_doc: 2,
            cross_class: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    /// Raw text per document, in document order.
    pub texts: Vec<String>,
    pub labels: Vec<usize>,
    /// Undirected citation pairs over document indices.
    pub citations: Vec<(usize, usize)>,
    /// Planted phrases per class, as `_`-joined names.
    pub planted: Vec<Vec<String>>,
}

fn class_word(c: usize, j: usize) -> String {
    format!("k{c}w{j}")
}

fn background_word(j: usize) -> String {
    format!("bg{j}")
}

/// Draws a corpus; identical `(cfg, seed)` give identical output.
pub fn generate(cfg: &SyntheticConfig, seed: u64) -> SyntheticCorpus {
    assert!(
        cfg.classes >= 2 && cfg.docs >= cfg.classes,
        "need at least two classes and one document each"
    );
    assert!(cfg.class_words >= 2, "phrases need two distinct class words");
    assert!(
        cfg.phrases_per_class <= cfg.class_words * (cfg.class_words - 1),
        "more phrases than ordered word pairs"
    );
    let mut rng = seeded_rng(seed, 0x5e);

    let mut planted: Vec<Vec<(usize, usize)>> = Vec::with_capacity(cfg.classes);
    for _ in 0..cfg.classes {
        let mut pairs: Vec<(usize, usize)> = (0..cfg.class_words)
            .flat_map(|a| (0..cfg.class_words).filter(move |&b| b != a).map(move |b| (a, b)))
            .collect();
        let (chosen, _) = rand::seq::SliceRandom::partial_shuffle(&mut pairs[..], &mut rng, cfg.phrases_per_class);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();
        planted.push(chosen);
    }

    let labels: Vec<usize> = (0..cfg.docs).map(|i| i % cfg.classes).collect();
    let mut texts = Vec::with_capacity(cfg.docs);
    for &c in &labels {
        let mut chunks: Vec<String> = (0..cfg.background_per_doc)
            .map(|_| background_word(rng.random_range(0..cfg.background_words)))
            .collect();
        for _ in 0..cfg.phrases_per_doc {
            let &(a, b) = planted[c].choose(&mut rng).expect("class has phrases");
            let at = rng.random_range(0..=chunks.len());
            chunks.insert(at, format!("{} {}", class_word(c, a), class_word(c, b)));
        }
        texts.push(chunks.join(" "));
    }

    let members: Vec<Vec<usize>> = (0..cfg.classes)
        .map(|c| (0..cfg.docs).filter(|&i| labels[i] == c).collect())
        .collect();
    let others: Vec<Vec<usize>> = (0..cfg.classes)
        .map(|c| (0..cfg.docs).filter(|&i| labels[i] != c).collect())
        .collect();
    let mut citations = Vec::with_capacity(cfg.docs * cfg.citations_per_doc);
    for (src, &c) in labels.iter().enumerate() {
        for _ in 0..cfg.citations_per_doc {
            let pool = if rng.random::<f64>() < cfg.cross_class {
                &others[c]
            } else {
                &members[c]
            };
            let dst = *pool.choose(&mut rng).expect("nonempty pool");
            if dst != src {
                citations.push((src.min(dst), src.max(dst)));
            }
        }
    }
    citations.sort_unstable();
    citations.dedup();

    let planted = planted
        .iter()
        .enumerate()
        .map(|(c, ps)| {
            ps.iter()
                .map(|&(a, b)| format!("{}_{}", class_word(c, a), class_word(c, b)))
                .collect()
        })
        .collect();
    SyntheticCorpus {
        texts,
        labels,
        citations,
        planted,
    }
}
