//! Tokenization, phrase mining, and the word / inclusion edge sets derived from
//! a document corpus.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::Edge;
use crate::sparse::CsrMatrix;

static STOPWORDS_TXT: &str = include_str!("../data/stopwords.txt");

fn stopwords() -> &'static BTreeSet<&'static str> {
    static SET: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_TXT
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("phrase {0} has no words")]
    EmptyPhrase(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    /// Index in the document index space.
    pub id: usize,
    pub tokens: Vec<String>,
}

impl Document {
    pub fn from_text(id: usize, text: &str) -> Self {
        Self {
            id,
            tokens: tokenize(text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phrase {
    /// Index in the word index space.
    pub id: usize,
    pub words: Vec<String>,
    pub frequency: usize,
}

impl Phrase {
    /// Display name: constituent words joined by `_`.
    pub fn name(&self) -> String {
        self.words.join("_")
    }
}

/// Lowercases, splits on non-alphanumeric characters, and drops tokens
/// shorter than two characters and stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    let stop = stopwords();
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| t.chars().count() >= 2 && !stop.contains(t.as_str()))
        .collect()
}

/// Tokenizes raw texts in parallel; documents keep their input order.
pub fn tokenize_all(texts: &[String]) -> Vec<Document> {
    texts
        .par_iter()
        .enumerate()
        .map(|(i, t)| Document::from_text(i, t))
        .collect()
}

/// Source of the word-node vocabulary.
pub trait PhraseMiner {
    fn mine(&self, corpus: &[Document]) -> Result<Vec<Phrase>, CorpusError>;
}

/// Frequent contiguous n-gram mining with greedy longest-match segmentation.
///
/// 1. Count every n-gram with `n <= max_n`; n-grams reaching `min_freq` are
///    candidates.
/// 2. Segment each document left to right, taking the longest candidate
///    starting at each position.
/// 3. Keep candidates whose segmented frequency still reaches `min_freq`.
///
/// Phrases are ordered by descending frequency, then name.
#[derive(Debug, Clone, Copy)]
pub struct NgramMiner {
    pub max_n: usize,
    pub min_freq: usize,
    /// Keep only the most frequent phrases.
    pub max_vocab: Option<usize>,
}

impl NgramMiner {
    pub fn new(max_n: usize, min_freq: usize) -> Self {
        Self {
            max_n,
            min_freq,
            max_vocab: None,
        }
    }
}

impl PhraseMiner for NgramMiner {
    fn mine(&self, corpus: &[Document]) -> Result<Vec<Phrase>, CorpusError> {
        if self.max_n < 1 {
            return Err(CorpusError::InvalidParameter("max_n must be at least 1".into()));
        }
        if self.min_freq < 1 {
            return Err(CorpusError::InvalidParameter("min_freq must be at least 1".into()));
        }
        if corpus.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }

        let mut raw: HashMap<&[String], usize> = HashMap::new();
        for doc in corpus {
            let toks = doc.tokens.as_slice();
            for i in 0..toks.len() {
                for n in 1..=self.max_n.min(toks.len() - i) {
                    *raw.entry(&toks[i..i + n]).or_default() += 1;
                }
            }
        }
        raw.retain(|_, c| *c >= self.min_freq);

        let mut segmented: HashMap<&[String], usize> = HashMap::new();
        for doc in corpus {
            let toks = doc.tokens.as_slice();
            let mut i = 0;
            while i < toks.len() {
                let longest = (1..=self.max_n.min(toks.len() - i))
                    .rev()
                    .find(|&n| raw.contains_key(&toks[i..i + n]));
                match longest {
                    Some(n) => {
                        *segmented.entry(&toks[i..i + n]).or_default() += 1;
                        i += n;
                    }
                    None => i += 1,
                }
            }
        }

        let mut kept: Vec<(Vec<String>, usize)> = segmented
            .into_iter()
            .filter(|&(_, c)| c >= self.min_freq)
            .map(|(words, c)| (words.to_vec(), c))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if let Some(cap) = self.max_vocab {
            kept.truncate(cap);
        }
        Ok(kept
            .into_iter()
            .enumerate()
            .map(|(id, (words, frequency))| Phrase { id, words, frequency })
            .collect())
    }
}

/// Mines phrases with [`NgramMiner`] and no vocabulary cap.
pub fn mine_phrases(corpus: &[Document], max_n: usize, min_freq: usize) -> Result<Vec<Phrase>, CorpusError> {
    NgramMiner::new(max_n, min_freq).mine(corpus)
}

/// A vocabulary supplied up front, e.g. from a phrase override file. Ids
/// follow the given order; frequencies are raw occurrence counts.
#[derive(Debug, Clone)]
pub struct FixedVocabulary {
    pub phrases: Vec<Vec<String>>,
}

impl FixedVocabulary {
    /// Parses `_`-joined phrase names.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Self {
        Self {
            phrases: names
                .iter()
                .map(|n| {
                    n.as_ref()
                        .split('_')
                        .filter(|w| !w.is_empty())
                        .map(str::to_string)
                        .collect()
                })
                .collect(),
        }
    }
}

impl PhraseMiner for FixedVocabulary {
    fn mine(&self, corpus: &[Document]) -> Result<Vec<Phrase>, CorpusError> {
        let mut phrases: Vec<Phrase> = self
            .phrases
            .iter()
            .enumerate()
            .map(|(id, words)| Phrase {
                id,
                words: words.clone(),
                frequency: 0,
            })
            .collect();
        if let Some(p) = phrases.iter().find(|p| p.words.is_empty()) {
            return Err(CorpusError::EmptyPhrase(p.id));
        }
        let counts = phrase_counts(corpus, &phrases);
        for (_, c, v) in counts.iter() {
            phrases[c].frequency += v as usize;
        }
        Ok(phrases)
    }
}

/// Lookup of phrases by their token sequence.
pub(crate) struct PhraseIndex<'a> {
    by_words: HashMap<&'a [String], usize>,
    max_len: usize,
}

impl<'a> PhraseIndex<'a> {
    pub(crate) fn new(phrases: &'a [Phrase]) -> Self {
        Self {
            by_words: phrases.iter().map(|p| (p.words.as_slice(), p.id)).collect(),
            max_len: phrases.iter().map(|p| p.words.len()).max().unwrap_or(0),
        }
    }

    /// Every (start, phrase id) occurrence as a contiguous token subsequence.
    pub(crate) fn occurrences<'t>(&'t self, tokens: &'t [String]) -> impl Iterator<Item = (usize, usize)> + 't {
        (0..tokens.len()).flat_map(move |i| {
            (1..=self.max_len.min(tokens.len() - i))
                .filter_map(move |n| self.by_words.get(&tokens[i..i + n]).map(|&id| (i, id)))
        })
    }

    /// Greedy longest-match segmentation into phrase ids; tokens not covered
    /// by any phrase are skipped.
    pub(crate) fn segment(&self, tokens: &[String]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let hit = (1..=self.max_len.min(tokens.len() - i))
                .rev()
                .find_map(|n| self.by_words.get(&tokens[i..i + n]).map(|&id| (n, id)));
            match hit {
                Some((n, id)) => {
                    out.push(id);
                    i += n;
                }
                None => i += 1,
            }
        }
        out
    }
}

/// WW edges: one undirected edge per pair of phrases sharing a constituent
/// word. Emitted once per pair with the lower id first.
pub fn build_word_network(phrases: &[Phrase]) -> Vec<Edge> {
    let mut by_word: HashMap<&str, BTreeSet<usize>> = HashMap::new();
    for p in phrases {
        for w in &p.words {
            by_word.entry(w.as_str()).or_default().insert(p.id);
        }
    }
    let mut pairs = BTreeSet::new();
    for ids in by_word.values() {
        let ids: Vec<usize> = ids.iter().copied().collect();
        for (k, &a) in ids.iter().enumerate() {
            for &b in &ids[k + 1..] {
                pairs.insert((a, b));
            }
        }
    }
    pairs.into_iter().map(|(a, b)| Edge::ww(a, b)).collect()
}

/// Raw occurrence counts: `n_docs × n_phrases`.
pub fn phrase_counts(corpus: &[Document], phrases: &[Phrase]) -> CsrMatrix {
    let index = PhraseIndex::new(phrases);
    let n_docs = corpus.iter().map(|d| d.id + 1).max().unwrap_or(0);
    let triplets: Vec<(usize, usize, f64)> = corpus
        .iter()
        .flat_map(|d| index.occurrences(&d.tokens).map(move |(_, w)| (d.id, w, 1.0)))
        .collect();
    CsrMatrix::from_triplets(n_docs, phrases.len(), &triplets)
}

/// DW edges: `(d, w)` iff phrase `w` occurs contiguously in document `d`.
pub fn build_inclusion_edges(corpus: &[Document], phrases: &[Phrase]) -> Vec<Edge> {
    phrase_counts(corpus, phrases)
        .iter()
        .map(|(d, w, _)| Edge::dw(d, w))
        .collect()
}

/// Input features over the joint node space (documents, then words), one
/// column per phrase.
///
/// Document rows hold raw phrase counts scaled to unit L1 norm (all-zero
/// rows stay zero); word node `w` gets the one-hot row `e_w`.
pub fn bag_of_words_features(corpus: &[Document], phrases: &[Phrase]) -> CsrMatrix {
    let counts = phrase_counts(corpus, phrases);
    let n_docs = counts.rows();
    let p = phrases.len();
    let row_sums: Vec<f64> = (0..n_docs).map(|r| counts.row(r).1.iter().sum()).collect();
    let mut triplets: Vec<(usize, usize, f64)> = counts.iter().map(|(r, c, v)| (r, c, v / row_sums[r])).collect();
    triplets.extend((0..p).map(|w| (n_docs + w, w, 1.0)));
    CsrMatrix::from_triplets(n_docs + p, p, &triplets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<Document> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::from_text(i, t))
            .collect()
    }

    fn phrases(names: &[&str]) -> Vec<Phrase> {
        FixedVocabulary::from_names(names).mine(&[]).unwrap()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("The Data-Mining of a X, über!"),
            vec!["data", "mining", "über"]
        );
    }

    #[test]
    fn bigram_subsumes_unigrams() {
        let mined = mine_phrases(&docs(&["data mining", "data mining"]), 2, 2).unwrap();
        assert_eq!(mined.len(), 1);
        assert_eq!(mined[0].name(), "data_mining");
        assert_eq!(mined[0].frequency, 2);
    }

    #[test]
    fn unigram_counts() {
        let mined = mine_phrases(&docs(&["aa bb aa bb"]), 1, 2).unwrap();
        let got: Vec<(String, usize)> = mined.iter().map(|p| (p.name(), p.frequency)).collect();
        assert_eq!(got, vec![("aa".to_string(), 2), ("bb".to_string(), 2)]);
    }

    #[test]
    fn min_freq_above_corpus_size() {
        let mined = mine_phrases(&docs(&["aa bb", "cc dd"]), 2, 5).unwrap();
        assert!(mined.is_empty());
    }

    #[test]
    fn miner_errors() {
        assert_eq!(mine_phrases(&[], 2, 2).unwrap_err(), CorpusError::EmptyCorpus);
        assert!(matches!(
            mine_phrases(&docs(&["aa"]), 0, 1),
            Err(CorpusError::InvalidParameter(_))
        ));
        assert!(matches!(
            mine_phrases(&docs(&["aa"]), 1, 0),
            Err(CorpusError::InvalidParameter(_))
        ));
    }

    #[test]
    fn mining_is_deterministic() {
        let corpus = docs(&[
            "graph neural network",
            "neural network training",
            "graph mining data",
            "data mining graph",
        ]);
        let a = mine_phrases(&corpus, 3, 1).unwrap();
        let b = mine_phrases(&corpus, 3, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shared_word_links_phrases() {
        let ps = phrases(&["text_mining", "data_mining"]);
        assert_eq!(build_word_network(&ps), vec![Edge::ww(0, 1)]);
        let ps = phrases(&["graph", "text"]);
        assert!(build_word_network(&ps).is_empty());
        let ps = phrases(&["a_b", "b_c", "c_d"]);
        assert_eq!(build_word_network(&ps), vec![Edge::ww(0, 1), Edge::ww(1, 2)]);
    }

    #[test]
    fn inclusion_containment() {
        let corpus = docs(&["data mining rocks", "graph theory"]);
        let ps = phrases(&["data_mining"]);
        assert_eq!(build_inclusion_edges(&corpus, &ps), vec![Edge::dw(0, 0)]);
    }

    #[test]
    fn features_rows() {
        let corpus = docs(&["data mining", "graph theory", "data data mining"]);
        let ps = phrases(&["data", "data_mining"]);
        let x = bag_of_words_features(&corpus, &ps).to_dense();
        assert_eq!(x.shape(), &[5, 2]);
        // doc 0: data x1, data_mining x1
        assert_eq!(x.row(0).to_vec(), vec![0.5, 0.5]);
        // doc 1 has no phrase
        assert_eq!(x.row(1).to_vec(), vec![0.0, 0.0]);
        // doc 2: data x2, data_mining x1
        assert!((x[[2, 0]] - 2.0 / 3.0).abs() < 1e-15);
        assert!((x[[2, 1]] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(x.row(3).to_vec(), vec![1.0, 0.0]);
        assert_eq!(x.row(4).to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn single_occurrence_is_one_hot() {
        let corpus = docs(&["neural network"]);
        let ps = phrases(&["graph", "neural_network"]);
        let x = bag_of_words_features(&corpus, &ps).to_dense();
        assert_eq!(x.row(0).to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn segmentation_prefers_longest() {
        let ps = phrases(&["data", "data_mining", "rocks"]);
        let index = PhraseIndex::new(&ps);
        let toks: Vec<String> = ["data", "mining", "rocks", "data"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(index.segment(&toks), vec![1, 2, 0]);
    }
}
