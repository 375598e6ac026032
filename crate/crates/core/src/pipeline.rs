//! Corpus plus citations to a bi-typed graph with input features.

use thiserror::Error;

use crate::corpus::{
    bag_of_words_features, build_inclusion_edges, build_word_network, CorpusError, Document, Phrase, PhraseMiner,
};
use crate::graph::{build_graph, BiTypedGraph, Edge, GraphError};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("document ids must be 0..{expected} in order; found {found} at position {position}")]
    NonDenseIds {
        expected: usize,
        position: usize,
        found: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub docs: Vec<Document>,
    pub phrases: Vec<Phrase>,
    pub graph: BiTypedGraph,
    /// Joint features, documents first.
    pub features: CsrMatrix,
}

/// Mines the vocabulary, then builds WW, DW and DD edges and the features.
/// Documents must carry ids `0..n` in order; citations index documents.
pub fn prepare(
    docs: Vec<Document>,
    citations: &[(usize, usize)],
    miner: &dyn PhraseMiner,
) -> Result<Prepared, PipelineError> {
    if let Some((position, d)) = docs.iter().enumerate().find(|(i, d)| d.id != *i) {
        return Err(PipelineError::NonDenseIds {
            expected: docs.len(),
            position,
            found: d.id,
        });
    }
    let phrases = miner.mine(&docs)?;
    prepare_with_vocabulary(docs, citations, phrases)
}

/// As [`prepare`], with a vocabulary already in hand.
pub fn prepare_with_vocabulary(
    docs: Vec<Document>,
    citations: &[(usize, usize)],
    phrases: Vec<Phrase>,
) -> Result<Prepared, PipelineError> {
    let dd: Vec<Edge> = citations.iter().map(|&(a, b)| Edge::dd(a, b)).collect();
    let ww = build_word_network(&phrases);
    let dw = build_inclusion_edges(&docs, &phrases);
    let graph = build_graph(docs.len(), phrases.len(), &dd, &ww, &dw)?;
    let features = bag_of_words_features(&docs, &phrases);
    Ok(Prepared {
        docs,
        phrases,
        graph,
        features,
    })
}
