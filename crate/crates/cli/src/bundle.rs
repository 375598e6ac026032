//! Prepared dataset directories.
//!
//! A bundle holds `manifest.tsv`, `dd.edges`, `ww.edges`, `dw.edges`,
//! `features.tsv`, `vocab.txt`, `tokens.tsv`, and `documents.tsv`. Node ids
//! in the manifest and edge files are global: documents take `0..n_docs`,
//! word `w` takes `n_docs + w`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bitype::corpus::{Document, FixedVocabulary, Phrase, PhraseMiner};
use bitype::graph::{build_graph, BiTypedGraph, Edge, EdgeType, NodeKind};
use bitype::io::{self, ManifestEntry, NodeTable};
use bitype::sparse::CsrMatrix;
use bitype::train::Dataset;

pub const MANIFEST: &str = "manifest.tsv";
pub const FEATURES: &str = "features.tsv";
pub const VOCAB: &str = "vocab.txt";
pub const TOKENS: &str = "tokens.tsv";
pub const DOCUMENTS: &str = "documents.tsv";

pub fn edge_file(t: EdgeType) -> String {
    format!("{t}.edges")
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub nodes: NodeTable,
    pub graph: BiTypedGraph,
    pub features: CsrMatrix,
    pub vocab: Vec<String>,
    pub docs: Vec<Document>,
    /// Sorted distinct label names; class `i` is `classes[i]`.
    pub classes: Vec<String>,
    pub labels: Vec<Option<usize>>,
}

fn read_edges(dir: &Path, t: EdgeType, nodes: &NodeTable) -> Result<Vec<Edge>> {
    let path = dir.join(edge_file(t));
    let rows = io::parse_edge_list(&path)?;
    rows.into_iter()
        .map(|(a, b, w)| {
            let lookup = |g: usize| {
                nodes
                    .typed(g)
                    .with_context(|| format!("{}: node {g} is not in the manifest", path.display()))
            };
            Ok(Edge::new(lookup(a)?, lookup(b)?).with_weight(w))
        })
        .collect()
}

impl Bundle {
    pub fn load(dir: &Path) -> Result<Self> {
        let nodes = io::parse_manifest(&dir.join(MANIFEST))?;
        let mut edges = BTreeMap::new();
        for t in EdgeType::ALL {
            edges.insert(t, read_edges(dir, t, &nodes)?);
        }
        let graph = build_graph(
            nodes.n_docs(),
            nodes.n_words(),
            &edges[&EdgeType::DD],
            &edges[&EdgeType::WW],
            &edges[&EdgeType::DW],
        )
        .with_context(|| format!("building graph from {}", dir.display()))?;
        let features = io::read_sparse(&dir.join(FEATURES))?;
        if features.rows() != graph.n_nodes() {
            bail!(
                "{}: {} feature rows for {} nodes",
                dir.join(FEATURES).display(),
                features.rows(),
                graph.n_nodes()
            );
        }
        let vocab = io::read_vocabulary(&dir.join(VOCAB))?;
        if vocab.len() != graph.n_words() {
            bail!(
                "{}: {} phrases for {} word nodes",
                dir.join(VOCAB).display(),
                vocab.len(),
                graph.n_words()
            );
        }
        let docs = io::read_tokens(&dir.join(TOKENS))?;
        if docs.len() != graph.n_docs() || docs.iter().enumerate().any(|(i, d)| d.id != i) {
            bail!(
                "{}: expected documents 0..{} in order",
                dir.join(TOKENS).display(),
                graph.n_docs()
            );
        }
        let names = nodes.doc_labels();
        let mut classes: Vec<String> = names.iter().flatten().map(|s| s.to_string()).collect();
        classes.sort_unstable();
        classes.dedup();
        let labels = names
            .iter()
            .map(|l| l.map(|l| classes.binary_search_by(|c| c.as_str().cmp(l)).expect("class listed")))
            .collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            nodes,
            graph,
            features,
            vocab,
            docs,
            classes,
            labels,
        })
    }

    pub fn phrases(&self) -> Result<Vec<Phrase>> {
        Ok(FixedVocabulary::from_names(&self.vocab).mine(&self.docs)?)
    }

    pub fn dataset(&self) -> Result<Dataset> {
        Ok(Dataset::new(
            self.graph.clone(),
            self.features.clone(),
            self.labels.clone(),
        )?)
    }

    /// Dataset over this bundle with `refined`'s graph for the refined
    /// variants. Both bundles must describe the same nodes.
    pub fn dataset_with(&self, refined: Option<&Bundle>) -> Result<Dataset> {
        let ds = self.dataset()?;
        match refined {
            None => Ok(ds),
            Some(r) => {
                if r.nodes != self.nodes {
                    bail!(
                        "{} and {} have different manifests",
                        self.dir.display(),
                        r.dir.display()
                    );
                }
                Ok(ds.with_refined(r.graph.clone()))
            }
        }
    }
}

pub fn write_edges(dir: &Path, graph: &BiTypedGraph, t: EdgeType) -> Result<()> {
    let rows: Vec<(usize, usize, f64)> = graph
        .undirected_edges(t)
        .map(|e| (graph.joint_index(e.src), graph.joint_index(e.dst), e.weight))
        .collect();
    Ok(io::write_edge_list(&dir.join(edge_file(t)), &rows)?)
}

pub struct NewBundle<'a> {
    pub docs: &'a [Document],
    pub phrases: &'a [Phrase],
    pub graph: &'a BiTypedGraph,
    pub features: &'a CsrMatrix,
    pub labels: &'a [Option<String>],
    /// Original corpus id per document index.
    pub corpus_ids: &'a [usize],
}

pub fn write_bundle(dir: &Path, b: &NewBundle<'_>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let n_docs = b.graph.n_docs();
    let manifest: Vec<ManifestEntry> = (0..n_docs)
        .map(|d| ManifestEntry {
            id: d,
            kind: NodeKind::Document,
            label: b.labels[d].clone(),
        })
        .chain((0..b.graph.n_words()).map(|w| ManifestEntry {
            id: n_docs + w,
            kind: NodeKind::Word,
            label: None,
        }))
        .collect();
    io::write_manifest(&dir.join(MANIFEST), &manifest)?;
    for t in EdgeType::ALL {
        write_edges(dir, b.graph, t)?;
    }
    io::write_sparse(&dir.join(FEATURES), b.features)?;
    let names: Vec<String> = b.phrases.iter().map(Phrase::name).collect();
    io::write_vocabulary(&dir.join(VOCAB), &names)?;
    io::write_tokens(&dir.join(TOKENS), b.docs)?;
    let rows: Vec<Vec<String>> = b
        .corpus_ids
        .iter()
        .enumerate()
        .map(|(i, id)| vec![i.to_string(), id.to_string()])
        .collect();
    io::write_tsv(&dir.join(DOCUMENTS), &["index", "corpus_id"], &rows)?;
    Ok(())
}

/// Copies every bundle file except the listed edge files.
pub fn copy_bundle_except(src: &Path, dst: &Path, skip: &[EdgeType]) -> Result<()> {
    fs::create_dir_all(dst).with_context(|| format!("creating {}", dst.display()))?;
    let mut files: Vec<String> = vec![
        MANIFEST.into(),
        FEATURES.into(),
        VOCAB.into(),
        TOKENS.into(),
        DOCUMENTS.into(),
    ];
    files.extend(
        EdgeType::ALL
            .iter()
            .filter(|t| !skip.contains(t))
            .map(|&t| edge_file(t)),
    );
    for f in files {
        let from = src.join(&f);
        if !from.exists() && f == DOCUMENTS {
            continue;
        }
        if from != dst.join(&f) {
            fs::copy(&from, dst.join(&f)).with_context(|| format!("copying {}", from.display()))?;
        }
    }
    Ok(())
}
