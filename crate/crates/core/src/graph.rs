//! Bi-typed document/word graph and per-type renormalized adjacency.
//!
//! Documents and words live in separate dense index spaces. The joint node
//! space used by the model orders all documents first, then all words.
//!
//! Every edge type keeps its own symmetric edge set. Self-loops are never
//! stored; they are added only by [`normalize`], which computes
//! `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the row sums of `A + I`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Document,
    Word,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Document => "doc",
            NodeKind::Word => "word",
        }
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "doc" | "document" | "d" => Ok(NodeKind::Document),
            "word" | "phrase" | "w" => Ok(NodeKind::Word),
            other => Err(format!("unknown node kind `{other}`")),
        }
    }
}

/// A node reference: kind plus index within that kind's index space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: usize,
}

impl NodeId {
    pub fn doc(index: usize) -> Self {
        Self {
            kind: NodeKind::Document,
            index,
        }
    }

    pub fn word(index: usize) -> Self {
        Self {
            kind: NodeKind::Word,
            index,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeType {
    /// Document to document (citations).
    DD,
    /// Word to word (shared constituent words).
    WW,
    /// Document to word (inclusion).
    DW,
}

impl EdgeType {
    pub const ALL: [EdgeType; 3] = [EdgeType::DD, EdgeType::WW, EdgeType::DW];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::DD => "dd",
            EdgeType::WW => "ww",
            EdgeType::DW => "dw",
        }
    }

    fn slot(self) -> usize {
        match self {
            EdgeType::DD => 0,
            EdgeType::WW => 1,
            EdgeType::DW => 2,
        }
    }

    fn accepts(self, a: NodeKind, b: NodeKind) -> bool {
        use NodeKind::*;
        match self {
            EdgeType::DD => a == Document && b == Document,
            EdgeType::WW => a == Word && b == Word,
            EdgeType::DW => a != b,
        }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dd" => Ok(EdgeType::DD),
            "ww" => Ok(EdgeType::WW),
            "dw" | "wd" => Ok(EdgeType::DW),
            other => Err(format!("unknown edge type `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub weight: f64,
}

impl Edge {
    pub fn new(src: NodeId, dst: NodeId) -> Self {
        Self { src, dst, weight: 1.0 }
    }

    pub fn dd(a: usize, b: usize) -> Self {
        Self::new(NodeId::doc(a), NodeId::doc(b))
    }

    pub fn ww(a: usize, b: usize) -> Self {
        Self::new(NodeId::word(a), NodeId::word(b))
    }

    pub fn dw(doc: usize, word: usize) -> Self {
        Self::new(NodeId::doc(doc), NodeId::word(word))
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    fn reversed(self) -> Self {
        Self {
            src: self.dst,
            dst: self.src,
            weight: self.weight,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("node {node} out of range (only {limit} nodes of that kind)")]
    IndexOutOfRange { node: NodeId, limit: usize },
    #[error("edge {src} -> {dst} does not fit edge type {edge_type}")]
    KindMismatch {
        edge_type: EdgeType,
        src: NodeId,
        dst: NodeId,
    },
    #[error("edge {src} -> {dst} has invalid weight {weight}")]
    InvalidWeight { src: NodeId, dst: NodeId, weight: f64 },
    #[error("edge type {0} has no nodes to normalize over")]
    EmptyType(EdgeType),
}

/// Documents, words, and three symmetric typed edge sets.
#[derive(Debug, Clone, PartialEq)]
pub struct BiTypedGraph {
    n_docs: usize,
    n_words: usize,
    // Both directions of every edge, sorted by (src, dst), no duplicates.
    edges: [Vec<Edge>; 3],
}

/// Builds a graph from per-type edge lists.
///
/// Edges are closed under symmetry and deduplicated per type; when the same
/// pair appears more than once the first weight wins. Self-loops in the input
/// are dropped.
pub fn build_graph(
    n_docs: usize,
    n_words: usize,
    dd: &[Edge],
    ww: &[Edge],
    dw: &[Edge],
) -> Result<BiTypedGraph, GraphError> {
    let mut graph = BiTypedGraph {
        n_docs,
        n_words,
        edges: [Vec::new(), Vec::new(), Vec::new()],
    };
    graph.set_edges(EdgeType::DD, dd)?;
    graph.set_edges(EdgeType::WW, ww)?;
    graph.set_edges(EdgeType::DW, dw)?;
    Ok(graph)
}

impl BiTypedGraph {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn n_nodes(&self) -> usize {
        self.n_docs + self.n_words
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        match kind {
            NodeKind::Document => self.n_docs,
            NodeKind::Word => self.n_words,
        }
    }

    /// Position of a node in the joint (documents, then words) index space.
    pub fn joint_index(&self, node: NodeId) -> usize {
        match node.kind {
            NodeKind::Document => node.index,
            NodeKind::Word => self.n_docs + node.index,
        }
    }

    /// All stored directed edges of a type, both directions included.
    pub fn edges(&self, t: EdgeType) -> &[Edge] {
        &self.edges[t.slot()]
    }

    /// One direction per undirected edge: `src < dst` for DD/WW, document
    /// first for DW.
    pub fn undirected_edges(&self, t: EdgeType) -> impl Iterator<Item = &Edge> + '_ {
        self.edges(t).iter().filter(|e| e.src < e.dst)
    }

    pub fn undirected_count(&self, t: EdgeType) -> usize {
        self.edges(t).len() / 2
    }

    pub fn has_edge(&self, t: EdgeType, a: NodeId, b: NodeId) -> bool {
        self.edges(t).binary_search_by(|e| (e.src, e.dst).cmp(&(a, b))).is_ok()
    }

    /// Returns a copy with the edge set of one type replaced.
    pub fn with_edges(&self, t: EdgeType, edges: &[Edge]) -> Result<Self, GraphError> {
        let mut out = self.clone();
        out.set_edges(t, edges)?;
        Ok(out)
    }

    fn set_edges(&mut self, t: EdgeType, input: &[Edge]) -> Result<(), GraphError> {
        let mut list = Vec::with_capacity(input.len() * 2);
        for &e in input {
            for node in [e.src, e.dst] {
                let limit = self.count(node.kind);
                if node.index >= limit {
                    return Err(GraphError::IndexOutOfRange { node, limit });
                }
            }
            if !t.accepts(e.src.kind, e.dst.kind) {
                return Err(GraphError::KindMismatch {
                    edge_type: t,
                    src: e.src,
                    dst: e.dst,
                });
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(GraphError::InvalidWeight {
                    src: e.src,
                    dst: e.dst,
                    weight: e.weight,
                });
            }
            if e.src == e.dst {
                continue;
            }
            list.push(e);
            list.push(e.reversed());
        }
        // Stable sort: the first input edge naming a pair supplies the weight
        // for both directions.
        list.sort_by_key(|e| (e.src, e.dst));
        list.dedup_by(|later, earlier| (later.src, later.dst) == (earlier.src, earlier.dst));
        self.edges[t.slot()] = list;
        Ok(())
    }

    /// Number of rows of the block `normalize` works on for type `t`.
    pub fn block_size(&self, t: EdgeType) -> usize {
        match t {
            EdgeType::DD => self.n_docs,
            EdgeType::WW => self.n_words,
            EdgeType::DW => self.n_nodes(),
        }
    }

    fn block_index(&self, t: EdgeType, node: NodeId) -> usize {
        match t {
            EdgeType::DD | EdgeType::WW => node.index,
            EdgeType::DW => self.joint_index(node),
        }
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` for one edge type.
///
/// DD and WW operate on their own block (`n_docs` or `n_words` square); DW
/// operates on the joint square matrix over documents and words.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub edge_type: EdgeType,
    pub matrix: CsrMatrix,
}

impl NormalizedAdjacency {
    pub fn size(&self) -> usize {
        self.matrix.rows()
    }
}

pub fn normalize(graph: &BiTypedGraph, t: EdgeType) -> Result<NormalizedAdjacency, GraphError> {
    let n = graph.block_size(t);
    if n == 0 {
        return Err(GraphError::EmptyType(t));
    }
    let mut degree = vec![1.0f64; n];
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(graph.edges(t).len() + n);
    for e in graph.edges(t) {
        let (i, j) = (graph.block_index(t, e.src), graph.block_index(t, e.dst));
        degree[i] += e.weight;
        triplets.push((i, j, e.weight));
    }
    triplets.extend((0..n).map(|i| (i, i, 1.0)));
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    for (i, j, v) in &mut triplets {
        *v *= inv_sqrt[*i] * inv_sqrt[*j];
    }
    Ok(NormalizedAdjacency {
        edge_type: t,
        matrix: CsrMatrix::from_triplets(n, n, &triplets),
    })
}

/// The type-`t` operator lifted to the joint node space.
///
/// Nodes outside the type's block keep only their self-loop (entry 1.0), so
/// a DD operator leaves word rows untouched and vice versa.
pub fn joint_operator(graph: &BiTypedGraph, t: EdgeType) -> Result<CsrMatrix, GraphError> {
    let n = graph.n_nodes();
    if t == EdgeType::DW {
        return normalize(graph, t).map(|a| a.matrix);
    }
    let offset = match t {
        EdgeType::DD => 0,
        _ => graph.n_docs(),
    };
    let block_len = graph.block_size(t);
    let mut triplets = Vec::new();
    if block_len > 0 {
        let block = normalize(graph, t)?;
        triplets.extend(block.matrix.iter().map(|(r, c, v)| (r + offset, c + offset, v)));
    }
    for i in (0..n).filter(|&i| i < offset || i >= offset + block_len) {
        triplets.push((i, i, 1.0));
    }
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeStats {
    pub nodes: usize,
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub isolated: usize,
}

/// Unweighted degree summary per edge type, over that type's node block.
pub fn degree_stats(graph: &BiTypedGraph) -> BTreeMap<EdgeType, DegreeStats> {
    EdgeType::ALL
        .iter()
        .map(|&t| {
            let n = graph.block_size(t);
            let mut deg = vec![0usize; n];
            for e in graph.edges(t) {
                deg[graph.block_index(t, e.src)] += 1;
            }
            let stats = DegreeStats {
                nodes: n,
                min: deg.iter().copied().min().unwrap_or(0),
                max: deg.iter().copied().max().unwrap_or(0),
                mean: if n == 0 {
                    0.0
                } else {
                    deg.iter().sum::<usize>() as f64 / n as f64
                },
                isolated: deg.iter().filter(|&&d| d == 0).count(),
            };
            (t, stats)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn dense_oracle(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
        let mut a = Array2::<f64>::eye(n);
        for &(u, v) in edges {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        let d: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
        Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (d[i] * d[j]).sqrt())
    }

    #[test]
    fn symmetry_closure() {
        let g = build_graph(2, 0, &[Edge::dd(0, 1)], &[], &[]).unwrap();
        let pairs: Vec<_> = g
            .edges(EdgeType::DD)
            .iter()
            .map(|e| (e.src.index, e.dst.index))
            .collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn duplicates_collapse() {
        let g = build_graph(2, 0, &[Edge::dd(0, 1), Edge::dd(1, 0), Edge::dd(0, 1)], &[], &[]).unwrap();
        assert_eq!(g.undirected_count(EdgeType::DD), 1);
    }

    #[test]
    fn rejects_bad_endpoints() {
        let err = build_graph(2, 1, &[Edge::dd(0, 2)], &[], &[]).unwrap_err();
        assert!(matches!(err, GraphError::IndexOutOfRange { .. }));
        let err = build_graph(2, 1, &[Edge::dw(0, 0)], &[], &[]).unwrap_err();
        assert_eq!(
            err,
            GraphError::KindMismatch {
                edge_type: EdgeType::DD,
                src: NodeId::doc(0),
                dst: NodeId::word(0)
            }
        );
        assert!(build_graph(2, 1, &[], &[], &[Edge::dd(0, 1)]).is_err());
    }

    #[test]
    fn isolated_node_keeps_unit_self_loop() {
        let g = build_graph(3, 0, &[Edge::dd(0, 1)], &[], &[]).unwrap();
        let a = normalize(&g, EdgeType::DD).unwrap();
        assert_eq!(a.matrix.get(2, 2), 1.0);
    }

    #[test]
    fn path_graph_entry() {
        let g = build_graph(3, 0, &[Edge::dd(0, 1), Edge::dd(1, 2)], &[], &[]).unwrap();
        let a = normalize(&g, EdgeType::DD).unwrap();
        assert!((a.matrix.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((a.matrix.get(0, 1) - 0.40825).abs() < 1e-5);
        let oracle = dense_oracle(3, &[(0, 1), (1, 2)]);
        let diff = (&a.matrix.to_dense() - &oracle).mapv(f64::abs);
        assert!(diff.iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn dw_normalizes_on_joint_space() {
        let g = build_graph(2, 2, &[], &[], &[Edge::dw(0, 0), Edge::dw(1, 0), Edge::dw(1, 1)]).unwrap();
        let a = normalize(&g, EdgeType::DW).unwrap();
        assert_eq!(a.size(), 4);
        // joint order: d0, d1, w0, w1
        let oracle = dense_oracle(4, &[(0, 2), (1, 2), (1, 3)]);
        let diff = (&a.matrix.to_dense() - &oracle).mapv(f64::abs);
        assert!(diff.iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn joint_operator_is_identity_outside_block() {
        let g = build_graph(2, 2, &[Edge::dd(0, 1)], &[], &[]).unwrap();
        let op = joint_operator(&g, EdgeType::DD).unwrap().to_dense();
        assert_eq!(op[[2, 2]], 1.0);
        assert_eq!(op[[3, 3]], 1.0);
        assert!((op[[0, 1]] - 0.5).abs() < 1e-15);
        let ww = joint_operator(&g, EdgeType::WW).unwrap().to_dense();
        assert_eq!(ww, Array2::eye(4));
    }

    #[test]
    fn empty_type_cannot_normalize() {
        let g = build_graph(2, 0, &[], &[], &[]).unwrap();
        assert_eq!(
            normalize(&g, EdgeType::WW).unwrap_err(),
            GraphError::EmptyType(EdgeType::WW)
        );
    }

    #[test]
    fn degree_summary() {
        let g = build_graph(3, 0, &[Edge::dd(0, 1), Edge::dd(1, 2)], &[], &[]).unwrap();
        let stats = degree_stats(&g);
        assert_eq!(stats[&EdgeType::DD].max, 2);
        assert_eq!(stats[&EdgeType::DD].min, 1);
        assert_eq!(stats[&EdgeType::WW].mean, 0.0);
        assert_eq!(stats[&EdgeType::WW].nodes, 0);
    }

    #[test]
    fn weights_are_consistent_in_both_directions() {
        let g = build_graph(
            2,
            0,
            &[Edge::dd(1, 0).with_weight(2.0), Edge::dd(0, 1).with_weight(3.0)],
            &[],
            &[],
        )
        .unwrap();
        let w: Vec<f64> = g.edges(EdgeType::DD).iter().map(|e| e.weight).collect();
        assert_eq!(w[0], w[1]);
    }
}
