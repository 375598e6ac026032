//! Similarity-driven edge refinement for the document and word sub-networks.
//!
//! Existing edges whose endpoint cosine similarity is below `t_low` are
//! trimmed; non-adjacent pairs whose similarity exceeds `t_high` are added.
//! Both comparisons are strict, so a pair sitting exactly on a threshold is
//! kept (if present) and not added (if absent).

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::embed::{cosine_unchecked, EmbedError, EmbeddingTable};
use crate::graph::{BiTypedGraph, Edge, EdgeType, GraphError};

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("invalid refinement thresholds: {0}")]
    InvalidConfig(String),
    #[error("edge type {0} cannot be refined")]
    UnsupportedEdgeType(EdgeType),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub t_high: f64,
    pub t_low: f64,
    /// Upper bound on edges added per node; `None` adds every qualifying pair.
    pub max_added_per_node: Option<usize>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            t_high: 0.95,
            t_low: 0.5,
            max_added_per_node: None,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        if !(self.t_high > 0.0 && self.t_high <= 1.0) {
            return Err(RefineError::InvalidConfig(format!(
                "t_high {} not in (0, 1]",
                self.t_high
            )));
        }
        if !(self.t_low >= 0.0 && self.t_low < 1.0) {
            return Err(RefineError::InvalidConfig(format!(
                "t_low {} not in [0, 1)",
                self.t_low
            )));
        }
        if self.t_low >= self.t_high {
            return Err(RefineError::InvalidConfig(format!(
                "t_low {} must be below t_high {}",
                self.t_low, self.t_high
            )));
        }
        Ok(())
    }
}

/// Refines an undirected edge set over nodes `0..n_nodes`.
///
/// `edges` may list either direction and may contain duplicates. The result
/// lists each undirected edge once as `(lo, hi)`, sorted.
///
/// With a per-node cap, candidate additions are visited in order of
/// descending similarity, ties broken by `(lo, hi)`, and accepted while both
/// endpoints have spare capacity.
pub fn refine_edges(
    n_nodes: usize,
    edges: &[(usize, usize)],
    table: &EmbeddingTable,
    cfg: &RefineConfig,
) -> Result<Vec<(usize, usize)>, RefineError> {
    cfg.validate()?;
    table.require(0..n_nodes)?;
    let vectors: Vec<&[f64]> = (0..n_nodes).map(|i| table.get(i).unwrap()).collect();

    let existing: BTreeSet<(usize, usize)> = edges
        .iter()
        .filter(|(a, b)| a != b)
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    for &(_, hi) in &existing {
        if hi >= n_nodes {
            return Err(EmbedError::MissingId(hi).into());
        }
    }

    let mut out: BTreeSet<(usize, usize)> = existing
        .iter()
        .copied()
        .filter(|&(a, b)| cosine_unchecked(vectors[a], vectors[b]) >= cfg.t_low)
        .collect();

    let mut candidates: Vec<(usize, usize, f64)> = (0..n_nodes)
        .into_par_iter()
        .flat_map_iter(|i| {
            let vectors = &vectors;
            let existing = &existing;
            (i + 1..n_nodes).filter_map(move |j| {
                if existing.contains(&(i, j)) {
                    return None;
                }
                let s = cosine_unchecked(vectors[i], vectors[j]);
                (s > cfg.t_high).then_some((i, j, s))
            })
        })
        .collect();

    match cfg.max_added_per_node {
        None => out.extend(candidates.iter().map(|&(a, b, _)| (a, b))),
        Some(cap) => {
            candidates.sort_by(|x, y| {
                y.2.partial_cmp(&x.2)
                    .expect("finite similarity")
                    .then((x.0, x.1).cmp(&(y.0, y.1)))
            });
            let mut added = vec![0usize; n_nodes];
            for (a, b, _) in candidates {
                if added[a] < cap && added[b] < cap {
                    added[a] += 1;
                    added[b] += 1;
                    out.insert((a, b));
                }
            }
        }
    }
    Ok(out.into_iter().collect())
}

/// Refines the DD or WW edge set of a graph, indices taken in that type's
/// own index space.
pub fn refine_graph(
    graph: &BiTypedGraph,
    t: EdgeType,
    table: &EmbeddingTable,
    cfg: &RefineConfig,
) -> Result<BiTypedGraph, RefineError> {
    let make: fn(usize, usize) -> Edge = match t {
        EdgeType::DD => Edge::dd,
        EdgeType::WW => Edge::ww,
        EdgeType::DW => return Err(RefineError::UnsupportedEdgeType(t)),
    };
    let pairs: Vec<(usize, usize)> = graph.undirected_edges(t).map(|e| (e.src.index, e.dst.index)).collect();
    let refined = refine_edges(graph.block_size(t), &pairs, table, cfg)?;
    let edges: Vec<Edge> = refined.into_iter().map(|(a, b)| make(a, b)).collect();
    Ok(graph.with_edges(t, &edges)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RefineReport {
    pub before: usize,
    pub after: usize,
    pub added: usize,
    pub removed: usize,
    pub retained: usize,
}

/// Edge-set difference counts between two undirected edge lists.
pub fn refine_report(before: &[(usize, usize)], after: &[(usize, usize)]) -> RefineReport {
    let canon =
        |v: &[(usize, usize)]| -> BTreeSet<(usize, usize)> { v.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect() };
    let (b, a) = (canon(before), canon(after));
    let retained = b.intersection(&a).count();
    RefineReport {
        before: b.len(),
        after: a.len(),
        added: a.len() - retained,
        removed: b.len() - retained,
        retained,
    }
}

/// Per-type reports for two graphs over the same nodes.
pub fn graph_report(before: &BiTypedGraph, after: &BiTypedGraph, t: EdgeType) -> RefineReport {
    let pairs = |g: &BiTypedGraph| -> Vec<(usize, usize)> {
        g.undirected_edges(t)
            .map(|e| (g.joint_index(e.src), g.joint_index(e.dst)))
            .collect()
    };
    refine_report(&pairs(before), &pairs(after))
}
