//! Bi-typed text graph construction, similarity-based edge refinement, and a
//! joint-convolution GCN for semi-supervised document classification.
//!
//! The pipeline: tokenize a corpus and mine a phrase vocabulary ([`corpus`]),
//! assemble the document/word graph ([`graph`]), optionally trim and extend
//! its document and word edges by embedding similarity ([`embed`],
//! [`refine`]), then train the model ([`model`], [`train`]) on the
//! reverse-mode core in [`nn`].

pub mod corpus;
pub mod embed;
pub mod graph;
pub mod io;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod refine;
pub mod sparse;
pub mod synthetic;
pub mod train;

pub use corpus::{Document, Phrase};
pub use embed::EmbeddingTable;
pub use graph::{build_graph, normalize, BiTypedGraph, Edge, EdgeType, NodeId, NodeKind, NormalizedAdjacency};
pub use model::{Aggregation, GcnBaseline, JointGcn, ModelConfig, NodeClassifier};
pub use nn::{Adam, Matrix, ParamSet, Tape, Var};
pub use refine::{RefineConfig, RefineReport};
pub use sparse::CsrMatrix;
