//! Joint-convolution GCN over the bi-typed graph, and the plain two-layer GCN
//! baseline on the document sub-network.
//!
//! A joint layer runs one GCN per edge type over the joint node space
//! (documents, then words), producing messages `H_DD`, `H_WW`, `H_DW`, then
//! merges them with an [`Aggregation`]:
//!
//! * `Mean`: every node averages two slots. For documents the slots are
//!   `H_DD` and `(H_DW + H_WW) / 2`; for words they are `H_WW` and `H_DW`.
//! * `MeanOf(types)`: plain elementwise mean of the listed messages.
//! * `Concat`: `[H_DD | H_WW | H_DW]` projected back to the layer width.
//! * `Attention`: per head, `a = softmax(act([s1 | s2] ρ))` weights the two
//!   slots, `a_1 s1 + a_2 s2`; heads are concatenated and projected back to
//!   the layer width.
//!
//! The first layer is followed by ReLU. The second layer emits class logits;
//! [`predict`] applies the row softmax.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{joint_operator, normalize, BiTypedGraph, EdgeType, GraphError};
use crate::nn::{softmax_rows, Matrix, NnError, ParamSet, Tape, Var};
use crate::sparse::CsrMatrix;

pub const LAYERS: usize = 2;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("parameter `{0}` is missing")]
    MissingParam(String),
    #[error("input mismatch: {0}")]
    InputMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Aggregation {
    Mean,
    MeanOf(Vec<EdgeType>),
    Concat,
    Attention,
}

impl Aggregation {
    pub fn as_str(&self) -> String {
        match self {
            Aggregation::Mean => "mean".into(),
            Aggregation::MeanOf(ts) => {
                let names: Vec<&str> = ts.iter().map(|t| t.as_str()).collect();
                format!("mean:{}", names.join("+"))
            }
            Aggregation::Concat => "concat".into(),
            Aggregation::Attention => "attention".into(),
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "concat" => Ok(Aggregation::Concat),
            "attention" | "attn" => Ok(Aggregation::Attention),
            other => {
                let Some(list) = other.strip_prefix("mean:") else {
                    return Err(format!("unknown aggregation `{other}`"));
                };
                let types = list
                    .split('+')
                    .map(|t| t.parse::<EdgeType>())
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Aggregation::MeanOf(types))
            }
        }
    }
}

/// Nonlinearity applied to the attention scores before the softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreActivation {
    Linear,
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    /// Number of classes.
    pub out_dim: usize,
    pub aggregation: Aggregation,
    pub heads: usize,
    pub dropout: f64,
    pub score_activation: ScoreActivation,
}

impl ModelConfig {
    pub fn new(hidden_dim: usize, out_dim: usize) -> Self {
        Self {
            hidden_dim,
            out_dim,
            aggregation: Aggregation::Mean,
            heads: 4,
            dropout: 0.5,
            score_activation: ScoreActivation::Tanh,
        }
    }

    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_dim == 0 || self.out_dim == 0 {
            return Err(ModelError::InvalidConfig("layer widths must be positive".into()));
        }
        if self.aggregation == Aggregation::Attention && self.heads < 1 {
            return Err(ModelError::InvalidConfig("attention needs at least one head".into()));
        }
        if let Aggregation::MeanOf(ts) = &self.aggregation {
            if ts.is_empty() {
                return Err(ModelError::InvalidConfig("mean over an empty message set".into()));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout {} not in [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Attention weights of one head in one layer: an `n × 2` node whose rows
/// weight the two message slots.
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights {
    pub layer: usize,
    pub head: usize,
    pub weights: Var,
}

pub struct ModelOutput {
    pub logits: Var,
    pub attention: Vec<AttentionWeights>,
}

/// A transductive node classifier whose output rows start with the
/// documents, in document index order.
pub trait NodeClassifier: Sync {
    fn n_classes(&self) -> usize;
    fn init_params(&self, rng: &mut ChaCha8Rng) -> ParamSet;
    /// `dropout` is `Some` during training.
    fn forward(
        &self,
        tape: &mut Tape,
        params: &BTreeMap<String, Var>,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<ModelOutput, ModelError>;
}

/// Class distribution per output row (no dropout).
pub fn predict<M: NodeClassifier + ?Sized>(model: &M, params: &ParamSet) -> Result<Matrix, ModelError> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let out = model.forward(&mut tape, &vars, None)?;
    Ok(softmax_rows(tape.value(out.logits)))
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

/// Layer input: the sparse feature matrix or a dense node.
#[derive(Clone)]
pub enum LayerInput {
    Sparse(Arc<CsrMatrix>),
    Dense(Var),
}

impl LayerInput {
    fn rows(&self, tape: &Tape) -> usize {
        match self {
            LayerInput::Sparse(m) => m.rows(),
            LayerInput::Dense(v) => tape.shape(*v).0,
        }
    }

    /// `input · weight`.
    fn project(&self, tape: &mut Tape, weight: Var) -> Result<Var, NnError> {
        match self {
            LayerInput::Sparse(m) => tape.spmm(m, weight),
            LayerInput::Dense(v) => tape.matmul(*v, weight),
        }
    }

    /// Inverted dropout at rate `p`.
    fn dropout(self, tape: &mut Tape, p: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Self, NnError> {
        let Some(rng) = rng else { return Ok(self) };
        if p == 0.0 {
            return Ok(self);
        }
        let keep = 1.0 / (1.0 - p);
        match self {
            LayerInput::Sparse(m) => Ok(LayerInput::Sparse(Arc::new(m.map_values(|_, _, v| {
                if rng.random::<f64>() < p {
                    0.0
                } else {
                    v * keep
                }
            })))),
            LayerInput::Dense(v) => {
                let mask =
                    Array2::from_shape_simple_fn(tape.shape(v), || if rng.random::<f64>() < p { 0.0 } else { keep });
                Ok(LayerInput::Dense(tape.mul_const(v, Arc::new(mask))?))
            }
        }
    }
}

/// One per-type GCN message: `Â_t · h · W_t`.
pub fn gcn_sublayer(tape: &mut Tape, h: &LayerInput, adj: &Arc<CsrMatrix>, weight: Var) -> Result<Var, ModelError> {
    let rows = h.rows(tape);
    if adj.cols() != rows {
        return Err(ModelError::InputMismatch(format!(
            "operator is {}x{} but input has {rows} rows",
            adj.rows(),
            adj.cols()
        )));
    }
    let hw = h.project(tape, weight)?;
    Ok(tape.spmm(adj, hw)?)
}

/// Parameters an aggregation step reads, by role.
pub struct AggregationParams<'a> {
    pub concat_proj: Option<Var>,
    pub rho: &'a [Var],
    pub attention_proj: Option<Var>,
    pub score_activation: ScoreActivation,
}

/// Row indicators for documents and words in the joint node space.
#[derive(Clone)]
pub struct KindMasks {
    pub docs: Arc<Vec<f64>>,
    pub words: Arc<Vec<f64>>,
}

impl KindMasks {
    pub fn new(n_docs: usize, n_words: usize) -> Self {
        let docs: Vec<f64> = (0..n_docs + n_words)
            .map(|i| if i < n_docs { 1.0 } else { 0.0 })
            .collect();
        let words: Vec<f64> = docs.iter().map(|d| 1.0 - d).collect();
        Self {
            docs: Arc::new(docs),
            words: Arc::new(words),
        }
    }
}

fn message(messages: &BTreeMap<EdgeType, Var>, t: EdgeType) -> Result<Var, ModelError> {
    messages
        .get(&t)
        .copied()
        .ok_or_else(|| ModelError::InputMismatch(format!("missing {t} message")))
}

/// The two attention slots per node.
fn two_slots(tape: &mut Tape, messages: &BTreeMap<EdgeType, Var>, masks: &KindMasks) -> Result<(Var, Var), ModelError> {
    let (hd, hw, hdw) = (
        message(messages, EdgeType::DD)?,
        message(messages, EdgeType::WW)?,
        message(messages, EdgeType::DW)?,
    );
    let d_part = tape.scale_rows(hd, Arc::clone(&masks.docs))?;
    let w_part = tape.scale_rows(hw, Arc::clone(&masks.words))?;
    let s1 = tape.add(d_part, w_part)?;
    let mixed = tape.mean(&[hdw, hw])?;
    let d_part = tape.scale_rows(mixed, Arc::clone(&masks.docs))?;
    let w_part = tape.scale_rows(hdw, Arc::clone(&masks.words))?;
    let s2 = tape.add(d_part, w_part)?;
    Ok((s1, s2))
}

/// Merges per-type messages. Returns the merged node and, in attention mode,
/// the per-head slot weights.
pub fn aggregate(
    tape: &mut Tape,
    messages: &BTreeMap<EdgeType, Var>,
    params: &AggregationParams<'_>,
    mode: &Aggregation,
    masks: &KindMasks,
) -> Result<(Var, Vec<Var>), ModelError> {
    let shapes: Vec<_> = messages.values().map(|&v| tape.shape(v)).collect();
    if shapes.windows(2).any(|w| w[0] != w[1]) {
        return Err(ModelError::InputMismatch(format!("message shapes differ: {shapes:?}")));
    }
    match mode {
        Aggregation::Mean => {
            let (s1, s2) = two_slots(tape, messages, masks)?;
            Ok((tape.mean(&[s1, s2])?, Vec::new()))
        }
        Aggregation::MeanOf(types) => {
            let parts = types
                .iter()
                .map(|&t| message(messages, t))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((tape.mean(&parts)?, Vec::new()))
        }
        Aggregation::Concat => {
            let parts = EdgeType::ALL
                .iter()
                .map(|&t| message(messages, t))
                .collect::<Result<Vec<_>, _>>()?;
            let cat = tape.concat_cols(&parts)?;
            let proj = params
                .concat_proj
                .ok_or_else(|| ModelError::MissingParam("concat projection".into()))?;
            Ok((tape.matmul(cat, proj)?, Vec::new()))
        }
        Aggregation::Attention => {
            if params.rho.is_empty() {
                return Err(ModelError::InvalidConfig("attention needs at least one head".into()));
            }
            let (s1, s2) = two_slots(tape, messages, masks)?;
            let pair = tape.concat_cols(&[s1, s2])?;
            let mut heads = Vec::with_capacity(params.rho.len());
            let mut weights = Vec::with_capacity(params.rho.len());
            for &rho in params.rho {
                let mut scores = tape.matmul(pair, rho)?;
                if params.score_activation == ScoreActivation::Tanh {
                    scores = tape.tanh(scores)?;
                }
                let a = tape.softmax_rows(scores)?;
                let a1 = tape.slice_cols(a, 0, 1)?;
                let a2 = tape.slice_cols(a, 1, 1)?;
                let w1 = tape.mul_column(s1, a1)?;
                let w2 = tape.mul_column(s2, a2)?;
                heads.push(tape.add(w1, w2)?);
                weights.push(a);
            }
            let cat = tape.concat_cols(&heads)?;
            let proj = params
                .attention_proj
                .ok_or_else(|| ModelError::MissingParam("attention projection".into()))?;
            Ok((tape.matmul(cat, proj)?, weights))
        }
    }
}

/// Constant inputs of the joint model.
#[derive(Debug, Clone)]
pub struct JointInputs {
    /// `n_nodes × in_dim`, documents first.
    pub features: Arc<CsrMatrix>,
    /// One `n_nodes × n_nodes` operator per edge type.
    pub operators: BTreeMap<EdgeType, Arc<CsrMatrix>>,
    pub n_docs: usize,
    pub n_words: usize,
}

impl JointInputs {
    pub fn from_graph(graph: &BiTypedGraph, features: CsrMatrix) -> Result<Self, ModelError> {
        if features.rows() != graph.n_nodes() {
            return Err(ModelError::InputMismatch(format!(
                "features have {} rows, graph has {} nodes",
                features.rows(),
                graph.n_nodes()
            )));
        }
        let operators = EdgeType::ALL
            .iter()
            .map(|&t| Ok((t, Arc::new(joint_operator(graph, t)?))))
            .collect::<Result<BTreeMap<_, _>, GraphError>>()?;
        Ok(Self {
            features: Arc::new(features),
            operators,
            n_docs: graph.n_docs(),
            n_words: graph.n_words(),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.features.cols()
    }
}

fn layer_name(layer: usize, part: &str) -> String {
    format!("layer{layer}.{part}")
}

/// The joint-convolution model.
pub struct JointGcn {
    cfg: ModelConfig,
    inputs: JointInputs,
    masks: KindMasks,
}

impl JointGcn {
    pub fn new(cfg: ModelConfig, inputs: JointInputs) -> Result<Self, ModelError> {
        cfg.validate()?;
        let masks = KindMasks::new(inputs.n_docs, inputs.n_words);
        Ok(Self { cfg, inputs, masks })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn inputs(&self) -> &JointInputs {
        &self.inputs
    }

    fn dims(&self, layer: usize) -> (usize, usize) {
        match layer {
            1 => (self.inputs.in_dim(), self.cfg.hidden_dim),
            _ => (self.cfg.hidden_dim, self.cfg.out_dim),
        }
    }

    fn get(params: &BTreeMap<String, Var>, name: &str) -> Result<Var, ModelError> {
        params
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::MissingParam(name.to_string()))
    }

    fn layer(
        &self,
        tape: &mut Tape,
        params: &BTreeMap<String, Var>,
        layer: usize,
        input: &LayerInput,
    ) -> Result<(Var, Vec<Var>), ModelError> {
        let mut messages = BTreeMap::new();
        for t in EdgeType::ALL {
            let w = Self::get(params, &layer_name(layer, &format!("gcn.{t}")))?;
            messages.insert(t, gcn_sublayer(tape, input, &self.inputs.operators[&t], w)?);
        }
        let concat_proj = match self.cfg.aggregation {
            Aggregation::Concat => Some(Self::get(params, &layer_name(layer, "concat.proj"))?),
            _ => None,
        };
        let (rho, attention_proj) = match self.cfg.aggregation {
            Aggregation::Attention => {
                let rho = (0..self.cfg.heads)
                    .map(|k| Self::get(params, &layer_name(layer, &format!("attn.rho.{k}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                (rho, Some(Self::get(params, &layer_name(layer, "attn.proj"))?))
            }
            _ => (Vec::new(), None),
        };
        let agg = AggregationParams {
            concat_proj,
            rho: &rho,
            attention_proj,
            score_activation: self.cfg.score_activation,
        };
        aggregate(tape, &messages, &agg, &self.cfg.aggregation, &self.masks)
    }
}

impl NodeClassifier for JointGcn {
    fn n_classes(&self) -> usize {
        self.cfg.out_dim
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> ParamSet {
        let mut p = ParamSet::new();
        for layer in 1..=LAYERS {
            let (d_in, d_out) = self.dims(layer);
            for t in EdgeType::ALL {
                p.insert(layer_name(layer, &format!("gcn.{t}")), glorot(d_in, d_out, rng));
            }
            match self.cfg.aggregation {
                Aggregation::Concat => {
                    p.insert(layer_name(layer, "concat.proj"), glorot(3 * d_out, d_out, rng));
                }
                Aggregation::Attention => {
                    for k in 0..self.cfg.heads {
                        p.insert(layer_name(layer, &format!("attn.rho.{k}")), glorot(2 * d_out, 2, rng));
                    }
                    p.insert(
                        layer_name(layer, "attn.proj"),
                        glorot(self.cfg.heads * d_out, d_out, rng),
                    );
                }
                _ => {}
            }
        }
        p
    }

    fn forward(
        &self,
        tape: &mut Tape,
        params: &BTreeMap<String, Var>,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<ModelOutput, ModelError> {
        let p = self.cfg.dropout;
        let x = LayerInput::Sparse(Arc::clone(&self.inputs.features)).dropout(tape, p, dropout.as_deref_mut())?;
        let (h1, att1) = self.layer(tape, params, 1, &x)?;
        let h1 = tape.relu(h1)?;
        let h1 = LayerInput::Dense(h1).dropout(tape, p, dropout)?;
        let (logits, att2) = self.layer(tape, params, 2, &h1)?;

        let attention = att1
            .into_iter()
            .enumerate()
            .map(|(head, weights)| AttentionWeights {
                layer: 1,
                head,
                weights,
            })
            .chain(att2.into_iter().enumerate().map(|(head, weights)| AttentionWeights {
                layer: 2,
                head,
                weights,
            }))
            .collect();
        Ok(ModelOutput { logits, attention })
    }
}

/// Constant inputs of the baseline: document features and the renormalized
/// document adjacency.
#[derive(Debug, Clone)]
pub struct GcnInputs {
    pub features: Arc<CsrMatrix>,
    pub adjacency: Arc<CsrMatrix>,
}

impl GcnInputs {
    /// Uses the first `n_docs` rows of `features` (joint features carry
    /// documents first).
    pub fn from_graph(graph: &BiTypedGraph, features: &CsrMatrix) -> Result<Self, ModelError> {
        if features.rows() < graph.n_docs() {
            return Err(ModelError::InputMismatch(format!(
                "features have {} rows, need {} documents",
                features.rows(),
                graph.n_docs()
            )));
        }
        let rows: Vec<usize> = (0..graph.n_docs()).collect();
        Ok(Self {
            features: Arc::new(features.select_rows(&rows)),
            adjacency: Arc::new(normalize(graph, EdgeType::DD)?.matrix),
        })
    }
}

/// `softmax(Â ReLU(Â X W⁰) W¹)` on the document sub-network.
pub struct GcnBaseline {
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub dropout: f64,
    inputs: GcnInputs,
}

impl GcnBaseline {
    pub const W0: &'static str = "gcn.w0";
    pub const W1: &'static str = "gcn.w1";

    pub fn new(hidden_dim: usize, out_dim: usize, dropout: f64, inputs: GcnInputs) -> Result<Self, ModelError> {
        if hidden_dim == 0 || out_dim == 0 {
            return Err(ModelError::InvalidConfig("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(ModelError::InvalidConfig(format!("dropout {dropout} not in [0, 1)")));
        }
        Ok(Self {
            hidden_dim,
            out_dim,
            dropout,
            inputs,
        })
    }
}

impl NodeClassifier for GcnBaseline {
    fn n_classes(&self) -> usize {
        self.out_dim
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert(Self::W0, glorot(self.inputs.features.cols(), self.hidden_dim, rng));
        p.insert(Self::W1, glorot(self.hidden_dim, self.out_dim, rng));
        p
    }

    fn forward(
        &self,
        tape: &mut Tape,
        params: &BTreeMap<String, Var>,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<ModelOutput, ModelError> {
        let w0 = JointGcn::get(params, Self::W0)?;
        let w1 = JointGcn::get(params, Self::W1)?;
        let x = LayerInput::Sparse(Arc::clone(&self.inputs.features)).dropout(
            tape,
            self.dropout,
            dropout.as_deref_mut(),
        )?;
        let h = gcn_sublayer(tape, &x, &self.inputs.adjacency, w0)?;
        let h = tape.relu(h)?;
        let h = LayerInput::Dense(h).dropout(tape, self.dropout, dropout)?;
        let logits = gcn_sublayer(tape, &h, &self.inputs.adjacency, w1)?;
        Ok(ModelOutput {
            logits,
            attention: Vec::new(),
        })
    }
}

/// Forward pass returning `Z` directly: joint model.
pub fn joint_forward(model: &JointGcn, params: &ParamSet) -> Result<Matrix, ModelError> {
    predict(model, params)
}

/// Forward pass returning `Z` directly: baseline.
pub fn gcn_baseline_forward(model: &GcnBaseline, params: &ParamSet) -> Result<Matrix, ModelError> {
    predict(model, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, Edge};
    use rand::SeedableRng;

    fn toy_graph() -> BiTypedGraph {
        build_graph(
            3,
            2,
            &[Edge::dd(0, 1), Edge::dd(1, 2)],
            &[Edge::ww(0, 1)],
            &[Edge::dw(0, 0), Edge::dw(2, 1)],
        )
        .unwrap()
    }

    fn identity_features(n: usize) -> CsrMatrix {
        CsrMatrix::identity(n)
    }

    #[test]
    fn edgeless_type_with_identity_weight_is_passthrough() {
        let g = build_graph(2, 1, &[], &[], &[]).unwrap();
        let adj = Arc::new(joint_operator(&g, EdgeType::DD).unwrap());
        let mut tape = Tape::new();
        let h0 = ndarray::array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let h = tape.constant(h0.clone());
        let w = tape.param(Matrix::eye(2));
        let out = gcn_sublayer(&mut tape, &LayerInput::Dense(h), &adj, w).unwrap();
        assert_eq!(tape.value(out), &h0);
    }

    #[test]
    fn path_with_one_hot_matches_normalized_rows() {
        let g = build_graph(3, 0, &[Edge::dd(0, 1), Edge::dd(1, 2)], &[], &[]).unwrap();
        let adj = Arc::new(normalize(&g, EdgeType::DD).unwrap().matrix);
        let mut tape = Tape::new();
        let w = tape.param(Matrix::eye(3));
        let x = LayerInput::Sparse(Arc::new(identity_features(3)));
        let out = gcn_sublayer(&mut tape, &x, &adj, w).unwrap();
        let s6 = 1.0 / 6f64.sqrt();
        let expect = ndarray::array![[0.5, s6, 0.0], [s6, 1.0 / 3.0, s6], [0.0, s6, 0.5]];
        let diff = (tape.value(out) - &expect).mapv(f64::abs);
        assert!(diff.iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn mean_of_identical_messages() {
        let mut tape = Tape::new();
        let m = ndarray::array![[1.0, -1.0], [2.0, 0.5], [0.0, 3.0]];
        let masks = KindMasks::new(2, 1);
        let mut messages = BTreeMap::new();
        for t in EdgeType::ALL {
            messages.insert(t, tape.constant(m.clone()));
        }
        let params = AggregationParams {
            concat_proj: None,
            rho: &[],
            attention_proj: None,
            score_activation: ScoreActivation::Tanh,
        };
        let (out, _) = aggregate(&mut tape, &messages, &params, &Aggregation::Mean, &masks).unwrap();
        let diff = (tape.value(out) - &m).mapv(f64::abs);
        assert!(diff.iter().all(|&d| d < 1e-15));
    }

    #[test]
    fn equal_scores_give_midpoint() {
        let mut tape = Tape::new();
        let masks = KindMasks::new(2, 0);
        let hd = ndarray::array![[1.0, 0.0], [0.0, 2.0]];
        let other = ndarray::array![[3.0, 4.0], [-2.0, 0.0]];
        let mut messages = BTreeMap::new();
        messages.insert(EdgeType::DD, tape.constant(hd.clone()));
        messages.insert(EdgeType::WW, tape.constant(other.clone()));
        messages.insert(EdgeType::DW, tape.constant(other.clone()));
        let rho = [tape.param(Matrix::zeros((4, 2)))];
        let proj = tape.param(Matrix::eye(2));
        let params = AggregationParams {
            concat_proj: None,
            rho: &rho,
            attention_proj: Some(proj),
            score_activation: ScoreActivation::Linear,
        };
        let (out, weights) = aggregate(&mut tape, &messages, &params, &Aggregation::Attention, &masks).unwrap();
        assert!(tape.value(weights[0]).iter().all(|&a| a == 0.5));
        let expect = (&hd + &other) / 2.0;
        let diff = (tape.value(out) - &expect).mapv(f64::abs);
        assert!(diff.iter().all(|&d| d < 1e-15));
    }

    #[test]
    fn attention_needs_heads() {
        let mut cfg = ModelConfig::new(4, 2).with_aggregation(Aggregation::Attention);
        cfg.heads = 0;
        assert!(matches!(cfg.validate(), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn single_class_output_is_one() {
        let g = toy_graph();
        let inputs = JointInputs::from_graph(&g, identity_features(5)).unwrap();
        let model = JointGcn::new(ModelConfig::new(3, 1), inputs).unwrap();
        let params = model.init_params(&mut ChaCha8Rng::seed_from_u64(1));
        let z = joint_forward(&model, &params).unwrap();
        assert!(z.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn every_aggregation_yields_distributions() {
        let g = toy_graph();
        for agg in [
            Aggregation::Mean,
            Aggregation::Concat,
            Aggregation::Attention,
            Aggregation::MeanOf(vec![EdgeType::DW]),
        ] {
            let inputs = JointInputs::from_graph(&g, identity_features(5)).unwrap();
            let model = JointGcn::new(ModelConfig::new(4, 3).with_aggregation(agg.clone()), inputs).unwrap();
            let params = model.init_params(&mut ChaCha8Rng::seed_from_u64(7));
            let z = joint_forward(&model, &params).unwrap();
            assert_eq!(z.shape(), &[5, 3]);
            for row in z.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9, "{agg:?}");
                assert!(row.iter().all(|&p| p > 0.0));
            }
        }
    }

    #[test]
    fn baseline_identity_on_edgeless_graph_is_softmax_of_features() {
        let g = build_graph(3, 0, &[], &[], &[]).unwrap();
        let x = CsrMatrix::identity(3);
        let model = GcnBaseline::new(3, 3, 0.0, GcnInputs::from_graph(&g, &x).unwrap()).unwrap();
        let mut params = ParamSet::new();
        params.insert(GcnBaseline::W0, Matrix::eye(3));
        params.insert(GcnBaseline::W1, Matrix::eye(3));
        let z = gcn_baseline_forward(&model, &params).unwrap();
        let expect = softmax_rows(&Matrix::eye(3));
        assert_eq!(z, expect);
    }

    #[test]
    fn aggregation_names_roundtrip() {
        for a in [
            Aggregation::Mean,
            Aggregation::Concat,
            Aggregation::Attention,
            Aggregation::MeanOf(vec![EdgeType::DD, EdgeType::DW]),
        ] {
            assert_eq!(a.as_str().parse::<Aggregation>().unwrap(), a);
        }
    }

    #[test]
    fn missing_param_is_reported() {
        let g = toy_graph();
        let inputs = JointInputs::from_graph(&g, identity_features(5)).unwrap();
        let model = JointGcn::new(ModelConfig::new(2, 2), inputs).unwrap();
        let err = joint_forward(&model, &ParamSet::new()).unwrap_err();
        assert!(matches!(err, ModelError::MissingParam(_)));
    }
}
