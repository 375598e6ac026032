//! Training loop, splits, accuracy, and the ablation driver.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::BiTypedGraph;
use crate::model::{
    predict, Aggregation, GcnBaseline, GcnInputs, JointGcn, JointInputs, ModelConfig, ModelError, NodeClassifier,
};
use crate::nn::{Adam, Matrix, NnError, ParamSet, Tape};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("cannot evaluate on an empty id set")]
    EmptyIds,
    #[error("document {0} has no label")]
    Unlabeled(usize),
    #[error("unknown variant `{0}` (expected gcn, b, r, a or ra)")]
    UnknownVariant(String),
    #[error("variant {0} needs a refined graph")]
    MissingRefinedGraph(Variant),
}

/// Random streams carved out of one seed.
const STREAM_INIT: u64 = 0;
const STREAM_DROPOUT: u64 = 1;
const STREAM_SPLIT: u64 = 2;

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Disjoint document index sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn validate(&self, labels: &[Option<usize>]) -> Result<(), TrainError> {
        if self.train.is_empty() {
            return Err(TrainError::InvalidSplit("train set is empty".into()));
        }
        let mut seen = vec![false; labels.len()];
        for &id in self.train.iter().chain(&self.val).chain(&self.test) {
            match labels.get(id) {
                None => return Err(TrainError::InvalidSplit(format!("document {id} out of range"))),
                Some(None) => return Err(TrainError::Unlabeled(id)),
                Some(Some(_)) => {}
            }
            if std::mem::replace(&mut seen[id], true) {
                return Err(TrainError::InvalidSplit(format!("document {id} appears twice")));
            }
        }
        Ok(())
    }
}

/// Per-class stratified split.
///
/// When every class has at least 21 labeled documents and at least 1000
/// documents remain after taking 20 per class, the split is 20 per class for
/// training, 500 for validation, and the rest for testing. Otherwise each
/// class is split 60/20/20, with at least one training document per class.
pub fn stratified_split(labels: &[Option<usize>], seed: u64) -> Split {
    let mut rng = seeded_rng(seed, STREAM_SPLIT);
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            by_class.entry(*c).or_default().push(i);
        }
    }
    for ids in by_class.values_mut() {
        ids.shuffle(&mut rng);
    }
    let labeled: usize = by_class.values().map(Vec::len).sum();
    let n_classes = by_class.len();
    let planetoid = by_class.values().all(|ids| ids.len() > 20) && labeled >= 20 * n_classes + 1000;

    let mut split = Split::default();
    if planetoid {
        let mut rest = Vec::new();
        for ids in by_class.values() {
            split.train.extend_from_slice(&ids[..20]);
            rest.extend_from_slice(&ids[20..]);
        }
        rest.shuffle(&mut rng);
        split.val = rest[..500].to_vec();
        split.test = rest[500..].to_vec();
    } else {
        for ids in by_class.values() {
            let n = ids.len();
            let n_train = ((0.6 * n as f64).round() as usize).clamp(1, n);
            let n_val = ((0.2 * n as f64).round() as usize).min(n - n_train);
            split.train.extend_from_slice(&ids[..n_train]);
            split.val.extend_from_slice(&ids[n_train..n_train + n_val]);
            split.test.extend_from_slice(&ids[n_train + n_val..]);
        }
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            epochs: 300,
            patience: 30,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.patience == 0 {
            return Err(TrainError::InvalidConfig("patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Loss of the dropout forward pass the update was computed from.
    pub train_loss: f64,
    /// Loss on the training documents after the update, without dropout.
    pub train_nll: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub params: ParamSet,
    pub history: Vec<EpochRecord>,
    /// `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

fn targets(labels: &[Option<usize>], ids: &[usize]) -> Result<Vec<(usize, usize)>, TrainError> {
    ids.iter()
        .map(|&i| {
            labels
                .get(i)
                .copied()
                .flatten()
                .map(|c| (i, c))
                .ok_or(TrainError::Unlabeled(i))
        })
        .collect()
}

/// Argmax with ties going to the lowest class index.
pub fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of `ids` whose argmax row of `z` equals the label.
pub fn accuracy(z: &Matrix, labels: &[Option<usize>], ids: &[usize]) -> Result<f64, TrainError> {
    if ids.is_empty() {
        return Err(TrainError::EmptyIds);
    }
    let t = targets(labels, ids)?;
    for &(i, _) in &t {
        if i >= z.nrows() {
            return Err(TrainError::InvalidSplit(format!("document {i} has no prediction row")));
        }
    }
    let correct = t.iter().filter(|&&(i, c)| argmax(z.row(i)) == c).count();
    Ok(correct as f64 / ids.len() as f64)
}

/// Mean negative log probability of the labels.
fn nll(z: &Matrix, t: &[(usize, usize)]) -> f64 {
    if t.is_empty() {
        return f64::NAN;
    }
    t.iter()
        .map(|&(i, c)| -z[[i, c]].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / t.len() as f64
}

pub fn evaluate<M: NodeClassifier + ?Sized>(
    model: &M,
    params: &ParamSet,
    labels: &[Option<usize>],
    ids: &[usize],
) -> Result<f64, TrainError> {
    if ids.is_empty() {
        return Err(TrainError::EmptyIds);
    }
    accuracy(&predict(model, params)?, labels, ids)
}

/// Adam on the cross-entropy over `split.train`, with decoupled-from-loss L2
/// (`weight_decay · w` added to every gradient) and early stopping on
/// validation accuracy, ties broken by lower validation loss. With an empty
/// validation set the training accuracy stands in.
pub fn train<M: NodeClassifier + ?Sized>(
    model: &M,
    labels: &[Option<usize>],
    split: &Split,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    split.validate(labels)?;
    let train_t = targets(labels, &split.train)?;
    let val_t = targets(labels, &split.val)?;
    let select_ids = if split.val.is_empty() { &split.train } else { &split.val };
    let select_t = if split.val.is_empty() { &train_t } else { &val_t };

    let mut params = model.init_params(&mut seeded_rng(cfg.seed, STREAM_INIT));
    let mut dropout_rng = seeded_rng(cfg.seed, STREAM_DROPOUT);
    let mut adam = Adam::new(cfg.lr);
    let mut history = Vec::new();
    let mut best = (params.clone(), f64::NEG_INFINITY, f64::INFINITY, None);
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let diverged = |e: NnError| match e {
            NnError::NonFinite(_) => TrainError::Diverged { epoch },
            other => ModelError::Nn(other).into(),
        };
        let out = model
            .forward(&mut tape, &vars, Some(&mut dropout_rng))
            .map_err(|e| match e {
                ModelError::Nn(n) => diverged(n),
                other => other.into(),
            })?;
        let loss = tape.cross_entropy(out.logits, &train_t).map_err(diverged)?;
        let train_loss = tape.scalar(loss);
        if !train_loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        tape.backward(loss).map_err(diverged)?;

        let mut grads = params.gradients(&tape, &vars);
        if cfg.weight_decay > 0.0 {
            for ((_, g), (_, w)) in grads.iter_mut().zip(params.iter()) {
                g.scaled_add(cfg.weight_decay, w);
            }
        }
        adam.step(&mut params, &grads);
        if params.iter().any(|(_, w)| w.iter().any(|v| !v.is_finite())) {
            return Err(TrainError::Diverged { epoch });
        }

        let z = predict(model, &params).map_err(|e| match e {
            ModelError::Nn(n) => diverged(n),
            other => other.into(),
        })?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::Diverged { epoch });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            train_nll: nll(&z, &train_t),
            train_acc: accuracy(&z, labels, &split.train)?,
            val_acc: accuracy(&z, labels, select_ids)?,
            val_loss: nll(&z, select_t),
        };
        history.push(record);

        if record.val_acc > best.1 || (record.val_acc == best.1 && record.val_loss < best.2) {
            best = (params.clone(), record.val_acc, record.val_loss, Some(epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best.0,
        history,
        best_epoch: best.3,
    })
}

/// Rows of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Plain GCN on the document network.
    Gcn,
    /// Joint convolution with mean aggregation.
    B,
    /// `B` on the refined graph.
    R,
    /// Joint convolution with attention aggregation.
    A,
    /// `A` on the refined graph.
    RA,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Gcn, Variant::B, Variant::R, Variant::A, Variant::RA];

    pub fn key(self) -> &'static str {
        match self {
            Variant::Gcn => "gcn",
            Variant::B => "b",
            Variant::R => "r",
            Variant::A => "a",
            Variant::RA => "ra",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Gcn => "GCN",
            Variant::B => "BiTe-GCN-B",
            Variant::R => "BiTe-GCN-R",
            Variant::A => "BiTe-GCN-A",
            Variant::RA => "BiTe-GCN-R-A",
        }
    }

    pub fn refined(self) -> bool {
        matches!(self, Variant::R | Variant::RA)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcn" => Ok(Variant::Gcn),
            "b" => Ok(Variant::B),
            "r" => Ok(Variant::R),
            "a" => Ok(Variant::A),
            "ra" | "r-a" => Ok(Variant::RA),
            _ => Err(TrainError::UnknownVariant(s.to_string())),
        }
    }
}

/// Parses a comma-separated variant list.
pub fn parse_variants(s: &str) -> Result<Vec<Variant>, TrainError> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

/// A prepared dataset: graph, joint features (documents first), and
/// document labels as class indices.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: BiTypedGraph,
    pub refined: Option<BiTypedGraph>,
    pub features: CsrMatrix,
    pub labels: Vec<Option<usize>>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(graph: BiTypedGraph, features: CsrMatrix, labels: Vec<Option<usize>>) -> Result<Self, TrainError> {
        if labels.len() != graph.n_docs() {
            return Err(TrainError::InvalidSplit(format!(
                "{} labels for {} documents",
                labels.len(),
                graph.n_docs()
            )));
        }
        let n_classes = labels.iter().flatten().max().map_or(0, |m| m + 1);
        Ok(Self {
            graph,
            refined: None,
            features,
            labels,
            n_classes,
        })
    }

    pub fn with_refined(mut self, refined: BiTypedGraph) -> Self {
        self.refined = Some(refined);
        self
    }
}

/// Model hyperparameters shared by all variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptions {
    pub hidden_dim: usize,
    pub dropout: f64,
    pub heads: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            hidden_dim: 16,
            dropout: 0.5,
            heads: 4,
        }
    }
}

/// Builds the classifier a variant names.
pub fn build_model(variant: Variant, ds: &Dataset, opts: &ModelOptions) -> Result<Box<dyn NodeClassifier>, TrainError> {
    let graph = if variant.refined() {
        ds.refined.as_ref().ok_or(TrainError::MissingRefinedGraph(variant))?
    } else {
        &ds.graph
    };
    let aggregation = match variant {
        Variant::Gcn => {
            let inputs = GcnInputs::from_graph(graph, &ds.features)?;
            return Ok(Box::new(GcnBaseline::new(
                opts.hidden_dim,
                ds.n_classes,
                opts.dropout,
                inputs,
            )?));
        }
        Variant::B | Variant::R => Aggregation::Mean,
        Variant::A | Variant::RA => Aggregation::Attention,
    };
    let mut cfg = ModelConfig::new(opts.hidden_dim, ds.n_classes).with_aggregation(aggregation);
    cfg.dropout = opts.dropout;
    cfg.heads = opts.heads;
    let inputs = JointInputs::from_graph(graph, ds.features.clone())?;
    Ok(Box::new(JointGcn::new(cfg, inputs)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub variant: Variant,
    pub runs: usize,
    pub val_mean: f64,
    pub val_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
}

/// Sample mean and standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut by: BTreeMap<Variant, Vec<&AblationRow>> = BTreeMap::new();
        for r in &self.rows {
            by.entry(r.variant).or_default().push(r);
        }
        by.into_iter()
            .map(|(variant, rs)| {
                let val: Vec<f64> = rs.iter().map(|r| r.val_acc).collect();
                let test: Vec<f64> = rs.iter().map(|r| r.test_acc).collect();
                let (val_mean, val_std) = mean_std(&val);
                let (test_mean, test_std) = mean_std(&test);
                SummaryRow {
                    variant,
                    runs: rs.len(),
                    val_mean,
                    val_std,
                    test_mean,
                    test_std,
                }
            })
            .collect()
    }

    pub const RESULTS_HEADER: [&'static str; 4] = ["variant", "seed", "val_acc", "test_acc"];
    pub const SUMMARY_HEADER: [&'static str; 6] = ["variant", "runs", "val_mean", "val_std", "test_mean", "test_std"];

    pub fn result_cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.variant.key().to_string(),
                    r.seed.to_string(),
                    format!("{:.6}", r.val_acc),
                    format!("{:.6}", r.test_acc),
                ]
            })
            .collect()
    }

    pub fn summary_cells(&self) -> Vec<Vec<String>> {
        self.summary()
            .iter()
            .map(|s| {
                vec![
                    s.variant.key().to_string(),
                    s.runs.to_string(),
                    format!("{:.6}", s.val_mean),
                    format!("{:.6}", s.val_std),
                    format!("{:.6}", s.test_mean),
                    format!("{:.6}", s.test_std),
                ]
            })
            .collect()
    }
}

/// One training run for a `(variant, seed)` cell. The split is drawn from
/// the seed, so all variants sharing a seed share a split.
pub fn run_single(
    ds: &Dataset,
    variant: Variant,
    opts: &ModelOptions,
    cfg: &TrainConfig,
) -> Result<AblationRow, TrainError> {
    let split = stratified_split(&ds.labels, cfg.seed);
    let model = build_model(variant, ds, opts)?;
    let out = train(model.as_ref(), &ds.labels, &split, cfg)?;
    let z = predict(model.as_ref(), &out.params)?;
    let val_acc = if split.val.is_empty() {
        f64::NAN
    } else {
        accuracy(&z, &ds.labels, &split.val)?
    };
    let test_acc = if split.test.is_empty() {
        f64::NAN
    } else {
        accuracy(&z, &ds.labels, &split.test)?
    };
    Ok(AblationRow {
        variant,
        seed: cfg.seed,
        val_acc,
        test_acc,
    })
}

/// Runs every `(variant, seed)` cell, in parallel, and returns rows ordered
/// by variant list order, then seed order.
pub fn run_ablation(
    ds: &Dataset,
    variants: &[Variant],
    seeds: &[u64],
    opts: &ModelOptions,
    cfg: &TrainConfig,
) -> Result<AblationTable, TrainError> {
    for &v in variants {
        if v.refined() && ds.refined.is_none() {
            return Err(TrainError::MissingRefinedGraph(v));
        }
    }
    let cells: Vec<(Variant, u64)> = variants
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let rows = cells
        .into_par_iter()
        .map(|(v, seed)| run_single(ds, v, opts, &TrainConfig { seed, ..*cfg }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AblationTable { rows })
}
