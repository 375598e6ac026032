//! Embedding tables used as similarity providers for edge refinement.
//!
//! Tables can be ingested from files (see [`crate::io`]) or computed by the
//! two built-in deterministic providers: TF-IDF over phrases for documents
//! and a truncated eigendecomposition of the phrase PPMI matrix for words.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use thiserror::Error;

use crate::corpus::{phrase_counts, Document, Phrase, PhraseIndex};
use crate::io::{self, IoError};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding for id {0} is missing")]
    MissingId(usize),
    #[error("vector for id {id} has dimension {got}, expected {expected}")]
    DimensionMismatch { id: usize, expected: usize, got: usize },
    #[error("vector for id {0} contains a non-finite value")]
    NonFinite(usize),
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("vocabulary has {0} phrases; at least 2 are needed")]
    VocabularyTooSmall(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Dense vectors of equal dimension keyed by node index.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<usize, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, vectors: BTreeMap<usize, Vec<f64>>) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::InvalidParameter("dimension must be positive".into()));
        }
        for (&id, v) in &vectors {
            if v.len() != dim {
                return Err(EmbedError::DimensionMismatch {
                    id,
                    expected: dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbedError::NonFinite(id));
            }
        }
        Ok(Self { dim, vectors })
    }

    /// Rows of a matrix become vectors `0..rows`.
    pub fn from_rows(rows: &Array2<f64>) -> Result<Self, EmbedError> {
        let vectors = rows
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| (i, r.to_vec()))
            .collect();
        Self::new(rows.ncols(), vectors)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&[f64]> {
        self.vectors.get(&id).map(Vec::as_slice)
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.vectors.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        self.vectors.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    /// Errors with the first id in `ids` that has no vector.
    pub fn require(&self, ids: impl IntoIterator<Item = usize>) -> Result<(), EmbedError> {
        for id in ids {
            if !self.vectors.contains_key(&id) {
                return Err(EmbedError::MissingId(id));
            }
        }
        Ok(())
    }

    /// Keeps only the given ids.
    pub fn restrict(&self, ids: &[usize]) -> Result<Self, EmbedError> {
        self.require(ids.iter().copied())?;
        let vectors = ids.iter().map(|&id| (id, self.vectors[&id].clone())).collect();
        Ok(Self { dim: self.dim, vectors })
    }
}

/// Loads a table and checks that it covers exactly `expected_ids`; rows for
/// other ids are dropped.
pub fn load_embeddings(path: &Path, expected_ids: &[usize]) -> Result<EmbeddingTable, EmbedError> {
    let rows = io::read_embeddings(path)?;
    let dim = rows.first().map(|(_, v)| v.len()).unwrap_or(0);
    let mut vectors = BTreeMap::new();
    for (id, v) in rows {
        vectors.insert(id, v);
    }
    let table = EmbeddingTable::new(dim.max(1), vectors)?;
    table.restrict(expected_ids)
}

pub fn save_embeddings(path: &Path, table: &EmbeddingTable) -> Result<(), EmbedError> {
    io::write_embeddings(path, table.iter())?;
    Ok(())
}

/// `u·v / (‖u‖‖v‖)`, clamped to `[-1, 1]`; 0 when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::LengthMismatch(u.len(), v.len()));
    }
    Ok(cosine_unchecked(u, v))
}

pub(crate) fn cosine_unchecked(u: &[f64], v: &[f64]) -> f64 {
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0)
}

/// TF-IDF rows over phrases: `tf · ln(N / df)`, then L2-normalized. Documents
/// without phrases stay zero.
pub fn tfidf_doc_embeddings(corpus: &[Document], phrases: &[Phrase]) -> Result<EmbeddingTable, EmbedError> {
    if phrases.is_empty() {
        return Err(EmbedError::VocabularyTooSmall(0));
    }
    let counts = phrase_counts(corpus, phrases);
    let n_docs = counts.rows();
    let mut df = vec![0usize; phrases.len()];
    for (_, c, _) in counts.iter() {
        df[c] += 1;
    }
    let mut rows = Array2::<f64>::zeros((n_docs, phrases.len()));
    for (r, c, tf) in counts.iter() {
        rows[[r, c]] = tf * (n_docs as f64 / df[c] as f64).ln();
    }
    for mut row in rows.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    EmbeddingTable::from_rows(&rows)
}

/// Symmetric positive PMI over phrase co-occurrences.
///
/// Documents are segmented into phrase ids (greedy longest match); each pair
/// of distinct phrases at most `window` positions apart adds one count in
/// both directions. With `T` the total count and `r_i` the row sums,
/// `PPMI_ij = max(0, ln(c_ij · T / (r_i r_j)))`.
pub fn ppmi_matrix(corpus: &[Document], phrases: &[Phrase], window: usize) -> Array2<f64> {
    let p = phrases.len();
    let index = PhraseIndex::new(phrases);
    let mut counts = Array2::<f64>::zeros((p, p));
    for doc in corpus {
        let seq = index.segment(&doc.tokens);
        for i in 0..seq.len() {
            for j in i + 1..seq.len().min(i + window + 1) {
                let (a, b) = (seq[i], seq[j]);
                if a != b {
                    counts[[a, b]] += 1.0;
                    counts[[b, a]] += 1.0;
                }
            }
        }
    }
    let total: f64 = counts.sum();
    let row: Vec<f64> = counts.rows().into_iter().map(|r| r.sum()).collect();
    let mut out = Array2::<f64>::zeros((p, p));
    for ((i, j), &c) in counts.indexed_iter() {
        if c > 0.0 {
            out[[i, j]] = (c * total / (row[i] * row[j])).ln().max(0.0);
        }
    }
    out
}

/// One `dim`-dimensional vector per phrase from the top-`dim` eigenpairs
/// (largest eigenvalues) of the PPMI matrix: `x_i = u_i · sqrt(max(λ, 0))`.
///
/// Each eigenvector is signed so that its largest-magnitude entry is positive.
/// Phrases with an all-zero PPMI row get the zero vector.
pub fn ppmi_word_embeddings(
    corpus: &[Document],
    phrases: &[Phrase],
    window: usize,
    dim: usize,
) -> Result<EmbeddingTable, EmbedError> {
    let p = phrases.len();
    if p < 2 {
        return Err(EmbedError::VocabularyTooSmall(p));
    }
    if window < 1 {
        return Err(EmbedError::InvalidParameter("window must be at least 1".into()));
    }
    if dim < 1 || dim > p {
        return Err(EmbedError::InvalidParameter(format!(
            "dimension {dim} must lie in 1..={p}"
        )));
    }
    let ppmi = ppmi_matrix(corpus, phrases, window);
    let (values, vectors) = top_eigenpairs(&ppmi, dim);
    let mut rows = Array2::<f64>::zeros((p, dim));
    for k in 0..dim {
        let scale = values[k].max(0.0).sqrt();
        for i in 0..p {
            rows[[i, k]] = vectors[[i, k]] * scale;
        }
    }
    for i in 0..p {
        if ppmi.row(i).iter().all(|&v| v == 0.0) {
            rows.row_mut(i).fill(0.0);
        }
    }
    EmbeddingTable::from_rows(&rows)
}

/// Largest `k` eigenvalues (descending) of a symmetric matrix and their
/// sign-normalized eigenvectors as columns.
pub(crate) fn top_eigenpairs(m: &Array2<f64>, k: usize) -> (Vec<f64>, Array2<f64>) {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let mut values = Vec::with_capacity(k);
    let mut vectors = Array2::<f64>::zeros((n, k));
    for (col, &idx) in order.iter().take(k).enumerate() {
        values.push(eig.eigenvalues[idx]);
        let v = eig.eigenvectors.column(idx);
        let pivot = (0..n)
            .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap().then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[[i, col]] = sign * v[i];
        }
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{FixedVocabulary, PhraseMiner};

    fn docs(texts: &[&str]) -> Vec<Document> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::from_text(i, t))
            .collect()
    }

    fn vocab(names: &[&str]) -> Vec<Phrase> {
        FixedVocabulary::from_names(names).mine(&[]).unwrap()
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(EmbedError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn table_validation() {
        let mut m = BTreeMap::new();
        m.insert(0, vec![1.0, 2.0]);
        m.insert(1, vec![1.0]);
        assert!(matches!(
            EmbeddingTable::new(2, m),
            Err(EmbedError::DimensionMismatch { id: 1, .. })
        ));
        let mut m = BTreeMap::new();
        m.insert(3, vec![f64::NAN]);
        assert!(matches!(EmbeddingTable::new(1, m), Err(EmbedError::NonFinite(3))));
    }

    #[test]
    fn tfidf_hand_computed() {
        // phrases: aa, bb, cc
        // d0: aa aa bb   d1: bb cc   d2: cc
        let corpus = docs(&["aa aa bb", "bb cc", "cc"]);
        let ps = vocab(&["aa", "bb", "cc"]);
        let t = tfidf_doc_embeddings(&corpus, &ps).unwrap();
        let l3 = 3f64.ln();
        let l15 = 1.5f64.ln();
        let raw = [[2.0 * l3, l15, 0.0], [0.0, l15, l15], [0.0, 0.0, l15]];
        for (d, row) in raw.iter().enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (got, x) in t.get(d).unwrap().iter().zip(row) {
                assert!((got - x / norm).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tfidf_identical_and_disjoint() {
        let corpus = docs(&["aa bb", "aa bb", "cc dd"]);
        let ps = vocab(&["aa", "bb", "cc", "dd"]);
        let t = tfidf_doc_embeddings(&corpus, &ps).unwrap();
        assert!((cosine(t.get(0).unwrap(), t.get(1).unwrap()).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(t.get(0).unwrap(), t.get(2).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn ppmi_hand_computed() {
        // Segmentations (window 1): [aa bb], [aa cc], [bb cc dd]
        // counts: ab=1, ac=1, bc=1, cd=1 (both directions), T=8
        // rows: a=2, b=2, c=3, d=1
        let corpus = docs(&["aa bb", "aa cc", "bb cc dd"]);
        let ps = vocab(&["aa", "bb", "cc", "dd"]);
        let m = ppmi_matrix(&corpus, &ps, 1);
        let expect = |c: f64, ri: f64, rj: f64| (c * 8.0 / (ri * rj)).ln().max(0.0);
        assert!((m[[0, 1]] - expect(1.0, 2.0, 2.0)).abs() < 1e-12);
        assert!((m[[0, 2]] - expect(1.0, 2.0, 3.0)).abs() < 1e-12);
        assert!((m[[1, 2]] - expect(1.0, 2.0, 3.0)).abs() < 1e-12);
        assert!((m[[2, 3]] - expect(1.0, 3.0, 1.0)).abs() < 1e-12);
        assert_eq!(m[[0, 3]], 0.0);
        assert_eq!(m[[0, 0]], 0.0);
        assert_eq!(m, m.t());
    }

    #[test]
    fn isolated_phrase_gets_zero_vector() {
        let corpus = docs(&["aa bb cc", "bb cc aa", "dd"]);
        let ps = vocab(&["aa", "bb", "cc", "dd"]);
        let t = ppmi_word_embeddings(&corpus, &ps, 2, 3).unwrap();
        assert!(t.get(3).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn always_cooccurring_phrases_align() {
        // aa and bb always appear side by side and share every context.
        let corpus = docs(&[
            "aa bb cc",
            "bb aa dd",
            "aa bb ee",
            "cc dd ee ff",
            "ff aa bb",
            "ee ff cc dd",
            "bb aa cc",
        ]);
        let ps = vocab(&["aa", "bb", "cc", "dd", "ee", "ff"]);
        let t = ppmi_word_embeddings(&corpus, &ps, 4, 2).unwrap();
        let c = cosine(t.get(0).unwrap(), t.get(1).unwrap()).unwrap();
        assert!(c > 0.99, "cosine {c}");
    }

    #[test]
    fn ppmi_errors() {
        let corpus = docs(&["aa"]);
        assert!(matches!(
            ppmi_word_embeddings(&corpus, &vocab(&["aa"]), 2, 1),
            Err(EmbedError::VocabularyTooSmall(1))
        ));
        assert!(ppmi_word_embeddings(&corpus, &vocab(&["aa", "bb"]), 2, 3).is_err());
        assert!(ppmi_word_embeddings(&corpus, &vocab(&["aa", "bb"]), 0, 1).is_err());
    }

    #[test]
    fn eigen_sign_convention() {
        let m = ndarray::array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = top_eigenpairs(&m, 2);
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        for k in 0..2 {
            let col = vecs.column(k);
            let pivot = col
                .iter()
                .copied()
                .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(pivot > 0.0);
        }
    }
}
