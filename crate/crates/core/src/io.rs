//! Readers and writers for the on-disk formats.
//!
//! Text formats are UTF-8 and TAB-delimited. Blank lines and lines starting
//! with `#` are skipped by every reader. Reals are written with Rust's
//! shortest round-trip formatting, so text files reproduce values exactly.
//! Checkpoints are binary; see [`write_checkpoint`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{tokenize, Document};
use crate::graph::{NodeId, NodeKind};
use crate::nn::{Matrix, ParamSet};
use crate::sparse::CsrMatrix;

/// A read or parse failure. `line` is 1-based; binary formats report the
/// byte offset in the message instead.
#[derive(Debug, Error)]
pub struct IoError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for IoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.path.display(), line, self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl IoError {
    fn at(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Self {
            path: path.to_path_buf(),
            line: Some(line),
            message: message.into(),
        }
    }

    fn file(path: &Path, message: impl Into<String>) -> Self {
        Self {
            path: path.to_path_buf(),
            line: None,
            message: message.into(),
        }
    }
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::file(path, e.to_string()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| IoError::file(parent, e.to_string()))?;
    }
    fs::write(path, bytes).map_err(|e| IoError::file(path, e.to_string()))
}

/// Content lines as `(line_number, text)`, comments and blanks removed.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T, IoError> {
    field
        .trim()
        .parse()
        .map_err(|_| IoError::at(path, line, format!("invalid {what} `{field}`")))
}

fn parse_real(path: &Path, line: usize, field: &str) -> Result<f64, IoError> {
    let v: f64 = parse_field(path, line, field, "number")?;
    if !v.is_finite() {
        return Err(IoError::at(path, line, format!("non-finite value `{field}`")));
    }
    Ok(v)
}

/// `(src, dst, weight)` triples from an edge-list file; weight defaults to 1.
pub fn parse_edge_list(path: &Path) -> Result<Vec<(usize, usize, f64)>, IoError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (line, l) in content_lines(&text) {
        let fields: Vec<&str> = l.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(IoError::at(
                path,
                line,
                format!("expected 2 or 3 fields, found {}", fields.len()),
            ));
        }
        let src = parse_field(path, line, fields[0], "node id")?;
        let dst = parse_field(path, line, fields[1], "node id")?;
        let w = match fields.get(2) {
            Some(f) => parse_real(path, line, f)?,
            None => 1.0,
        };
        out.push((src, dst, w));
    }
    Ok(out)
}

/// Writes one edge per line; the weight column is omitted when it is 1.
pub fn write_edge_list(path: &Path, edges: &[(usize, usize, f64)]) -> Result<(), IoError> {
    let mut s = String::new();
    for &(a, b, w) in edges {
        if w == 1.0 {
            let _ = writeln!(s, "{a}\t{b}");
        } else {
            let _ = writeln!(s, "{a}\t{b}\t{w}");
        }
    }
    write_bytes(path, s.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: usize,
    pub kind: NodeKind,
    pub label: Option<String>,
}

/// Node table keyed by global id. Typed indices are ranks within each kind
/// in ascending id order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeTable {
    entries: Vec<ManifestEntry>,
    typed: BTreeMap<usize, NodeId>,
    n_docs: usize,
    n_words: usize,
}

impl NodeTable {
    pub fn new(mut entries: Vec<ManifestEntry>) -> Result<Self, String> {
        entries.sort_by_key(|e| e.id);
        if let Some(w) = entries.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(format!("duplicate node id {}", w[0].id));
        }
        let mut typed = BTreeMap::new();
        let (mut n_docs, mut n_words) = (0, 0);
        for e in &entries {
            let id = match e.kind {
                NodeKind::Document => {
                    n_docs += 1;
                    NodeId::doc(n_docs - 1)
                }
                NodeKind::Word => {
                    n_words += 1;
                    NodeId::word(n_words - 1)
                }
            };
            typed.insert(e.id, id);
        }
        Ok(Self {
            entries,
            typed,
            n_docs,
            n_words,
        })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn typed(&self, global: usize) -> Option<NodeId> {
        self.typed.get(&global).copied()
    }

    /// Labels of document nodes, by document index.
    pub fn doc_labels(&self) -> Vec<Option<&str>> {
        self.entries
            .iter()
            .filter(|e| e.kind == NodeKind::Document)
            .map(|e| e.label.as_deref())
            .collect()
    }
}

pub fn parse_manifest(path: &Path) -> Result<NodeTable, IoError> {
    let text = read_text(path)?;
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, l) in content_lines(&text) {
        let fields: Vec<&str> = l.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(IoError::at(
                path,
                line,
                format!("expected 2 or 3 fields, found {}", fields.len()),
            ));
        }
        let id: usize = parse_field(path, line, fields[0], "node id")?;
        if !seen.insert(id) {
            return Err(IoError::at(path, line, format!("duplicate node id {id}")));
        }
        let kind: NodeKind = fields[1]
            .trim()
            .parse()
            .map_err(|e: String| IoError::at(path, line, e))?;
        let label = fields
            .get(2)
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        if label.is_some() && kind == NodeKind::Word {
            return Err(IoError::at(path, line, format!("word node {id} carries a label")));
        }
        entries.push(ManifestEntry { id, kind, label });
    }
    NodeTable::new(entries).map_err(|m| IoError::file(path, m))
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), IoError> {
    let mut s = String::new();
    for e in entries {
        let _ = write!(s, "{}\t{}", e.id, e.kind.as_str());
        if let Some(label) = &e.label {
            let _ = write!(s, "\t{label}");
        }
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

/// `(doc_id, raw text)` pairs; the text is everything after the first TAB.
pub fn read_corpus(path: &Path) -> Result<Vec<(usize, String)>, IoError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, l) in content_lines(&text) {
        let Some((id, body)) = l.split_once('\t') else {
            return Err(IoError::at(path, line, "expected `doc_id<TAB>text`"));
        };
        let id: usize = parse_field(path, line, id, "document id")?;
        if !seen.insert(id) {
            return Err(IoError::at(path, line, format!("duplicate document id {id}")));
        }
        out.push((id, body.to_string()));
    }
    Ok(out)
}

/// Reads and tokenizes a corpus file.
pub fn parse_corpus(path: &Path) -> Result<Vec<Document>, IoError> {
    Ok(read_corpus(path)?
        .into_iter()
        .map(|(id, text)| Document {
            id,
            tokens: tokenize(&text),
        })
        .collect())
}

/// Document labels, `doc_id<TAB>label`.
pub fn read_labels(path: &Path) -> Result<Vec<(usize, String)>, IoError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, l) in content_lines(&text) {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 2 || fields[1].trim().is_empty() {
            return Err(IoError::at(path, line, "expected `doc_id<TAB>label`"));
        }
        let id: usize = parse_field(path, line, fields[0], "document id")?;
        if !seen.insert(id) {
            return Err(IoError::at(path, line, format!("duplicate document id {id}")));
        }
        out.push((id, fields[1].trim().to_string()));
    }
    Ok(out)
}

/// Tokenized documents, `doc_id<TAB>tok tok ...`.
pub fn write_tokens(path: &Path, docs: &[Document]) -> Result<(), IoError> {
    let mut s = String::new();
    for d in docs {
        let _ = writeln!(s, "{}\t{}", d.id, d.tokens.join(" "));
    }
    write_bytes(path, s.as_bytes())
}

pub fn read_tokens(path: &Path) -> Result<Vec<Document>, IoError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for l in text.lines().enumerate() {
        let (line, l) = (l.0 + 1, l.1);
        if l.starts_with('#') || l.is_empty() {
            continue;
        }
        let Some((id, body)) = l.split_once('\t') else {
            return Err(IoError::at(path, line, "expected `doc_id<TAB>tokens`"));
        };
        let id: usize = parse_field(path, line, id, "document id")?;
        if !seen.insert(id) {
            return Err(IoError::at(path, line, format!("duplicate document id {id}")));
        }
        let tokens = body.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect();
        out.push(Document { id, tokens });
    }
    Ok(out)
}

/// Phrase vocabulary, one `_`-joined phrase per line.
pub fn read_vocabulary(path: &Path) -> Result<Vec<String>, IoError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, l) in content_lines(&text) {
        let name = l.trim();
        if name.contains(char::is_whitespace) {
            return Err(IoError::at(path, line, format!("phrase `{name}` contains whitespace")));
        }
        if name.split('_').any(str::is_empty) {
            return Err(IoError::at(path, line, format!("phrase `{name}` has an empty word")));
        }
        if !seen.insert(name.to_string()) {
            return Err(IoError::at(path, line, format!("duplicate phrase `{name}`")));
        }
        out.push(name.to_string());
    }
    Ok(out)
}

pub fn write_vocabulary(path: &Path, names: &[String]) -> Result<(), IoError> {
    let mut s = String::new();
    for n in names {
        s.push_str(n);
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

/// Embedding rows `id<TAB>v1 v2 ...`. Dimensions are checked by the caller.
pub fn read_embeddings(path: &Path) -> Result<Vec<(usize, Vec<f64>)>, IoError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut dim = None;
    for (line, l) in content_lines(&text) {
        let Some((id, body)) = l.split_once('\t') else {
            return Err(IoError::at(path, line, "expected `id<TAB>values`"));
        };
        let id: usize = parse_field(path, line, id, "id")?;
        if !seen.insert(id) {
            return Err(IoError::at(path, line, format!("duplicate id {id}")));
        }
        let v = body
            .split_whitespace()
            .map(|f| parse_real(path, line, f))
            .collect::<Result<Vec<_>, _>>()?;
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(IoError::at(
                    path,
                    line,
                    format!("row has {} values, expected {d}", v.len()),
                ));
            }
            _ => {}
        }
        out.push((id, v));
    }
    Ok(out)
}

pub fn write_embeddings<'a>(path: &Path, rows: impl IntoIterator<Item = (usize, &'a [f64])>) -> Result<(), IoError> {
    let mut s = String::new();
    for (id, v) in rows {
        let _ = write!(s, "{id}\t");
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{x}");
        }
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

/// Sparse matrix: a `rows<TAB>cols` header, then `row<TAB>col<TAB>value`
/// triples.
pub fn read_sparse(path: &Path) -> Result<CsrMatrix, IoError> {
    let text = read_text(path)?;
    let mut lines = content_lines(&text);
    let Some((line, header)) = lines.next() else {
        return Err(IoError::file(path, "missing `rows<TAB>cols` header"));
    };
    let dims: Vec<&str> = header.split('\t').collect();
    if dims.len() != 2 {
        return Err(IoError::at(path, line, "expected `rows<TAB>cols` header"));
    }
    let rows: usize = parse_field(path, line, dims[0], "row count")?;
    let cols: usize = parse_field(path, line, dims[1], "column count")?;
    let mut triplets = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, l) in lines {
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != 3 {
            return Err(IoError::at(path, line, format!("expected 3 fields, found {}", f.len())));
        }
        let r: usize = parse_field(path, line, f[0], "row")?;
        let c: usize = parse_field(path, line, f[1], "column")?;
        if r >= rows || c >= cols {
            return Err(IoError::at(
                path,
                line,
                format!("entry ({r}, {c}) outside {rows}x{cols}"),
            ));
        }
        if !seen.insert((r, c)) {
            return Err(IoError::at(path, line, format!("duplicate entry ({r}, {c})")));
        }
        triplets.push((r, c, parse_real(path, line, f[2])?));
    }
    Ok(CsrMatrix::from_triplets(rows, cols, &triplets))
}

pub fn write_sparse(path: &Path, m: &CsrMatrix) -> Result<(), IoError> {
    let mut s = format!("{}\t{}\n", m.rows(), m.cols());
    for (r, c, v) in m.iter() {
        let _ = writeln!(s, "{r}\t{c}\t{v}");
    }
    write_bytes(path, s.as_bytes())
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"BITECKPT";
const CHECKPOINT_VERSION: u32 = 1;

/// Binary checkpoint, all integers and reals little-endian:
///
/// ```text
/// magic "BITECKPT" | u32 version (1) | u32 entry count
/// per entry, in name order:
///   u32 name length | UTF-8 name | u64 rows | u64 cols | rows*cols f64, row-major
/// ```
pub fn write_checkpoint(path: &Path, params: &ParamSet) -> Result<(), IoError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, m) in params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
        buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
        for v in m.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_bytes(path, &buf)
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| IoError::file(self.path, format!("truncated at byte {} (need {n} more)", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<ParamSet, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::file(path, e.to_string()))?;
    let mut c = Cursor {
        path,
        bytes: &bytes,
        pos: 0,
    };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(IoError::file(path, "not a checkpoint (bad magic)"));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(IoError::file(path, format!("unsupported checkpoint version {version}")));
    }
    let count = c.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let at = c.pos;
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| IoError::file(path, format!("entry name at byte {at} is not UTF-8")))?
            .to_string();
        let rows = c.u64()? as usize;
        let cols = c.u64()? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some())
            .ok_or_else(|| IoError::file(path, format!("entry `{name}` has absurd shape {rows}x{cols}")))?;
        let raw = c.take(n * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if params.get(&name).is_some() {
            return Err(IoError::file(path, format!("duplicate entry `{name}` at byte {at}")));
        }
        params.insert(
            name,
            Matrix::from_shape_vec((rows, cols), values).expect("shape checked"),
        );
    }
    if c.pos != bytes.len() {
        return Err(IoError::file(path, format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(params)
}

/// Writes a TAB-separated table with a header row.
pub fn write_tsv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    let mut s = header.join("\t");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join("\t"));
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

/// Reads a TSV written by [`write_tsv`]: the header, then the rows.
pub fn read_tsv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), IoError> {
    let text = read_text(path)?;
    let mut lines = content_lines(&text);
    let Some((_, header)) = lines.next() else {
        return Err(IoError::file(path, "missing header row"));
    };
    let header: Vec<String> = header.split('\t').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (line, l) in lines {
        let r: Vec<String> = l.split('\t').map(str::to_string).collect();
        if r.len() != header.len() {
            return Err(IoError::at(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), r.len()),
            ));
        }
        rows.push(r);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str, content: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        fs::write(&p, content).unwrap();
        (dir, p)
    }

    #[test]
    fn empty_edge_list() {
        let (_d, p) = tmp("e.edges", "");
        assert!(parse_edge_list(&p).unwrap().is_empty());
    }

    #[test]
    fn non_integer_dst_reports_line_one() {
        let (_d, p) = tmp("e.edges", "3\ta\n");
        let err = parse_edge_list(&p).unwrap_err();
        assert_eq!(err.line, Some(1));
        assert!(err.to_string().contains(":1:"));
    }

    #[test]
    fn edge_list_comments_and_weights() {
        let (_d, p) = tmp("e.edges", "# header\n0\t1\n\n2\t3\t0.5\n");
        assert_eq!(parse_edge_list(&p).unwrap(), vec![(0, 1, 1.0), (2, 3, 0.5)]);
    }

    #[test]
    fn manifest_duplicates_and_kinds() {
        let (_d, p) = tmp("m.tsv", "0\tdoc\ta\n0\tword\n");
        assert_eq!(parse_manifest(&p).unwrap_err().line, Some(2));
        let (_d, p) = tmp("m.tsv", "0\tdoc\ta\n1\tplanet\n");
        assert_eq!(parse_manifest(&p).unwrap_err().line, Some(2));
        let (_d, p) = tmp("m.tsv", "0\tdoc\ta\n2\tword\n1\tdoc\n");
        let t = parse_manifest(&p).unwrap();
        assert_eq!((t.n_docs(), t.n_words()), (2, 1));
        assert_eq!(t.typed(2), Some(NodeId::word(0)));
        assert_eq!(t.doc_labels(), vec![Some("a"), None]);
    }

    #[test]
    fn corpus_splits_at_first_tab() {
        let (_d, p) = tmp("c.tsv", "0\tGraph\tmining here\n1\tdata\n");
        let raw = read_corpus(&p).unwrap();
        assert_eq!(raw[0].1, "Graph\tmining here");
        let docs = parse_corpus(&p).unwrap();
        assert_eq!(docs[0].tokens, vec!["graph", "mining"]);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.ckpt");
        let mut params = ParamSet::new();
        params.insert(
            "a",
            Matrix::from_shape_vec((2, 2), vec![0.1, -1e-300, f64::MIN_POSITIVE, 3.0]).unwrap(),
        );
        params.insert("b", Matrix::zeros((0, 3)));
        write_checkpoint(&p, &params).unwrap();
        let back = read_checkpoint(&p).unwrap();
        for ((n1, m1), (n2, m2)) in params.iter().zip(back.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(m1.shape(), m2.shape());
            assert!(m1.iter().zip(m2.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn truncated_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.ckpt");
        let mut params = ParamSet::new();
        params.insert("w", Matrix::ones((3, 3)));
        write_checkpoint(&p, &params).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        assert!(read_checkpoint(&p).unwrap_err().message.contains("truncated"));
    }

    #[test]
    fn sparse_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.tsv");
        let m = CsrMatrix::from_triplets(3, 4, &[(0, 1, 0.25), (2, 3, 1.0 / 3.0)]);
        write_sparse(&p, &m).unwrap();
        assert_eq!(read_sparse(&p).unwrap(), m);
    }

    #[test]
    fn embeddings_dimension_mismatch() {
        let (_d, p) = tmp("e.tsv", "0\t1 2\n1\t1 2 3\n");
        assert_eq!(read_embeddings(&p).unwrap_err().line, Some(2));
    }
}
