//! Command-line behaviour of `bite` on the bundled toy corpus.

#[path = "../../core/tests/support/oracles.rs"]
mod oracles;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bitype::corpus::{FixedVocabulary, PhraseMiner};
use bitype::embed::tfidf_doc_embeddings;
use bitype::io;
use bitype::refine::RefineConfig;
use tempfile::TempDir;

fn bite(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bite"))
        .args(args)
        .env_remove("BITE_DATA_DIR")
        .output()
        .expect("spawn bite")
}

fn ok(args: &[&str]) -> String {
    let out = bite(args);
    assert!(
        out.status.success(),
        "bite {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn toy(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy").join(file)
}

fn prepared() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    ok(&[
        "prepare",
        "--corpus",
        s(&toy("corpus.tsv")),
        "--citations",
        s(&toy("citations.tsv")),
        "--labels",
        s(&toy("labels.tsv")),
        "--out",
        s(&bundle),
    ]);
    (dir, bundle)
}

#[test]
fn help_exits_zero_for_every_command() {
    for cmd in [&[][..], &["prepare"], &["refine"], &["train"], &["eval"], &["ablation"]] {
        let mut args = cmd.to_vec();
        args.push("--help");
        let out = bite(&args);
        assert!(out.status.success(), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn unknown_flag_fails_with_usage() {
    let out = bite(&["train", "--no-such-flag"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "train.lr = 0.01\ntrain.learning_rate = 0.1\n").unwrap();
    let out = bite(&["train", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("train.learning_rate") && err.contains(":2:"), "{err}");
}

#[test]
fn config_file_drives_training_and_flags_override_it() {
    let (dir, bundle) = prepared();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "data.bundle = bundle\ndata.out = from_config\nmodel.variant = gcn\ntrain.epochs = 5\n",
    )
    .unwrap();
    ok(&["train", "--config", s(&cfg)]);
    let written = fs::read_to_string(dir.path().join("from_config/model.cfg")).unwrap();
    assert!(written.contains("model.variant = gcn") && written.contains("train.epochs = 5"));
    assert!(written.contains(&format!(
        "data.bundle = {}",
        fs::canonicalize(&bundle).unwrap().display()
    )));

    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--variant",
        "a",
        "--out",
        s(&dir.path().join("flag")),
    ]);
    let written = fs::read_to_string(dir.path().join("flag/model.cfg")).unwrap();
    assert!(written.contains("model.variant = a"));
    let history = fs::read_to_string(dir.path().join("flag/history.tsv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 5);
}

#[test]
fn three_line_corpus_gives_three_documents() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.tsv");
    fs::write(
        &corpus,
        "7\tgraph neural network\n3\tgraph neural model\n9\tneural network model\n",
    )
    .unwrap();
    let out = ok(&[
        "prepare",
        "--corpus",
        s(&corpus),
        "--out",
        s(&dir.path().join("b")),
        "--min-freq",
        "2",
    ]);
    assert!(out.starts_with("documents 3\t"), "{out}");
    let ids = fs::read_to_string(dir.path().join("b/documents.tsv")).unwrap();
    assert_eq!(ids, "index\tcorpus_id\n0\t3\n1\t7\n2\t9\n");
}

#[test]
fn malformed_citation_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cites = dir.path().join("cites.tsv");
    fs::write(&cites, "0\t1\n3\ta\n").unwrap();
    let out = bite(&[
        "prepare",
        "--corpus",
        s(&toy("corpus.tsv")),
        "--citations",
        s(&cites),
        "--out",
        s(&dir.path().join("b")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cites.tsv:2"), "{}", stderr(&out));
}

#[test]
fn citation_to_unknown_document_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cites = dir.path().join("cites.tsv");
    fs::write(&cites, "0\t999\n").unwrap();
    let out = bite(&[
        "prepare",
        "--corpus",
        s(&toy("corpus.tsv")),
        "--citations",
        s(&cites),
        "--out",
        s(&dir.path().join("b")),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("999"), "{}", stderr(&out));
}

fn edge_set(path: &Path) -> BTreeSet<(usize, usize)> {
    io::parse_edge_list(path)
        .unwrap()
        .into_iter()
        .map(|(a, b, _)| (a.min(b), a.max(b)))
        .collect()
}

#[test]
fn refine_report_matches_brute_force_oracle() {
    let (dir, bundle) = prepared();
    let out = dir.path().join("refined");
    ok(&["refine", "--bundle", s(&bundle), "--out", s(&out), "--edge-type", "dd"]);

    let docs = io::read_tokens(&bundle.join("tokens.tsv")).unwrap();
    let vocab = io::read_vocabulary(&bundle.join("vocab.txt")).unwrap();
    let phrases = FixedVocabulary::from_names(&vocab).mine(&docs).unwrap();
    let table = tfidf_doc_embeddings(&docs, &phrases).unwrap();
    let before = edge_set(&bundle.join("dd.edges"));
    let d = RefineConfig::default();
    let expect: BTreeSet<_> = oracles::refine_oracle(docs.len(), &before, &table, d.t_high, d.t_low)
        .into_iter()
        .collect();
    let after = edge_set(&out.join("dd.edges"));
    assert_eq!(after, expect);

    let report = fs::read_to_string(out.join("refine_report.tsv")).unwrap();
    let row = format!(
        "dd\t{}\t{}\t{}\t{}\t{}",
        before.len(),
        after.len(),
        after.difference(&before).count(),
        before.difference(&after).count(),
        after.intersection(&before).count()
    );
    assert_eq!(report.lines().nth(1), Some(row.as_str()));
    for f in [
        "ww.edges",
        "dw.edges",
        "features.tsv",
        "manifest.tsv",
        "vocab.txt",
        "tokens.tsv",
    ] {
        assert_eq!(fs::read(bundle.join(f)).unwrap(), fs::read(out.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn no_op_thresholds_leave_edges_unchanged() {
    let (dir, bundle) = prepared();
    let noop = ["--t-low", "0", "--t-high", "1", "--max-added-per-node", "0"];

    // TF-IDF document vectors are nonnegative, so no cosine falls below 0.
    let dd = dir.path().join("dd");
    let mut args = vec!["refine", "--bundle", s(&bundle), "--out", s(&dd), "--edge-type", "dd"];
    args.extend(noop);
    ok(&args);
    assert_eq!(
        fs::read(bundle.join("dd.edges")).unwrap(),
        fs::read(dd.join("dd.edges")).unwrap()
    );

    // Word vectors from a file with nonnegative entries, keyed by global id.
    let manifest = io::parse_manifest(&bundle.join("manifest.tsv")).unwrap();
    let n_docs = manifest.n_docs();
    let rows: Vec<(usize, Vec<f64>)> = (0..manifest.n_words())
        .map(|w| (n_docs + w, vec![1.0 + (w % 3) as f64, (w % 5) as f64]))
        .collect();
    let emb = dir.path().join("words.emb");
    io::write_embeddings(&emb, rows.iter().map(|(id, v)| (*id, v.as_slice()))).unwrap();
    let ww = dir.path().join("ww");
    let mut args = vec![
        "refine",
        "--bundle",
        s(&bundle),
        "--out",
        s(&ww),
        "--edge-type",
        "ww",
        "--embeddings",
        s(&emb),
    ];
    args.extend(noop);
    ok(&args);
    assert_eq!(
        fs::read(bundle.join("ww.edges")).unwrap(),
        fs::read(ww.join("ww.edges")).unwrap()
    );
}

#[test]
fn external_embeddings_need_single_edge_type() {
    let (dir, bundle) = prepared();
    let emb = dir.path().join("e.emb");
    fs::write(&emb, "").unwrap();
    let out = bite(&[
        "refine",
        "--bundle",
        s(&bundle),
        "--out",
        s(&dir.path().join("r")),
        "--embeddings",
        s(&emb),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--edge-type"));
}

#[test]
fn ablation_over_four_variants_gives_four_summary_rows() {
    let (dir, bundle) = prepared();
    let refined = dir.path().join("refined");
    ok(&["refine", "--bundle", s(&bundle), "--out", s(&refined)]);
    let out = dir.path().join("abl");
    ok(&[
        "ablation",
        "--bundle",
        s(&bundle),
        "--refined-bundle",
        s(&refined),
        "--variants",
        "b,r,a,ra",
        "--seeds",
        "0,1",
        "--epochs",
        "20",
        "--out",
        s(&out),
    ]);
    let summary = fs::read_to_string(out.join("summary.tsv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows[0], "variant\truns\tval_mean\tval_std\ttest_mean\ttest_std");
    let keys: Vec<&str> = rows[1..].iter().map(|r| r.split('\t').next().unwrap()).collect();
    assert_eq!(keys, ["b", "r", "a", "ra"]);
    let results = fs::read_to_string(out.join("results.tsv")).unwrap();
    assert_eq!(results.lines().next(), Some("variant\tseed\tval_acc\ttest_acc"));
    assert_eq!(results.lines().count(), 1 + 8);
}

#[test]
fn refined_variant_without_refined_bundle_fails() {
    let (dir, bundle) = prepared();
    let out = bite(&[
        "train",
        "--bundle",
        s(&bundle),
        "--variant",
        "r",
        "--out",
        s(&dir.path().join("m")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn divergence_exits_with_code_three() {
    let (dir, bundle) = prepared();
    let out = bite(&[
        "train",
        "--bundle",
        s(&bundle),
        "--lr",
        "1e300",
        "--out",
        s(&dir.path().join("m")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("epoch"));
}

#[test]
fn data_dir_variable_supplies_default_bundle() {
    let (dir, bundle) = prepared();
    let model = dir.path().join("m");
    let out = Command::new(env!("CARGO_BIN_EXE_bite"))
        .args(["train", "--epochs", "3", "--out", s(&model)])
        .env("BITE_DATA_DIR", &bundle)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(model.join("params.ckpt").exists());

    let missing = bite(&["train", "--out", s(&model)]);
    assert!(stderr(&missing).contains("BITE_DATA_DIR"));
}

#[test]
fn eval_reproduces_training_metrics() {
    let (dir, bundle) = prepared();
    let model = dir.path().join("m");
    ok(&[
        "train",
        "--bundle",
        s(&bundle),
        "--variant",
        "a",
        "--seed",
        "3",
        "--out",
        s(&model),
    ]);
    ok(&["eval", "--model", s(&model)]);
    let results = fs::read_to_string(model.join("results.tsv")).unwrap();
    let r: Vec<&str> = results.lines().nth(1).unwrap().split('\t').collect();
    let eval = fs::read_to_string(model.join("eval.tsv")).unwrap();
    let acc = |split: &str| {
        eval.lines()
            .find(|l| l.starts_with(&format!("{split}\t")))
            .and_then(|l| l.split('\t').nth(2))
            .unwrap()
            .to_string()
    };
    assert_eq!((r[2], r[3]), (acc("val").as_str(), acc("test").as_str()));
    let predictions = fs::read_to_string(model.join("predictions.tsv")).unwrap();
    assert_eq!(predictions.lines().count(), 1 + 30);
}
