//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bitype::corpus::{tokenize_all, FixedVocabulary, NgramMiner, PhraseMiner};
use bitype::embed::{load_embeddings, ppmi_word_embeddings, tfidf_doc_embeddings, EmbeddingTable};
use bitype::graph::EdgeType;
use bitype::io;
use bitype::model::predict;
use bitype::pipeline::prepare_with_vocabulary;
use bitype::refine::{graph_report, refine_graph, RefineConfig};
use bitype::train::{
    accuracy, argmax, build_model, parse_variants, run_ablation, stratified_split, train, AblationTable, ModelOptions,
    TrainConfig, Variant,
};

use crate::bundle::{copy_bundle_except, write_bundle, write_edges, Bundle, NewBundle};
use crate::config::{render, Config};
use crate::{AblationArgs, EvalArgs, ModelArgs, PrepareArgs, RefineArgs, TrainArgs, TrainingArgs};

pub const DATA_DIR_ENV: &str = "BITE_DATA_DIR";

fn required<T>(v: Option<T>, flag: &str, key: &str) -> Result<T> {
    v.with_context(|| format!("missing --{flag} (config key `{key}`)"))
}

/// Bundle from flag, then config, then `$BITE_DATA_DIR`.
fn bundle_path(cfg: &Config, flag: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(p) = cfg.pick_path(flag, "data.bundle")? {
        return Ok(p);
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => Ok(PathBuf::from(dir)),
        None => bail!("missing --bundle (config key `data.bundle`, or set {DATA_DIR_ENV})"),
    }
}

pub fn prepare(args: PrepareArgs) -> Result<()> {
    let cfg = Config::load(args.config.as_deref())?;
    let corpus_path = required(cfg.pick_path(args.corpus, "data.corpus")?, "corpus", "data.corpus")?;
    let out = required(cfg.pick_path(args.out, "data.out")?, "out", "data.out")?;
    let citations_path = cfg.pick_path(args.citations, "data.citations")?;
    let labels_path = cfg.pick_path(args.labels, "data.labels")?;
    let vocab_path = cfg.pick_path(args.vocab, "corpus.vocab")?;
    let max_n = cfg.pick(args.max_n, "corpus.max_n")?.unwrap_or(3);
    let min_freq = cfg.pick(args.min_freq, "corpus.min_freq")?.unwrap_or(2);
    let max_vocab = cfg.pick(args.max_vocab, "corpus.max_vocab")?;

    let mut raw = io::read_corpus(&corpus_path)?;
    raw.sort_by_key(|(id, _)| *id);
    let corpus_ids: Vec<usize> = raw.iter().map(|(id, _)| *id).collect();
    let index: BTreeMap<usize, usize> = corpus_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let texts: Vec<String> = raw.into_iter().map(|(_, t)| t).collect();
    let docs = tokenize_all(&texts);

    let lookup = |id: usize, path: &Path| {
        index
            .get(&id)
            .copied()
            .with_context(|| format!("{}: document {id} is not in the corpus", path.display()))
    };
    let mut citations = Vec::new();
    if let Some(p) = &citations_path {
        for (a, b, _) in io::parse_edge_list(p)? {
            citations.push((lookup(a, p)?, lookup(b, p)?));
        }
    }
    let mut labels: Vec<Option<String>> = vec![None; docs.len()];
    if let Some(p) = &labels_path {
        for (id, l) in io::read_labels(p)? {
            labels[lookup(id, p)?] = Some(l);
        }
    }

    let phrases = match &vocab_path {
        Some(p) => FixedVocabulary::from_names(&io::read_vocabulary(p)?).mine(&docs)?,
        None => NgramMiner {
            max_n,
            min_freq,
            max_vocab,
        }
        .mine(&docs)?,
    };
    let prepared = prepare_with_vocabulary(docs, &citations, phrases)?;
    write_bundle(
        &out,
        &NewBundle {
            docs: &prepared.docs,
            phrases: &prepared.phrases,
            graph: &prepared.graph,
            features: &prepared.features,
            labels: &labels,
            corpus_ids: &corpus_ids,
        },
    )?;
    let g = &prepared.graph;
    println!(
        "documents {}\twords {}\tdd {}\tww {}\tdw {}\tlabeled {}",
        g.n_docs(),
        g.n_words(),
        g.undirected_count(EdgeType::DD),
        g.undirected_count(EdgeType::WW),
        g.undirected_count(EdgeType::DW),
        labels.iter().flatten().count()
    );
    Ok(())
}

fn parse_edge_types(s: &str) -> Result<Vec<EdgeType>> {
    match s.trim().to_ascii_lowercase().as_str() {
        "both" => Ok(vec![EdgeType::DD, EdgeType::WW]),
        "dd" => Ok(vec![EdgeType::DD]),
        "ww" => Ok(vec![EdgeType::WW]),
        other => bail!("--edge-type must be dd, ww or both, got `{other}`"),
    }
}

pub fn refine(args: RefineArgs) -> Result<()> {
    let cfg = Config::load(args.config.as_deref())?;
    let src = bundle_path(&cfg, args.bundle)?;
    let out = required(cfg.pick_path(args.out, "data.out")?, "out", "data.out")?;
    let types = parse_edge_types(
        &cfg.pick(args.edge_type, "refine.edge_type")?
            .unwrap_or_else(|| "both".into()),
    )?;
    let defaults = RefineConfig::default();
    let rc = RefineConfig {
        t_high: cfg.pick(args.t_high, "refine.t_high")?.unwrap_or(defaults.t_high),
        t_low: cfg.pick(args.t_low, "refine.t_low")?.unwrap_or(defaults.t_low),
        max_added_per_node: cfg.pick(args.max_added_per_node, "refine.max_added_per_node")?,
    };
    rc.validate()?;
    let external = cfg.pick_path(args.embeddings, "refine.embeddings")?;
    if external.is_some() && types.len() != 1 {
        bail!("--embeddings needs a single --edge-type (dd or ww)");
    }
    let window = cfg.pick(args.window, "refine.window")?.unwrap_or(5);

    let bundle = Bundle::load(&src)?;
    let phrases = bundle.phrases()?;
    let n_docs = bundle.graph.n_docs();
    let mut graph = bundle.graph.clone();
    let mut report = Vec::new();
    for &t in &types {
        let table = match (&external, t) {
            (Some(p), _) => {
                let offset = if t == EdgeType::WW { n_docs } else { 0 };
                let ids: Vec<usize> = (0..graph.block_size(t)).map(|i| i + offset).collect();
                let global = load_embeddings(p, &ids)?;
                EmbeddingTable::new(
                    global.dim(),
                    global.iter().map(|(id, v)| (id - offset, v.to_vec())).collect(),
                )?
            }
            (None, EdgeType::DD) => tfidf_doc_embeddings(&bundle.docs, &phrases)?,
            (None, _) => {
                let dim = cfg.pick(args.dim, "refine.dim")?.unwrap_or(32).min(phrases.len());
                ppmi_word_embeddings(&bundle.docs, &phrases, window, dim)?
            }
        };
        let refined = refine_graph(&graph, t, &table, &rc)?;
        let r = graph_report(&graph, &refined, t);
        report.push(vec![
            t.to_string(),
            r.before.to_string(),
            r.after.to_string(),
            r.added.to_string(),
            r.removed.to_string(),
            r.retained.to_string(),
        ]);
        println!(
            "{t}\tbefore {}\tafter {}\tadded {}\tremoved {}",
            r.before, r.after, r.added, r.removed
        );
        graph = refined;
    }
    copy_bundle_except(&src, &out, &types)?;
    for &t in &types {
        write_edges(&out, &graph, t)?;
    }
    io::write_tsv(
        &out.join("refine_report.tsv"),
        &["edge_type", "before", "after", "added", "removed", "retained"],
        &report,
    )?;
    Ok(())
}

fn model_options(cfg: &Config, m: &ModelArgs) -> Result<ModelOptions> {
    let d = ModelOptions::default();
    Ok(ModelOptions {
        hidden_dim: cfg.pick(m.hidden, "model.hidden")?.unwrap_or(d.hidden_dim),
        dropout: cfg.pick(m.dropout, "model.dropout")?.unwrap_or(d.dropout),
        heads: cfg.pick(m.heads, "model.heads")?.unwrap_or(d.heads),
    })
}

fn train_config(cfg: &Config, t: &TrainingArgs) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    Ok(TrainConfig {
        lr: cfg.pick(t.lr, "train.lr")?.unwrap_or(d.lr),
        epochs: cfg.pick(t.epochs, "train.epochs")?.unwrap_or(d.epochs),
        patience: cfg.pick(t.patience, "train.patience")?.unwrap_or(d.patience),
        weight_decay: cfg
            .pick(t.weight_decay, "train.weight_decay")?
            .unwrap_or(d.weight_decay),
        seed: cfg.pick(t.seed, "train.seed")?.unwrap_or(d.seed),
    })
}

fn load_bundles(cfg: &Config, bundle: Option<PathBuf>, refined: Option<PathBuf>) -> Result<(Bundle, Option<Bundle>)> {
    let base = Bundle::load(&bundle_path(cfg, bundle)?)?;
    let refined = match cfg.pick_path(refined, "data.refined_bundle")? {
        Some(p) => Some(Bundle::load(&p)?),
        None => None,
    };
    Ok((base, refined))
}

fn absolute(p: &Path) -> Result<PathBuf> {
    fs::canonicalize(p).with_context(|| format!("resolving {}", p.display()))
}

fn fmt_acc(a: f64) -> String {
    format!("{a:.6}")
}

pub fn train_cmd(args: TrainArgs) -> Result<()> {
    let cfg = Config::load(args.config.as_deref())?;
    let out = required(cfg.pick_path(args.out, "data.out")?, "out", "data.out")?;
    let variant: Variant = cfg.pick(args.variant, "model.variant")?.unwrap_or(Variant::B);
    let opts = model_options(&cfg, &args.model)?;
    let tc = train_config(&cfg, &args.training)?;
    let (base, refined) = load_bundles(&cfg, args.bundle, args.refined_bundle)?;
    let ds = base.dataset_with(refined.as_ref())?;

    let split = stratified_split(&ds.labels, tc.seed);
    let model = build_model(variant, &ds, &opts)?;
    let outcome = train(model.as_ref(), &ds.labels, &split, &tc)?;
    let z = predict(model.as_ref(), &outcome.params)?;
    let acc = |ids: &[usize]| -> Result<String> {
        Ok(if ids.is_empty() {
            "nan".into()
        } else {
            fmt_acc(accuracy(&z, &ds.labels, ids)?)
        })
    };

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    io::write_checkpoint(&out.join("params.ckpt"), &outcome.params)?;
    let history: Vec<Vec<String>> = outcome
        .history
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.train_nll.to_string(),
                r.train_acc.to_string(),
                r.val_acc.to_string(),
                r.val_loss.to_string(),
            ]
        })
        .collect();
    io::write_tsv(
        &out.join("history.tsv"),
        &["epoch", "train_loss", "train_nll", "train_acc", "val_acc", "val_loss"],
        &history,
    )?;
    let (val, test) = (acc(&split.val)?, acc(&split.test)?);
    io::write_tsv(
        &out.join("results.tsv"),
        &AblationTable::RESULTS_HEADER,
        &[vec![
            variant.key().to_string(),
            tc.seed.to_string(),
            val.clone(),
            test.clone(),
        ]],
    )?;
    let mut pairs = vec![("data.bundle", absolute(&base.dir)?.display().to_string())];
    if let Some(r) = &refined {
        pairs.push(("data.refined_bundle", absolute(&r.dir)?.display().to_string()));
    }
    pairs.extend([
        ("model.variant", variant.key().to_string()),
        ("model.hidden", opts.hidden_dim.to_string()),
        ("model.heads", opts.heads.to_string()),
        ("model.dropout", opts.dropout.to_string()),
        ("train.lr", tc.lr.to_string()),
        ("train.epochs", tc.epochs.to_string()),
        ("train.patience", tc.patience.to_string()),
        ("train.weight_decay", tc.weight_decay.to_string()),
        ("train.seed", tc.seed.to_string()),
    ]);
    fs::write(out.join("model.cfg"), render("written by `bite train`", &pairs))
        .with_context(|| format!("writing {}", out.join("model.cfg").display()))?;
    println!(
        "{}\tseed {}\tepochs {}\tbest {}\ttrain {}\tval {val}\ttest {test}",
        variant.label(),
        tc.seed,
        outcome.history.len(),
        outcome.best_epoch.map_or("-".into(), |e| e.to_string()),
        acc(&split.train)?,
    );
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let cfg = Config::load(Some(&args.model.join("model.cfg")))?;
    let variant: Variant = required(cfg.get("model.variant")?, "variant", "model.variant")?;
    let opts = model_options(&cfg, &ModelArgs::default())?;
    let tc = train_config(&cfg, &TrainingArgs::default())?;
    let (base, refined) = load_bundles(&cfg, args.bundle, args.refined_bundle)?;
    let ds = base.dataset_with(refined.as_ref())?;
    let model = build_model(variant, &ds, &opts)?;
    let params = io::read_checkpoint(&args.model.join("params.ckpt"))?;
    let z = predict(model.as_ref(), &params)?;
    let split = stratified_split(&ds.labels, tc.seed);

    let mut rows = Vec::new();
    for (name, ids) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        let a = if ids.is_empty() {
            "nan".into()
        } else {
            fmt_acc(accuracy(&z, &ds.labels, ids)?)
        };
        println!("{name}\t{}\t{a}", ids.len());
        rows.push(vec![name.to_string(), ids.len().to_string(), a]);
    }
    let out = args.out.unwrap_or_else(|| args.model.join("eval.tsv"));
    io::write_tsv(&out, &["split", "count", "accuracy"], &rows)?;
    let predictions: Vec<Vec<String>> = (0..ds.graph.n_docs())
        .map(|i| vec![i.to_string(), base.classes[argmax(z.row(i))].clone()])
        .collect();
    io::write_tsv(
        &out.with_file_name("predictions.tsv"),
        &["doc", "predicted"],
        &predictions,
    )?;
    Ok(())
}

pub fn ablation(args: AblationArgs) -> Result<()> {
    let cfg = Config::load(args.config.as_deref())?;
    let out = required(cfg.pick_path(args.out, "data.out")?, "out", "data.out")?;
    let variants = parse_variants(
        &cfg.pick(args.variants, "train.variants")?
            .unwrap_or_else(|| "gcn,b,r,a,ra".into()),
    )?;
    let seeds: Vec<u64> = match cfg.pick(args.seeds, "train.seeds")? {
        Some(s) => s
            .split(',')
            .filter(|p: &&str| !p.trim().is_empty())
            .map(|p: &str| p.trim().parse().with_context(|| format!("invalid seed `{p}`")))
            .collect::<Result<_>>()?,
        None => (0..5).collect(),
    };
    if variants.is_empty() || seeds.is_empty() {
        bail!("ablation needs at least one variant and one seed");
    }
    let opts = model_options(&cfg, &args.model)?;
    let tc = train_config(&cfg, &args.training)?;
    let (base, refined) = load_bundles(&cfg, args.bundle, args.refined_bundle)?;
    let ds = base.dataset_with(refined.as_ref())?;

    let table = run_ablation(&ds, &variants, &seeds, &opts, &tc)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    io::write_tsv(
        &out.join("results.tsv"),
        &AblationTable::RESULTS_HEADER,
        &table.result_cells(),
    )?;
    io::write_tsv(
        &out.join("summary.tsv"),
        &AblationTable::SUMMARY_HEADER,
        &table.summary_cells(),
    )?;
    for s in table.summary() {
        println!(
            "{}\t{:.4} ± {:.4}\t(n={})",
            s.variant.label(),
            s.test_mean,
            s.test_std,
            s.runs
        );
    }
    Ok(())
}
