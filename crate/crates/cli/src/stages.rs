//! Pipeline stages. Each reads its inputs from the run directory and writes
//! its outputs there.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clem_core::cluster::{
    adjusted_rand_index, kmeans_restarts, parse_labels, rand_index, select_k, Clustering,
    DEFAULT_MAX_ITER, DEFAULT_RESTARTS, DEFAULT_TOL,
};
use clem_core::embedding::{
    analogy as rank_analogy, embed_addresses, embed_five_tuples, embed_ports, sample_capped,
    AnalogyQuery, EmbeddingTable, EntityKind,
};
use clem_core::model::{load_checkpoint, EncoderModel};
use clem_core::reduction::{neighbor_reduce, pca_reduce, Method, ReducedPoints};
use clem_core::synth::{generate, NetProfile};
use clem_core::tokenizer::{train_wordpiece, Vocab};
use clem_core::trainer::{
    checkpoint_name, encode_lines, make_windows, masked_token_accuracy, train_stream, StreamState,
    WindowReport,
};
use clem_core::zeek::{read_conn_log, Exclusions, FiveTuple};
use ndarray::Array2;
use serde::Serialize;

use crate::artifacts::{
    check_writable, read_input, read_input_bytes, require, to_json, write_output, Provenance,
    RunDir,
};
use crate::config::{ClusterSpace, RunConfig};
use crate::svg;

/// Shared state of one stage invocation.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub cfg: RunConfig,
    pub dir: RunDir,
    pub force: bool,
}

impl Ctx {
    pub fn new(cfg: RunConfig, out: impl Into<std::path::PathBuf>, force: bool) -> Self {
        Self {
            cfg,
            dir: RunDir::new(out),
            force,
        }
    }

    fn provenance(&self, stage: &str) -> Provenance {
        Provenance::new(stage, &self.cfg)
    }
}

/// Non-comment lines of a text artifact.
fn data_lines(text: &str) -> Vec<String> {
    text.lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub lines: usize,
    pub addresses: usize,
    pub injected: usize,
}

/// Four-role synthetic conn log with truth labels and the anomaly sidecar.
pub fn synth(ctx: &Ctx) -> Result<SynthSummary> {
    let cfg = &ctx.cfg;
    let mut profile = NetProfile::four_role(cfg.seed, cfg.synth_lines);
    profile.client_ports_per_flow = cfg.client_ports_per_flow;
    if let Some(plan) = profile.anomaly.as_mut() {
        plan.rate = cfg.anomaly_rate;
    }
    let out = generate(&profile, cfg.synth_lines)?;
    let prov = ctx.provenance("synth");
    let d = &ctx.dir;
    for path in [
        d.conn_log(),
        d.truth_addresses(),
        d.truth_connections(),
        d.anomalies(),
    ] {
        check_writable(&path, ctx.force)?;
    }
    let (first, rest) = out.log.split_once('\n').expect("log has directives");
    let log = format!("{first}\n#clem\t{}\n{rest}", prov.fields());
    write_output(&d.conn_log(), log, ctx.force)?;
    write_output(
        &d.truth_addresses(),
        prov.comment() + &out.truth_addresses,
        ctx.force,
    )?;
    write_output(
        &d.truth_connections(),
        prov.comment() + &out.truth_connections,
        ctx.force,
    )?;
    write_output(&d.anomalies(), prov.comment() + &out.anomalies, ctx.force)?;
    Ok(SynthSummary {
        lines: out.conns.len(),
        addresses: out.truth_addresses.lines().count(),
        injected: out.injected.len(),
    })
}

/// Parses a conn log into the training corpus and the aligned five tuples.
pub fn ingest(ctx: &Ctx, input: &Path) -> Result<usize> {
    require(input)?;
    let exclude = Exclusions::with_extra(&ctx.cfg.exclude_fields)?;
    let file =
        std::fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let records = read_conn_log(BufReader::new(file), None, &exclude)
        .with_context(|| format!("parsing {}", input.display()))?;
    let prov = ctx.provenance("ingest");
    let mut corpus = prov.comment();
    let mut tuples = prov.comment();
    for r in &records {
        corpus.push_str(&r.to_training_line());
        corpus.push('\n');
        tuples.push_str(&r.five_tuple().to_line());
        tuples.push('\n');
    }
    check_writable(&ctx.dir.corpus(), ctx.force)?;
    check_writable(&ctx.dir.tuples(), ctx.force)?;
    write_output(&ctx.dir.corpus(), corpus, ctx.force)?;
    write_output(&ctx.dir.tuples(), tuples, ctx.force)?;
    Ok(records.len())
}

fn load_vocab(ctx: &Ctx) -> Result<Vocab> {
    let text = read_input(&ctx.dir.vocab())?;
    Vocab::from_reader(text.as_bytes())
        .with_context(|| format!("parsing {}", ctx.dir.vocab().display()))
}

/// WordPiece vocabulary over the whole corpus.
pub fn train_tokenizer(ctx: &Ctx) -> Result<usize> {
    let lines = data_lines(&read_input(&ctx.dir.corpus())?);
    let vocab = train_wordpiece(&lines, ctx.cfg.vocab_size, ctx.cfg.min_frequency)?;
    #[derive(Serialize)]
    struct Sidecar {
        provenance: Provenance,
        corpus_lines: usize,
        tokens: usize,
    }
    let side = Sidecar {
        provenance: ctx.provenance("train-tokenizer"),
        corpus_lines: lines.len(),
        tokens: vocab.len(),
    };
    check_writable(&ctx.dir.vocab(), ctx.force)?;
    check_writable(&ctx.dir.vocab_provenance(), ctx.force)?;
    write_output(&ctx.dir.vocab(), vocab.to_file_string(), ctx.force)?;
    write_output(&ctx.dir.vocab_provenance(), to_json(&side), ctx.force)?;
    Ok(vocab.len())
}

/// Window outcome without timing, for reproducible reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSummary {
    pub window_index: usize,
    pub start: usize,
    pub end: usize,
    pub epochs_used: usize,
    pub final_loss: f64,
    pub converged: bool,
}

impl From<&WindowReport> for WindowSummary {
    fn from(r: &WindowReport) -> Self {
        Self {
            window_index: r.window_index,
            start: r.start,
            end: r.end,
            epochs_used: r.epochs_used,
            final_loss: r.final_loss,
            converged: r.converged,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainMetrics {
    pub dataset: String,
    pub windows: Vec<WindowSummary>,
    /// Masked-token accuracy of the final model on the last window.
    pub last_window_masked_accuracy: f64,
    pub provenance: Provenance,
    pub config: RunConfig,
}

/// Sliding-window training with one checkpoint per window.
pub fn train(ctx: &Ctx) -> Result<TrainMetrics> {
    let cfg = &ctx.cfg;
    let vocab = load_vocab(ctx)?;
    let lines = data_lines(&read_input(&ctx.dir.corpus())?);
    if lines.is_empty() {
        bail!("{} holds no lines", ctx.dir.corpus().display());
    }
    let spec = cfg.window();
    let tc = cfg.train();
    let windows = make_windows(lines.len(), &spec)?;
    let ckpt_dir = ctx.dir.checkpoints();
    for i in 0..windows.len() {
        check_writable(&ckpt_dir.join(checkpoint_name(i)), ctx.force)?;
    }
    check_writable(&ctx.dir.train_report(), ctx.force)?;
    check_writable(&ctx.dir.train_metrics(), ctx.force)?;
    std::fs::create_dir_all(&ckpt_dir)
        .with_context(|| format!("creating {}", ckpt_dir.display()))?;
    let prov = ctx.provenance("train");
    let model = EncoderModel::init(cfg.model(vocab.len()))?;
    let outcome = train_stream(
        &lines,
        &vocab,
        StreamState::new(model),
        &spec,
        &tc,
        Some(&ckpt_dir),
        &prov.as_meta(),
    )?;
    let last = windows.last().expect("non-empty stream").clone();
    let seqs = encode_lines(&vocab, &lines[last], cfg.max_len);
    let accuracy = masked_token_accuracy(&outcome.state.model, &seqs, &tc, cfg.seed ^ 0xacc)?;

    #[derive(Serialize)]
    struct Line<'a> {
        #[serde(flatten)]
        report: &'a WindowReport,
        provenance: &'a Provenance,
    }
    let jsonl: String = outcome
        .reports
        .iter()
        .map(|report| {
            serde_json::to_string(&Line {
                report,
                provenance: &prov,
            })
            .expect("serializes")
                + "\n"
        })
        .collect();
    write_output(&ctx.dir.train_report(), jsonl, ctx.force)?;
    let metrics = TrainMetrics {
        dataset: cfg.dataset.clone(),
        windows: outcome.reports.iter().map(WindowSummary::from).collect(),
        last_window_masked_accuracy: accuracy,
        provenance: prov,
        config: cfg.clone(),
    };
    write_output(&ctx.dir.train_metrics(), to_json(&metrics), ctx.force)?;
    Ok(metrics)
}

fn read_tuples(ctx: &Ctx) -> Result<Vec<FiveTuple>> {
    data_lines(&read_input(&ctx.dir.tuples())?)
        .iter()
        .map(|l| FiveTuple::parse_line(l).map_err(Into::into))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbedSummary {
    pub window_index: usize,
    pub connections: usize,
    pub addresses: usize,
    pub ports: usize,
}

/// Connection, address and port tables from one window checkpoint (the
/// last by default).
pub fn embed(ctx: &Ctx, window: Option<usize>) -> Result<EmbedSummary> {
    let cfg = &ctx.cfg;
    let vocab = load_vocab(ctx)?;
    let n_lines = data_lines(&read_input(&ctx.dir.corpus())?).len();
    let n_windows = make_windows(n_lines, &cfg.window())?.len();
    let index = match window {
        Some(w) if w >= n_windows => bail!("window {w} does not exist; the stream has {n_windows}"),
        Some(w) => w,
        None => n_windows.checked_sub(1).context("empty corpus")?,
    };
    let bytes = read_input_bytes(&ctx.dir.checkpoints().join(checkpoint_name(index)))?;
    let (model, _meta) = load_checkpoint::<f32>(&bytes, None)?;
    if model.config.vocab_size != vocab.len() {
        bail!(
            "checkpoint expects {} tokens but {} holds {}",
            model.config.vocab_size,
            ctx.dir.vocab().display(),
            vocab.len()
        );
    }
    let mut seen = HashSet::new();
    let distinct: Vec<FiveTuple> = read_tuples(ctx)?
        .into_iter()
        .filter(|t| seen.insert(t.clone()))
        .collect();
    let tuples = sample_capped(&distinct, cfg.connection_cap, cfg.seed);
    let addresses: Vec<&str> = tuples
        .iter()
        .flat_map(|t| [t.orig_h.as_str(), t.resp_h.as_str()])
        .collect();
    let ports: Vec<u16> = tuples.iter().flat_map(|t| [t.orig_p, t.resp_p]).collect();
    let opts = cfg.embed();
    let tables = [
        embed_five_tuples(&model, &vocab, &tuples, Some(index), &opts)?,
        embed_addresses(&model, &vocab, &addresses, Some(index), &opts)?,
        embed_ports(&model, &vocab, &ports, Some(index), &opts)?,
    ];
    let prov = ctx.provenance("embed");
    for t in &tables {
        check_writable(&ctx.dir.embeddings(t.kind()), ctx.force)?;
    }
    for t in &tables {
        write_output(
            &ctx.dir.embeddings(t.kind()),
            prov.comment() + &t.to_file_string(),
            ctx.force,
        )?;
    }
    Ok(EmbedSummary {
        window_index: index,
        connections: tables[0].len(),
        addresses: tables[1].len(),
        ports: tables[2].len(),
    })
}

pub fn load_table(ctx: &Ctx, kind: EntityKind) -> Result<EmbeddingTable> {
    let path = ctx.dir.embeddings(kind);
    EmbeddingTable::from_file_str(&read_input(&path)?)
        .with_context(|| format!("parsing {}", path.display()))
}

/// Two- or three-dimensional projection of one table.
pub fn reduce(ctx: &Ctx, kind: EntityKind) -> Result<ReducedPoints> {
    let cfg = &ctx.cfg;
    let table = load_table(ctx, kind)?;
    let keys = table.keys().to_vec();
    let points = match cfg.reduce_method {
        Method::Pca => pca_reduce(&keys, table.vectors().view(), cfg.target_dim)?,
        Method::Neighbor => {
            let mut params = cfg.neighbor();
            if params.n_neighbors >= table.len() {
                params.n_neighbors = table.len().saturating_sub(1).max(1);
                log::warn!(
                    "n_neighbors lowered to {} for {} entries",
                    params.n_neighbors,
                    table.len()
                );
            }
            neighbor_reduce(&keys, table.vectors().view(), &params)?
        }
    };
    let mut text = ctx.provenance("reduce").comment();
    text.push_str(&format!("# method={}", points.method.as_str()));
    for (k, v) in &points.params {
        text.push_str(&format!(" {k}={v}"));
    }
    text.push('\n');
    text.push_str(&points.to_file_string());
    write_output(&ctx.dir.reduced(kind), text, ctx.force)?;
    Ok(points)
}

fn load_reduced(ctx: &Ctx, kind: EntityKind) -> Result<ReducedPoints> {
    let path = ctx.dir.reduced(kind);
    ReducedPoints::from_file_str(&read_input(&path)?, ctx.cfg.reduce_method)
        .with_context(|| format!("parsing {}", path.display()))
}

fn default_truth(ctx: &Ctx, kind: EntityKind) -> Result<std::path::PathBuf> {
    match kind {
        EntityKind::Address => Ok(ctx.dir.truth_addresses()),
        EntityKind::Connection => Ok(ctx.dir.truth_connections()),
        EntityKind::Port => bail!("port tables have no default labels; pass --truth"),
    }
}

fn read_truth(path: &Path) -> Result<HashMap<String, String>> {
    let pairs =
        parse_labels(&read_input(path)?).with_context(|| format!("parsing {}", path.display()))?;
    Ok(pairs.into_iter().collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterMetrics {
    pub dataset: String,
    pub kind: EntityKind,
    pub space: ClusterSpace,
    pub n_embeddings: usize,
    pub best_k: usize,
    pub expert_label_count: usize,
    pub ari: f64,
    /// ARI at k = 1, 2, …
    pub curve: Vec<f64>,
    pub provenance: Provenance,
    pub config: RunConfig,
}

/// K-means over the labeled rows of a table (or of its reduced coordinates)
/// with the ARI-maximizing k.
pub fn cluster(ctx: &Ctx, kind: EntityKind, truth: Option<&Path>) -> Result<ClusterMetrics> {
    let cfg = &ctx.cfg;
    let (keys, vectors) = match cfg.cluster_space {
        ClusterSpace::Full => {
            let table = load_table(ctx, kind)?;
            (table.keys().to_vec(), table.vectors().clone())
        }
        ClusterSpace::Reduced => {
            let points = load_reduced(ctx, kind)?;
            (points.keys, points.coords)
        }
    };
    let truth_path = match truth {
        Some(p) => p.to_path_buf(),
        None => default_truth(ctx, kind)?,
    };
    let truth = read_truth(&truth_path)?;
    let rows: Vec<usize> = (0..keys.len())
        .filter(|&i| truth.contains_key(&keys[i]))
        .collect();
    let skipped = keys.len() - rows.len();
    if skipped > 0 {
        log::warn!(
            "{skipped} {kind} entries have no label in {} and are left out",
            truth_path.display()
        );
    }
    if rows.is_empty() {
        bail!("no {kind} entry has a label in {}", truth_path.display());
    }
    let pairs: Vec<(String, &str)> = rows
        .iter()
        .map(|&i| (keys[i].clone(), truth[&keys[i]].as_str()))
        .collect();
    let (expert, names) = Clustering::from_named(&pairs)?;
    let points: Array2<f64> = vectors.select(ndarray::Axis(0), &rows);
    let k_max = if cfg.k_max == 0 {
        names.len()
    } else {
        cfg.k_max
    }
    .min(rows.len());
    let sel = select_k(points.view(), &expert.labels, k_max, cfg.seed)?;
    let best = kmeans_restarts(
        points.view(),
        sel.best_k,
        cfg.seed,
        DEFAULT_RESTARTS,
        DEFAULT_MAX_ITER,
        DEFAULT_TOL,
    )?;
    let prov = ctx.provenance("cluster");
    let mut assignments = prov.comment();
    for (key, label) in expert.keys.iter().zip(&best.labels) {
        assignments.push_str(&format!("{key}\t{label}\n"));
    }
    let metrics = ClusterMetrics {
        dataset: cfg.dataset.clone(),
        kind,
        space: cfg.cluster_space,
        n_embeddings: rows.len(),
        best_k: sel.best_k,
        expert_label_count: names.len(),
        ari: sel.best_ari,
        curve: sel.curve,
        provenance: prov,
        config: cfg.clone(),
    };
    check_writable(&ctx.dir.clusters(kind), ctx.force)?;
    check_writable(&ctx.dir.cluster_metrics(kind), ctx.force)?;
    write_output(&ctx.dir.clusters(kind), assignments, ctx.force)?;
    write_output(&ctx.dir.cluster_metrics(kind), to_json(&metrics), ctx.force)?;
    Ok(metrics)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalMetrics {
    pub n: usize,
    pub ri: f64,
    pub ari: f64,
    pub provenance: Provenance,
}

/// RI and ARI between two label files over the same keys.
pub fn eval(ctx: &Ctx, a: &Path, b: &Path) -> Result<EvalMetrics> {
    let load = |p: &Path| -> Result<Clustering> {
        let pairs =
            parse_labels(&read_input(p)?).with_context(|| format!("parsing {}", p.display()))?;
        Ok(Clustering::from_named(&pairs)?.0)
    };
    let (ca, cb) = (load(a)?, load(b)?);
    let metrics = EvalMetrics {
        n: ca.len(),
        ri: rand_index(&ca, &cb)?,
        ari: adjusted_rand_index(&ca, &cb)?,
        provenance: ctx.provenance("eval"),
    };
    write_output(&ctx.dir.eval_metrics(), to_json(&metrics), ctx.force)?;
    Ok(metrics)
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalogyHit {
    pub key: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalogyReport {
    pub query: AnalogyQuery,
    pub candidates: EntityKind,
    pub results: Vec<AnalogyHit>,
    pub provenance: Provenance,
}

/// `v(base) - v(subtract) + v(add)` against one table. Terms are looked up
/// in the connection, port and address tables, in that order.
pub fn analogy(
    ctx: &Ctx,
    base: &str,
    subtract: &str,
    add: &str,
    candidates: EntityKind,
) -> Result<AnalogyReport> {
    let mut tables = Vec::new();
    for kind in [
        EntityKind::Connection,
        EntityKind::Port,
        EntityKind::Address,
    ] {
        if ctx.dir.embeddings(kind).exists() || kind == candidates {
            tables.push(load_table(ctx, kind)?);
        }
    }
    let pool = tables
        .iter()
        .find(|t| t.kind() == candidates)
        .expect("candidate table loaded");
    let query = AnalogyQuery {
        base: base.into(),
        subtract: subtract.into(),
        add: add.into(),
        k: ctx.cfg.analogy_k,
    };
    let refs: Vec<&EmbeddingTable> = tables.iter().collect();
    let results = rank_analogy(&refs, pool, &query)?
        .into_iter()
        .map(|(key, cosine)| AnalogyHit { key, cosine })
        .collect();
    let report = AnalogyReport {
        query,
        candidates,
        results,
        provenance: ctx.provenance("analogy"),
    };
    write_output(&ctx.dir.analogy(), to_json(&report), ctx.force)?;
    Ok(report)
}

/// Scatter plot of the reduced table colored by expert label, and the
/// ARI-vs-k curve of the cluster stage.
pub fn report(ctx: &Ctx, kind: EntityKind, truth: Option<&Path>) -> Result<usize> {
    let points = load_reduced(ctx, kind)?;
    let truth_path = match truth {
        Some(p) => p.to_path_buf(),
        None => default_truth(ctx, kind)?,
    };
    let truth = read_truth(&truth_path)?;
    let labeled: Vec<(f64, f64, String)> = points
        .keys
        .iter()
        .zip(points.coords.outer_iter())
        .filter_map(|(k, c)| truth.get(k).map(|l| (c[0], c[1], l.clone())))
        .collect();
    let groups: BTreeMap<&str, usize> = labeled.iter().fold(BTreeMap::new(), |mut m, p| {
        *m.entry(p.2.as_str()).or_insert(0) += 1;
        m
    });
    let metrics_path = ctx.dir.cluster_metrics(kind);
    let metrics: serde_json::Value = serde_json::from_str(&read_input(&metrics_path)?)
        .with_context(|| format!("parsing {}", metrics_path.display()))?;
    let curve: Vec<f64> = metrics["curve"]
        .as_array()
        .context("metrics file lacks a curve")?
        .iter()
        .filter_map(serde_json::Value::as_f64)
        .collect();
    let prov = ctx.provenance("report").fields();
    let scatter = svg::scatter(
        &labeled,
        &format!("{kind} embeddings by expert label"),
        &prov,
    );
    let chart = svg::line_chart(
        &curve,
        &format!("ARI vs k ({kind})"),
        "K-means clusters",
        "ARI",
        &prov,
    );
    check_writable(&ctx.dir.scatter(kind), ctx.force)?;
    check_writable(&ctx.dir.ari_curve(kind), ctx.force)?;
    write_output(&ctx.dir.scatter(kind), scatter, ctx.force)?;
    write_output(&ctx.dir.ari_curve(kind), chart, ctx.force)?;
    Ok(groups.len())
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineSummary {
    pub lines: usize,
    pub train: TrainMetrics,
    pub embed: EmbedSummary,
    pub address: ClusterMetrics,
    pub connection: ClusterMetrics,
}

/// Every stage in order: synthesis (unless `input` is given), ingestion,
/// tokenizer and model training, embedding, then reduce, cluster and report
/// for the address and connection tables.
pub fn pipeline(ctx: &Ctx, input: Option<&Path>) -> Result<PipelineSummary> {
    let input = match input {
        Some(p) => p.to_path_buf(),
        None => {
            synth(ctx)?;
            ctx.dir.conn_log()
        }
    };
    let lines = ingest(ctx, &input)?;
    train_tokenizer(ctx)?;
    let train = train(ctx)?;
    let embed = embed(ctx, None)?;
    let run_kind = |kind| -> Result<ClusterMetrics> {
        reduce(ctx, kind)?;
        let metrics = cluster(ctx, kind, None)?;
        report(ctx, kind, None)?;
        Ok(metrics)
    };
    let address = run_kind(EntityKind::Address)?;
    let connection = run_kind(EntityKind::Connection)?;
    Ok(PipelineSummary {
        lines,
        train,
        embed,
        address,
        connection,
    })
}
