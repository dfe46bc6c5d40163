//! Command-line interface. Machine-readable results go to files under
//! `--out`; a short human summary goes to standard output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use acd_core::baselines::BaselineKind;
use acd_core::corpus::{CommunityKind, CommunityStats, Partition, Section};
use acd_core::evaluation::{
    cluster_rows, clustering_seed, ground_truth_rows, EvaluationReport, MeetingEmbeddings, PredictedCommunities,
};
use acd_core::sampling::{epoch_resample, Examples, MetaArchitecture, SamplingPools};
use acd_core::synthetic::{self, SyntheticConfig};
use acd_core::{seed, Error};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io;
use crate::pipeline::{self, Corpus, MultiRunMetrics};

#[derive(Debug, Parser)]
#[command(name = "acd", version, about = "Utterance embeddings and abstractive community detection for meetings")]
pub struct Cli {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub meta: Option<MetaArchitecture>,
    /// Hinge margin for the triplet loss.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Pre-context size.
    #[arg(long)]
    pub pre: Option<usize>,
    /// Post-context size.
    #[arg(long)]
    pub post: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct EvalArgs {
    /// Ranking cut-offs, e.g. `v,10`.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<String>,
    /// FCM community counts, e.g. `v,11`.
    #[arg(long, value_delimiter = ',')]
    pub q: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the corpus and report community and vocabulary statistics.
    IngestCheck,
    /// Report sampling pools and per-epoch example counts.
    SampleStats {
        #[arg(long)]
        meta: Option<MetaArchitecture>,
    },
    /// Train the encoder; one directory per run.
    Train {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Embed the evaluation partition with a checkpoint.
    Embed {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also write the attention weights of one utterance, `MEETING:T`.
        #[arg(long)]
        dump_attention: Option<String>,
    },
    /// Fuzzy c-means communities from an embeddings file.
    Cluster {
        #[arg(long)]
        embeddings: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Ranking and Omega metrics of a checkpoint, a training directory or
    /// an embeddings file.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, conflicts_with_all = ["train_dir", "embeddings"])]
        checkpoint: Option<PathBuf>,
        /// Output directory of `train`; every run's best checkpoint is scored.
        #[arg(long, conflicts_with = "embeddings")]
        train_dir: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Embed and evaluate with the tf-idf or word-vector baseline.
    Baseline {
        #[arg(long)]
        kind: Option<BaselineKind>,
        #[arg(long)]
        pre: Option<usize>,
        #[arg(long)]
        post: Option<usize>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Finite-difference check of both losses at the configured encoder size.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Train and evaluate every (pre, post) context pair; writes a CSV.
    SweepContext {
        #[arg(long, value_delimiter = ',', required = true)]
        pre: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        post: Vec<usize>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        meta: Option<MetaArchitecture>,
    },
    /// Write a synthetic planted-community corpus, word vectors and config.
    Synth {
        #[arg(long)]
        meetings: Option<usize>,
        /// Fixture seed (independent of the global seed).
        #[arg(long)]
        fixture_seed: Option<u64>,
    },
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn domain(e: Error) -> CliError {
    CliError::Domain(e)
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_model(cfg: &mut RunConfig, m: &ModelArgs) {
    if let Some(meta) = m.meta {
        cfg.energy.meta = meta;
        if meta == MetaArchitecture::Siamese && m.margin.is_none() {
            cfg.energy.margin = None;
        }
    }
    if m.margin.is_some() {
        cfg.energy.margin = m.margin;
    }
    if let Some(p) = m.pre {
        cfg.encoder.context_pre = p;
    }
    if let Some(p) = m.post {
        cfg.encoder.context_post = p;
    }
}

fn apply_eval(cfg: &mut RunConfig, e: &EvalArgs) {
    if !e.k.is_empty() {
        cfg.evaluation.k = e.k.clone();
    }
    if !e.q.is_empty() {
        cfg.evaluation.q = e.q.clone();
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("acd-out"))
}

/// Validates the config up front; usage-level problems map to exit code 2.
fn checked(cfg: RunConfig) -> CliResult<RunConfig> {
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = load_config(&cli)?;
    let out = out_dir(&cli);
    match &cli.command {
        Command::IngestCheck => ingest_check(&checked(cfg)?, cli.out.as_deref()),
        Command::SampleStats { meta } => {
            if let Some(m) = meta {
                cfg.energy.meta = *m;
                cfg.energy.margin = None;
            }
            sample_stats(&checked(cfg)?, cli.out.as_deref())
        }
        Command::Train { model, runs } => {
            apply_model(&mut cfg, model);
            if let Some(r) = runs {
                cfg.train.runs = *r;
            }
            train(&checked(cfg)?, &out)
        }
        Command::Embed {
            model,
            checkpoint,
            dump_attention,
        } => {
            apply_model(&mut cfg, model);
            let target = dump_attention.as_deref().map(parse_target).transpose()?;
            embed(&checked(cfg)?, checkpoint, target, &out)
        }
        Command::Cluster { embeddings, eval } => {
            apply_eval(&mut cfg, eval);
            cluster(&checked(cfg)?, embeddings, &out)
        }
        Command::Evaluate {
            model,
            eval,
            checkpoint,
            train_dir,
            embeddings,
        } => {
            apply_model(&mut cfg, model);
            apply_eval(&mut cfg, eval);
            let source = match (checkpoint, train_dir, embeddings) {
                (Some(c), None, None) => Source::Checkpoint(c.clone()),
                (None, Some(d), None) => Source::TrainDir(d.clone()),
                (None, None, Some(e)) => Source::Embeddings(e.clone()),
                _ => {
                    return Err(CliError::Usage(
                        "evaluate needs one of --checkpoint, --train-dir or --embeddings".into(),
                    ))
                }
            };
            evaluate(&checked(cfg)?, source, &out)
        }
        Command::Baseline { kind, pre, post, eval } => {
            if let Some(k) = kind {
                cfg.baseline.kind = *k;
            }
            if let Some(p) = pre {
                cfg.baseline.context_pre = *p;
            }
            if let Some(p) = post {
                cfg.baseline.context_post = *p;
            }
            apply_eval(&mut cfg, eval);
            baseline(&checked(cfg)?, &out)
        }
        Command::Gradcheck { eps, tolerance } => gradcheck(&checked(cfg)?, *eps, *tolerance),
        Command::SweepContext { pre, post, runs, meta } => {
            if let Some(m) = meta {
                cfg.energy.meta = *m;
                cfg.energy.margin = None;
            }
            if let Some(r) = runs {
                cfg.train.runs = *r;
            }
            sweep_context(&checked(cfg)?, pre, post, &out)
        }
        Command::Synth { meetings, fixture_seed } => {
            let mut sc = SyntheticConfig::default();
            if let Some(m) = meetings {
                sc.meetings = *m;
            }
            if let Some(s) = fixture_seed {
                sc.seed = *s;
            }
            synth(&sc, &out)
        }
    }
}

fn parse_target(s: &str) -> CliResult<(String, usize)> {
    let (m, t) = s
        .rsplit_once(':')
        .ok_or_else(|| CliError::Usage(format!("--dump-attention expects MEETING:T, got `{s}`")))?;
    let t = t
        .parse()
        .map_err(|_| CliError::Usage(format!("utterance index `{t}` is not a number")))?;
    Ok((m.to_string(), t))
}

fn ingest_check(cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    cfg.validate_paths(false)?;
    let meetings = io::load_corpus(cfg.corpus.as_deref().expect("validated"), &cfg.features.blocklist)?;
    let mut partitions = BTreeMap::new();
    for m in &meetings {
        let e = partitions.entry(m.partition.label()).or_insert([0usize; 3]);
        e[0] += 1;
        e[1] += m.len();
        e[2] += m.summary_worthy().len();
    }
    let stats = CommunityStats::collect(&meetings);
    println!("{} meetings", meetings.len());
    for (p, [n, u, s]) in &partitions {
        println!("  {p:<10} {n:>5} meetings {u:>7} utterances {s:>6} summary-worthy");
    }
    print!("{:<10}", "section");
    for k in CommunityKind::ALL {
        print!(" {:>11}", k.label());
    }
    println!(" {:>7}", "total");
    let mut table = BTreeMap::new();
    for s in Section::ALL {
        print!("{:<10}", s.label());
        let row: BTreeMap<&str, usize> = CommunityKind::ALL
            .iter()
            .enumerate()
            .map(|(i, k)| (k.label(), stats.counts[Section::ALL.iter().position(|&x| x == s).unwrap()][i]))
            .collect();
        for k in CommunityKind::ALL {
            print!(" {:>11}", row[k.label()]);
        }
        println!(" {:>7}", stats.section_total(s));
        table.insert(s.label(), row);
    }
    println!("{:<10} {:>59}", "total", stats.total());
    let mut report = json!({
        "meetings": meetings.len(),
        "partitions": partitions.iter().map(|(p, [n, u, s])| (p.to_string(), json!({"meetings": n, "utterances": u, "summary_worthy": s}))).collect::<BTreeMap<_, _>>(),
        "communities": table,
        "community_total": stats.total(),
    });
    if let Some(path) = cfg.embeddings.as_deref() {
        let vocab = io::vocabulary(&meetings);
        let vectors = io::load_word_vectors(path, Some(&vocab))?;
        let oov = vocab.iter().filter(|t| vectors.get(t).is_none()).count();
        println!("vocabulary: {} types, {oov} without a pretrained vector", vocab.len());
        report["vocabulary"] = json!({"types": vocab.len(), "oov_types": oov, "vector_dim": vectors.dim()});
    }
    if let Some(dir) = out {
        io::write_json(&dir.join("ingest.json"), &report)?;
    }
    Ok(())
}

fn sample_stats(cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    cfg.validate_paths(false)?;
    let meetings = io::load_corpus(cfg.corpus.as_deref().expect("validated"), &cfg.features.blocklist)?;
    let train: Vec<_> = meetings.into_iter().filter(|m| m.partition == Partition::Train).collect();
    let pools = SamplingPools::build(&train);
    let meta = cfg.meta();
    let base = seed::derive(pools_seed(cfg), 1);
    let n = cfg.train.examples_per_epoch;
    let e0 = epoch_resample(0, base, &pools, meta, n)?;
    let e1 = epoch_resample(1, base, &pools, meta, n)?;
    let again = epoch_resample(0, base, &pools, meta, n)?;
    let counts = |e: &Examples| match e {
        Examples::Pairs(p) => json!({
            "genuine": p.iter().filter(|x| x.label.target() == 0.0).count(),
            "impostor": p.iter().filter(|x| x.label.target() == 1.0).count(),
        }),
        Examples::Triplets(t) => json!({"triplets": t.len()}),
    };
    let report = json!({
        "meta": meta.label(),
        "train_meetings": train.len(),
        "pools": {
            "genuine_pairs": pools.genuine_total(),
            "impostor_pairs": pools.impostor_total(),
            "triplets": pools.triplet_total(),
        },
        "epoch_examples": counts(&e0),
        "epochs_differ": e0 != e1,
        "rerun_identical": e0 == again,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    if let Some(dir) = out {
        io::write_json(&dir.join("sample_stats.json"), &report)?;
    }
    Ok(())
}

/// The training seed of run 0, so `sample-stats` shows what `train` draws.
fn pools_seed(cfg: &RunConfig) -> u64 {
    pipeline::run_seed(cfg.seed, 0)
}

fn train(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let corpus = Corpus::load(cfg)?;
    io::write_text(&out.join("config.toml"), &cfg.to_toml())?;
    let mut runs = Vec::new();
    for r in 0..cfg.train.runs {
        let run = pipeline::train_run(cfg, &corpus, r, Some(&pipeline::run_dir(out, r)))?;
        let m = &run.manifest;
        println!(
            "run {r}: best epoch {} validation loss {:.6}",
            m.best_epoch, m.best_validation_loss
        );
        runs.push(m.clone());
    }
    let best: Vec<BTreeMap<String, f64>> = runs
        .iter()
        .map(|m| {
            let last = m.report.history.last().map_or(f64::NAN, |e| e.train_loss);
            BTreeMap::from([
                ("best_validation_loss".to_string(), m.best_validation_loss),
                ("final_train_loss".to_string(), last),
            ])
        })
        .collect();
    let summary = acd_core::evaluation::mean_std(&best);
    let manifest = json!({
        "runs": runs.iter().map(|m| json!({
            "run": m.run,
            "dir": format!("run-{:02}", m.run),
            "seed": m.seed,
            "best_epoch": m.best_epoch,
            "best_validation_loss": m.best_validation_loss,
        })).collect::<Vec<_>>(),
        "config_hash": runs.first().map(|m| m.config_hash.clone()),
        "mean": summary.iter().map(|(k, v)| (k.clone(), v.0)).collect::<BTreeMap<_, _>>(),
        "std": summary.iter().map(|(k, v)| (k.clone(), v.1)).collect::<BTreeMap<_, _>>(),
    });
    io::write_json(&out.join("manifest.json"), &manifest)?;
    println!("wrote {}", out.join("manifest.json").display());
    Ok(())
}

fn embed(cfg: &RunConfig, checkpoint: &Path, target: Option<(String, usize)>, out: &Path) -> CliResult<()> {
    let corpus = Corpus::load(cfg)?;
    let (encoder, store) = pipeline::load_encoder(cfg, checkpoint)?;
    let embeddings = pipeline::embed_partition(&encoder, &store, &corpus, cfg.evaluation.partition)?;
    io::write_json(&out.join("embeddings.json"), &embeddings)?;
    println!(
        "embedded {} meetings ({} utterances)",
        embeddings.len(),
        embeddings.iter().map(|e| e.indices.len()).sum::<usize>()
    );
    if let Some((meeting_id, t)) = target {
        let (m, f) = corpus
            .meetings
            .iter()
            .zip(&corpus.features)
            .find(|(m, _)| m.meeting_id == meeting_id)
            .ok_or_else(|| domain(Error::Config(format!("no meeting `{meeting_id}`"))))?;
        if t >= m.len() {
            return Err(domain(Error::Config(format!("meeting `{meeting_id}` has {} utterances", m.len()))));
        }
        let trace = encoder.trace(&store, f, t)?;
        let ctx = |c: &acd_core::encoder::ContextTrace| {
            json!({"utterance": c.utterance, "offset": c.offset, "beta": c.beta, "alpha": c.alpha,
                   "tokens": m.utterances[c.utterance].tokens})
        };
        let report = json!({
            "meeting_id": meeting_id,
            "utterance": t,
            "tokens": m.utterances[t].tokens,
            "pre": trace.pre.iter().map(ctx).collect::<Vec<_>>(),
            "post": trace.post.iter().map(ctx).collect::<Vec<_>>(),
            "positions": trace.positions,
            "gamma": trace.gamma,
            "embedding": trace.embedding,
        });
        for c in trace.pre.iter().chain(&trace.post) {
            println!("  context {:>4} (offset {:>2}) beta {:.4}", c.utterance, c.offset, c.beta);
        }
        for (p, g) in trace.positions.iter().zip(&trace.gamma) {
            let label = p
                .parse::<usize>()
                .ok()
                .and_then(|i| m.utterances[t].tokens.get(i).cloned())
                .unwrap_or_else(|| p.clone());
            println!("  {label:<16} gamma {g:.4}");
        }
        let path = out.join(format!("attention-{meeting_id}-{t}.json"));
        io::write_json(&path, &report)?;
    }
    Ok(())
}

/// FCM communities of every embedded meeting at every `|Q|`.
fn predict_communities(cfg: &RunConfig, corpus_meetings: &[acd_core::corpus::Meeting], embeddings: &[MeetingEmbeddings]) -> CliResult<Vec<PredictedCommunities>> {
    let ecfg = cfg.eval_config()?;
    let mut out = Vec::new();
    for e in embeddings {
        let m = corpus_meetings
            .iter()
            .find(|m| m.meeting_id == e.meeting_id)
            .ok_or_else(|| domain(Error::Config(format!("embeddings for unknown meeting `{}`", e.meeting_id))))?;
        if e.vectors.len() < 2 {
            continue;
        }
        let truth = ground_truth_rows(m, e, true).len();
        for &q in &ecfg.qs {
            let a = cluster_rows(&e.vectors, q.resolve(truth), &ecfg.fcm, clustering_seed(ecfg.seed, &m.meeting_id, q))?;
            out.push(PredictedCommunities {
                meeting_id: m.meeting_id.clone(),
                q: q.label(),
                communities: a.communities.iter().map(|c| c.iter().map(|&r| e.indices[r]).collect()).collect(),
                unassigned_bucket: a.unassigned_bucket,
            });
        }
    }
    Ok(out)
}

fn cluster(cfg: &RunConfig, embeddings: &Path, out: &Path) -> CliResult<()> {
    cfg.validate_paths(false)?;
    let meetings = io::load_corpus(cfg.corpus.as_deref().expect("validated"), &cfg.features.blocklist)?;
    let embeddings: Vec<MeetingEmbeddings> = io::read_json(embeddings)?;
    let predicted = predict_communities(cfg, &meetings, &embeddings)?;
    io::write_json(&out.join("communities.json"), &predicted)?;
    for p in &predicted {
        println!("{} |Q|={}: {} communities", p.meeting_id, p.q, p.communities.len());
    }
    Ok(())
}

enum Source {
    Checkpoint(PathBuf),
    TrainDir(PathBuf),
    Embeddings(PathBuf),
}

fn communities_of(report: &EvaluationReport) -> Vec<PredictedCommunities> {
    report.meetings.iter().flat_map(|m| m.communities.iter().cloned()).collect()
}

fn evaluate(cfg: &RunConfig, source: Source, out: &Path) -> CliResult<()> {
    let corpus = Corpus::load(cfg)?;
    let partition = cfg.evaluation.partition;
    match source {
        Source::Embeddings(path) => {
            let embeddings: Vec<MeetingEmbeddings> = io::read_json(&path)?;
            finish_single(&pipeline::evaluate(cfg, &corpus, &embeddings)?, out)
        }
        Source::Checkpoint(path) => {
            let (encoder, store) = pipeline::load_encoder(cfg, &path)?;
            let embeddings = pipeline::embed_partition(&encoder, &store, &corpus, partition)?;
            finish_single(&pipeline::evaluate(cfg, &corpus, &embeddings)?, out)
        }
        Source::TrainDir(dir) => {
            let mut reports = Vec::new();
            let mut r = 0;
            while pipeline::run_dir(&dir, r).join("best.ckpt").exists() {
                let (encoder, store) = pipeline::load_encoder(cfg, &pipeline::run_dir(&dir, r).join("best.ckpt"))?;
                let embeddings = pipeline::embed_partition(&encoder, &store, &corpus, partition)?;
                reports.push(pipeline::evaluate(cfg, &corpus, &embeddings)?);
                r += 1;
            }
            if reports.is_empty() {
                return Err(domain(Error::Config(format!("no run-00/best.ckpt under {}", dir.display()))));
            }
            let all: Vec<_> = reports.iter().flat_map(communities_of).collect();
            let multi = MultiRunMetrics::new(reports);
            io::write_json(&out.join("metrics.json"), &multi)?;
            io::write_json(&out.join("communities.json"), &all)?;
            print!("{}", pipeline::metrics_table(&multi.mean, Some(&multi.std)));
            Ok(())
        }
    }
}

fn finish_single(report: &EvaluationReport, out: &Path) -> CliResult<()> {
    io::write_json(&out.join("metrics.json"), report)?;
    io::write_json(&out.join("communities.json"), &communities_of(report))?;
    print!("{}", pipeline::metrics_table(&report.aggregate, None));
    Ok(())
}

fn baseline(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let corpus = Corpus::load(cfg)?;
    let embeddings = pipeline::baseline_partition(cfg, &corpus, cfg.evaluation.partition)?;
    io::write_json(&out.join("embeddings.json"), &embeddings)?;
    println!("baseline {}", cfg.baseline.kind.label());
    finish_single(&pipeline::evaluate(cfg, &corpus, &embeddings)?, out)
}

fn gradcheck(cfg: &RunConfig, eps: f64, tolerance: f64) -> CliResult<()> {
    let reports = pipeline::toy_gradcheck(cfg.encoder, cfg.seed, eps)?;
    let mut worst = 0.0f64;
    for (meta, report) in &reports {
        println!("{} loss", meta.label());
        for (group, err) in pipeline::group_errors(report) {
            println!("  {group:<12} {err:.3e}");
        }
        worst = worst.max(report.max_rel_err());
    }
    if worst <= tolerance {
        println!("max relative error {worst:.3e} <= {tolerance:e}");
        Ok(())
    } else {
        Err(domain(Error::Config(format!(
            "gradient check failed: max relative error {worst:.3e} > {tolerance:e}"
        ))))
    }
}

fn sweep_context(cfg: &RunConfig, pres: &[usize], posts: &[usize], out: &Path) -> CliResult<()> {
    let corpus = Corpus::load(cfg)?;
    let mut rows = Vec::new();
    for &pre in pres {
        for &post in posts {
            let mut c = cfg.clone();
            c.encoder = c.encoder.with_context(pre, post);
            let dir = out.join(format!("pre{pre}-post{post}"));
            let mut reports = Vec::new();
            for r in 0..c.train.runs {
                let run = pipeline::train_run(&c, &corpus, r, Some(&pipeline::run_dir(&dir, r)))?;
                let emb = pipeline::embed_partition(&run.encoder, &run.best, &corpus, c.evaluation.partition)?;
                reports.push(pipeline::evaluate(&c, &corpus, &emb)?);
            }
            let multi = MultiRunMetrics::new(reports);
            io::write_json(&dir.join("metrics.json"), &multi)?;
            println!("({pre},{post})");
            print!("{}", pipeline::metrics_table(&multi.mean, Some(&multi.std)));
            rows.push((pre, post, c.train.runs, multi));
        }
    }
    let keys: Vec<String> = rows
        .iter()
        .flat_map(|r| r.3.mean.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let path = out.join("sweep.csv");
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::format(&path, e.to_string()))?;
    let mut header = vec!["pre".to_string(), "post".to_string(), "runs".to_string()];
    for k in &keys {
        header.push(format!("{k}_mean"));
        header.push(format!("{k}_std"));
    }
    let csv_err = |e: csv::Error| CliError::format(&path, e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (pre, post, runs, multi) in &rows {
        let mut rec = vec![pre.to_string(), post.to_string(), runs.to_string()];
        for k in &keys {
            let f = |m: &BTreeMap<String, f64>| m.get(k).map(|v| format!("{:.4}", v * 100.0)).unwrap_or_default();
            rec.push(f(&multi.mean));
            rec.push(f(&multi.std));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn synth(sc: &SyntheticConfig, out: &Path) -> CliResult<()> {
    let corpus = synthetic::generate(sc)?;
    io::write_corpus(&out.join("corpus"), &corpus.meetings)?;
    io::write_word_vectors(&out.join("vectors.txt"), &corpus.vectors)?;
    let cfg = RunConfig {
        corpus: Some("corpus".into()),
        embeddings: Some("vectors.txt".into()),
        ..RunConfig::default()
    };
    io::write_text(&out.join("config.toml"), &cfg.to_toml())?;
    println!(
        "wrote {} meetings and {} word vectors to {}",
        corpus.meetings.len(),
        corpus.vectors.len(),
        out.display()
    );
    Ok(())
}
