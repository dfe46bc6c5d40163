//! Glue between the core library and the commands: corpus preparation,
//! training runs with checkpoints, embedding, baselines and evaluation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use acd_core::baselines::baseline_embed;
use acd_core::corpus::{FeatureSpace, Meeting, MeetingFeatures, Partition, WordVectors};
use acd_core::encoder::{Encoder, EncoderConfig};
use acd_core::energy::{check_loss_gradients, train, EnergyConfig, EpochStats, TrainReport, TrainingSet};
use acd_core::evaluation::{evaluate_corpus, mean_std, EvaluationReport, MeetingEmbeddings};
use acd_core::nn::checkpoint::CheckpointHeader;
use acd_core::nn::{GradCheckReport, ParamStore, Tensor};
use acd_core::sampling::{Examples, MetaArchitecture, PairExample, PairLabel, TripletExample, UtteranceRef};
use acd_core::{seed, Error};
use log::info;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io;

/// Meetings with their fitted feature space and precomputed token features.
pub struct Corpus {
    pub meetings: Vec<Meeting>,
    pub space: FeatureSpace,
    pub features: Vec<MeetingFeatures>,
}

impl Corpus {
    pub fn new(meetings: Vec<Meeting>, vectors: WordVectors, text_dim: usize, oov_seed: u64) -> Result<Self, Error> {
        let space = FeatureSpace::fit(&meetings, vectors, text_dim, oov_seed)?;
        let features = meetings.iter().map(|m| space.meeting_features(m)).collect();
        Ok(Self {
            meetings,
            space,
            features,
        })
    }

    /// Loads the configured corpus and word vectors (restricted to the
    /// corpus vocabulary).
    pub fn load(cfg: &RunConfig) -> CliResult<Self> {
        cfg.validate_paths(true)?;
        cfg.validate_features()?;
        let meetings = io::load_corpus(cfg.corpus.as_deref().expect("validated"), &cfg.features.blocklist)?;
        let vocab = io::vocabulary(&meetings);
        let vectors = io::load_word_vectors(cfg.embeddings.as_deref().expect("validated"), Some(&vocab))?;
        let corpus = Self::new(meetings, vectors, cfg.features.text_dim, cfg.seed)?;
        info!("loaded {} meetings", corpus.meetings.len());
        Ok(corpus)
    }

    pub fn partition(&self, p: Partition) -> (Vec<Meeting>, Vec<MeetingFeatures>) {
        self.meetings
            .iter()
            .zip(&self.features)
            .filter(|(m, _)| m.partition == p)
            .map(|(m, f)| (m.clone(), f.clone()))
            .unzip()
    }
}

/// Seed of training run `run`.
pub fn run_seed(global: u64, run: usize) -> u64 {
    seed::derive(global, 1000 + run as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run: usize,
    pub seed: u64,
    pub config_hash: String,
    /// One-based epoch with the lowest validation loss.
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub best_checkpoint: Option<String>,
    pub report: TrainReport,
}

pub struct TrainedRun {
    pub manifest: RunManifest,
    pub encoder: Encoder,
    pub best: ParamStore,
}

fn hex(h: u64) -> String {
    format!("{h:016x}")
}

/// Trains one run. With `out`, every epoch's parameters go to
/// `out/epoch-NN.ckpt`, the best ones to `out/best.ckpt` and the manifest
/// to `out/manifest.json`; manifest paths are relative to `out`.
pub fn train_run(cfg: &RunConfig, corpus: &Corpus, run: usize, out: Option<&Path>) -> CliResult<TrainedRun> {
    cfg.validate()?;
    let run_seed = run_seed(cfg.seed, run);
    let mut rng = seed::derived_rng(run_seed, 0);
    let (encoder, initial) = Encoder::init(cfg.encoder, &mut rng)?;
    let (train_m, train_f) = corpus.partition(Partition::Train);
    let (val_m, val_f) = corpus.partition(Partition::Validation);
    if train_m.is_empty() || val_m.is_empty() {
        return Err(Error::Config("training needs train and validation meetings".into()).into());
    }
    let hash = cfg.encoder.config_hash();
    let mut io_error: Option<CliError> = None;
    let outcome = train(
        &encoder,
        initial,
        &cfg.energy,
        &cfg.train_config(run_seed),
        TrainingSet {
            meetings: &train_m,
            features: &train_f,
        },
        TrainingSet {
            meetings: &val_m,
            features: &val_f,
        },
        |stats: &EpochStats, store: &ParamStore| {
            let Some(dir) = out else { return Ok(None) };
            let name = format!("epoch-{:02}.ckpt", stats.epoch);
            let header = CheckpointHeader {
                config_hash: hash,
                epoch: stats.epoch as u64,
            };
            match io::save_checkpoint(&dir.join(&name), store, header) {
                Ok(()) => Ok(Some(name)),
                Err(e) => {
                    let msg = e.to_string();
                    io_error = Some(e);
                    Err(Error::Checkpoint(msg))
                }
            }
        },
    );
    let outcome = match (outcome, io_error) {
        (_, Some(e)) => return Err(e),
        (o, None) => o?,
    };
    let best_idx = outcome.report.best_epoch()?;
    let best_stats = &outcome.report.history[best_idx];
    let mut manifest = RunManifest {
        run,
        seed: run_seed,
        config_hash: hex(hash),
        best_epoch: best_stats.epoch,
        best_validation_loss: best_stats.validation_loss,
        best_checkpoint: None,
        report: outcome.report.clone(),
    };
    if let Some(dir) = out {
        let header = CheckpointHeader {
            config_hash: hash,
            epoch: best_stats.epoch as u64,
        };
        io::save_checkpoint(&dir.join("best.ckpt"), &outcome.best, header)?;
        manifest.best_checkpoint = Some("best.ckpt".into());
        io::write_json(&dir.join("manifest.json"), &manifest)?;
    }
    Ok(TrainedRun {
        manifest,
        encoder,
        best: outcome.best,
    })
}

/// Rebuilds the encoder for a checkpoint, refusing a config mismatch.
pub fn load_encoder(cfg: &RunConfig, path: &Path) -> CliResult<(Encoder, ParamStore)> {
    let (header, store) = io::load_checkpoint(path)?;
    let expected = cfg.encoder.config_hash();
    if header.config_hash != expected {
        return Err(Error::Checkpoint(format!(
            "{} was trained with encoder config {}, current config is {}",
            path.display(),
            hex(header.config_hash),
            hex(expected)
        ))
        .into());
    }
    let encoder = Encoder::bind(cfg.encoder, &store)?;
    Ok((encoder, store))
}

/// Embeddings of the summary-worthy utterances of every meeting in `partition`.
pub fn embed_partition(
    encoder: &Encoder,
    store: &ParamStore,
    corpus: &Corpus,
    partition: Partition,
) -> Result<Vec<MeetingEmbeddings>, Error> {
    corpus
        .meetings
        .iter()
        .zip(&corpus.features)
        .filter(|(m, _)| m.partition == partition)
        .map(|(m, f)| {
            let indices = m.summary_worthy();
            Ok(MeetingEmbeddings {
                meeting_id: m.meeting_id.clone(),
                vectors: encoder.embed_meeting(store, f, &indices)?,
                indices,
            })
        })
        .collect()
}

/// Baseline representations of the summary-worthy utterances.
pub fn baseline_partition(cfg: &RunConfig, corpus: &Corpus, partition: Partition) -> Result<Vec<MeetingEmbeddings>, Error> {
    let bcfg = cfg.baseline_config();
    corpus
        .meetings
        .iter()
        .filter(|m| m.partition == partition)
        .map(|m| {
            let all = baseline_embed(m, Some(&corpus.space), &bcfg)?;
            let indices = m.summary_worthy();
            Ok(MeetingEmbeddings {
                meeting_id: m.meeting_id.clone(),
                vectors: indices.iter().map(|&t| all[t].clone()).collect(),
                indices,
            })
        })
        .collect()
}

/// Evaluates embeddings against the corpus meetings with matching ids.
pub fn evaluate(cfg: &RunConfig, corpus: &Corpus, embeddings: &[MeetingEmbeddings]) -> CliResult<EvaluationReport> {
    let by_id: BTreeMap<&str, &Meeting> = corpus.meetings.iter().map(|m| (m.meeting_id.as_str(), m)).collect();
    let pairs = embeddings
        .iter()
        .map(|e| {
            by_id
                .get(e.meeting_id.as_str())
                .map(|m| (*m, e))
                .ok_or_else(|| Error::Config(format!("embeddings for unknown meeting `{}`", e.meeting_id)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(evaluate_corpus(&pairs, &cfg.eval_config()?)?)
}

/// Metrics of several runs with their mean and standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiRunMetrics {
    pub runs: Vec<EvaluationReport>,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
}

impl MultiRunMetrics {
    pub fn new(runs: Vec<EvaluationReport>) -> Self {
        let aggregates: Vec<_> = runs.iter().map(|r| r.aggregate.clone()).collect();
        let stats = mean_std(&aggregates);
        Self {
            mean: stats.iter().map(|(k, v)| (k.clone(), v.0)).collect(),
            std: stats.into_iter().map(|(k, v)| (k, v.1)).collect(),
            runs,
        }
    }
}

/// Human table of metrics scaled by 100 with two decimals.
pub fn metrics_table(mean: &BTreeMap<String, f64>, std: Option<&BTreeMap<String, f64>>) -> String {
    let width = mean.keys().map(String::len).max().unwrap_or(6).max(6);
    let mut out = String::new();
    for (k, v) in mean {
        out.push_str(&format!("{k:<width$}  {:>6.2}", v * 100.0));
        if let Some(s) = std.and_then(|s| s.get(k)) {
            out.push_str(&format!(" ± {:.2}", s * 100.0));
        }
        out.push('\n');
    }
    out
}

/// Train-run directory for run `r` under `out`.
pub fn run_dir(out: &Path, r: usize) -> PathBuf {
    out.join(format!("run-{r:02}"))
}

/// Token counts of the gradient-check meeting.
const TOY_LENGTHS: [usize; 6] = [3, 5, 2, 4, 1, 5];

/// Gradient check of both training losses on one random six-utterance
/// meeting, at the encoder size given by `cfg`.
pub fn toy_gradcheck(cfg: EncoderConfig, seed_value: u64, eps: f64) -> Result<Vec<(MetaArchitecture, GradCheckReport)>, Error> {
    let mut rng = seed::derived_rng(seed_value, 0);
    let cap = cfg.max_tokens.unwrap_or(usize::MAX);
    let features = MeetingFeatures {
        utterances: TOY_LENGTHS
            .iter()
            .map(|&n| {
                let n = n.min(cap);
                let data = (0..n * cfg.feature_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                Tensor::matrix(n, cfg.feature_dim, data)
            })
            .collect::<Result<_, _>>()?,
    };
    let (encoder, store) = Encoder::init(cfg, &mut rng)?;
    let at = |index| UtteranceRef { meeting: 0, index };
    let pairs = Examples::Pairs(vec![
        PairExample { x: at(0), y: at(1), label: PairLabel::Genuine },
        PairExample { x: at(2), y: at(3), label: PairLabel::Genuine },
        PairExample { x: at(1), y: at(4), label: PairLabel::Impostor },
        PairExample { x: at(0), y: at(5), label: PairLabel::Impostor },
    ]);
    let triplets = Examples::Triplets(vec![
        TripletExample { positive: at(1), anchor: at(0), negative: at(4) },
        TripletExample { positive: at(3), anchor: at(2), negative: at(5) },
    ]);
    let mut out = Vec::new();
    for (energy, examples) in [(EnergyConfig::siamese(), pairs), (EnergyConfig::triplet(), triplets)] {
        let mut s = store.clone();
        let report = check_loss_gradients(&encoder, &mut s, &energy, std::slice::from_ref(&features), &examples, eps)?;
        out.push((energy.meta, report));
    }
    Ok(out)
}

/// Worst relative error per parameter group (name up to the first dot,
/// with `decay.pre`/`decay.post` and `gru.fwd`/`gru.bwd` kept apart).
pub fn group_errors(report: &GradCheckReport) -> BTreeMap<String, f64> {
    let mut groups = BTreeMap::new();
    for p in &report.params {
        let parts: Vec<&str> = p.name.split('.').collect();
        let key = match parts.as_slice() {
            [head @ ("decay" | "gru"), side, ..] => format!("{head}.{side}"),
            [head, ..] => head.to_string(),
            [] => String::new(),
        };
        let e = groups.entry(key).or_insert(0.0f64);
        *e = e.max(p.max_rel_err);
    }
    groups
}
