//! TOML run configuration. Every key has a default, so an empty file runs
//! the full protocol; relative paths resolve against the file's directory.

use std::path::{Path, PathBuf};

use acd_core::baselines::{BaselineConfig, BaselineKind};
use acd_core::clustering::{CommunityCount, Distance, FcmConfig};
use acd_core::corpus::{default_blocklist, Partition, DEFAULT_TEXT_DIM, DISCOURSE_DIM};
use acd_core::encoder::EncoderConfig;
use acd_core::energy::{EnergyConfig, TrainConfig};
use acd_core::evaluation::{EvalConfig, TopK};
use acd_core::sampling::MetaArchitecture;
use acd_core::Error;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub text_dim: usize,
    /// ASR tags removed from token streams.
    pub blocklist: Vec<String>,
}

impl Default for FeatureSection {
    fn default() -> Self {
        Self {
            text_dim: DEFAULT_TEXT_DIM,
            blocklist: default_blocklist(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Ranking cut-offs: `"v"` (community size) or a number.
    pub k: Vec<String>,
    /// FCM cluster counts: `"v"` (ground-truth count) or a number.
    pub q: Vec<String>,
    pub partition: Partition,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            k: vec!["v".into(), "10".into()],
            q: vec!["v".into(), "11".into()],
            partition: Partition::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub kind: BaselineKind,
    pub context_pre: usize,
    pub context_post: usize,
    pub embedding_dim: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let b = BaselineConfig::new(BaselineKind::Tfidf);
        Self {
            kind: b.kind,
            context_pre: b.context_pre,
            context_post: b.context_post,
            embedding_dim: b.embedding_dim,
        }
    }
}

fn default_energy() -> EnergyConfig {
    EnergyConfig::triplet()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed. Training, OOV vectors and FCM restarts derive from it;
    /// `train.seed` is overwritten with it.
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub features: FeatureSection,
    pub encoder: EncoderConfig,
    #[serde(default = "default_energy")]
    pub energy: EnergyConfig,
    pub train: TrainConfig,
    /// `fcm.distance` follows the meta-architecture and is ignored here.
    pub fcm: FcmConfig,
    pub evaluation: EvaluationSection,
    pub baseline: BaselineSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus: None,
            embeddings: None,
            features: FeatureSection::default(),
            encoder: EncoderConfig::default(),
            energy: default_energy(),
            train: TrainConfig::default(),
            fcm: FcmConfig::default(),
            evaluation: EvaluationSection::default(),
            baseline: BaselineSection::default(),
        }
    }
}

pub fn parse_list<T: std::str::FromStr<Err = Error>>(items: &[String]) -> Result<Vec<T>, Error> {
    items.iter().map(|s| s.trim().parse()).collect()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Reads a config file; call `validate` before use.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| CliError::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.corpus, &mut cfg.embeddings].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn meta(&self) -> MetaArchitecture {
        self.energy.meta
    }

    pub fn distance(&self) -> Distance {
        Distance::for_meta(self.energy.meta)
    }

    pub fn ks(&self) -> Result<Vec<TopK>, Error> {
        parse_list(&self.evaluation.k)
    }

    pub fn qs(&self) -> Result<Vec<CommunityCount>, Error> {
        parse_list(&self.evaluation.q)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.train }
    }

    pub fn eval_config(&self) -> Result<EvalConfig, Error> {
        Ok(EvalConfig {
            ks: self.ks()?,
            qs: self.qs()?,
            fcm: FcmConfig {
                distance: self.distance(),
                ..self.fcm
            },
            distance: self.distance(),
            seed: self.seed,
        })
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            kind: self.baseline.kind,
            context_pre: self.baseline.context_pre,
            context_post: self.baseline.context_post,
            text_dim: self.features.text_dim,
            embedding_dim: self.baseline.embedding_dim,
        }
    }

    /// Checks every value without touching data.
    pub fn validate(&self) -> Result<(), Error> {
        self.encoder.validate()?;
        self.energy.validate()?;
        self.train.validate()?;
        self.fcm.validate()?;
        let ks = self.ks()?;
        let qs = self.qs()?;
        if ks.is_empty() || qs.is_empty() {
            return Err(Error::Config("evaluation.k and evaluation.q need at least one entry".into()));
        }
        if self.features.text_dim == 0 || self.baseline.embedding_dim == 0 {
            return Err(Error::Config("features.text_dim and baseline.embedding_dim must be positive".into()));
        }
        Ok(())
    }

    /// Encoder input width against the token features built from data.
    pub fn validate_features(&self) -> Result<(), Error> {
        if self.encoder.feature_dim != self.features.text_dim + DISCOURSE_DIM {
            return Err(Error::Config(format!(
                "encoder.feature_dim {} must equal features.text_dim {} + {DISCOURSE_DIM}",
                self.encoder.feature_dim, self.features.text_dim
            )));
        }
        Ok(())
    }

    /// Validation plus existence of the corpus and embedding files.
    pub fn validate_paths(&self, need_embeddings: bool) -> CliResult<()> {
        let corpus = self
            .corpus
            .as_deref()
            .ok_or_else(|| CliError::Domain(Error::Config("`corpus` is not set".into())))?;
        if !corpus.exists() {
            return Err(CliError::Domain(Error::Config(format!("corpus {} does not exist", corpus.display()))));
        }
        match self.embeddings.as_deref() {
            Some(p) if !p.exists() => Err(CliError::Domain(Error::Config(format!(
                "embeddings {} do not exist",
                p.display()
            )))),
            None if need_embeddings => Err(CliError::Domain(Error::Config("`embeddings` is not set".into()))),
            _ => Ok(()),
        }
    }
}
