//! Token features: PCA-reduced word vectors concatenated with discourse
//! features (speaker role, dialogue act, normalized position).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::pca::{fit_pca, PcaProjection};
use super::types::{DialogueAct, Meeting, Partition, Role};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::seed;

/// Role (4) + dialogue act (16) + position (1).
pub const DISCOURSE_DIM: usize = 4 + 16 + 1;
/// Half of the default 42-dimensional token feature.
pub const DEFAULT_TEXT_DIM: usize = 21;
/// Half-width of the uniform range for out-of-vocabulary vectors.
pub const OOV_RANGE: f64 = 0.05;

/// Pretrained word-vector table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WordVectors {
    dim: usize,
    table: BTreeMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            table: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape {
                op: "word vectors",
                detail: alloc::format!("`{word}` has {} values, table dim is {}", vector.len(), self.dim),
            });
        }
        self.table.insert(word.into(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Exact match first, then lowercase.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.table
            .get(token)
            .or_else(|| self.table.get(&token.to_lowercase()))
            .map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<f64>)> {
        self.table.iter()
    }
}

/// Deterministic stand-in vector for an out-of-vocabulary surface form:
/// `dim` draws from U(−0.05, 0.05), seeded by the global seed and the token.
pub fn oov_vector(token: &str, dim: usize, oov_seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed::derive(oov_seed, seed::fnv1a(token.as_bytes())));
    (0..dim).map(|_| rng.gen_range(-OOV_RANGE..OOV_RANGE)).collect()
}

/// Normalized position `t/(T−1)`, or 0 for a one-utterance meeting.
pub fn normalized_position(t: usize, len: usize) -> f64 {
    if len <= 1 {
        0.0
    } else {
        t as f64 / (len - 1) as f64
    }
}

/// The 21 discourse dimensions of utterance `t`.
pub fn discourse_features(role: Role, act: DialogueAct, t: usize, len: usize) -> [f64; DISCOURSE_DIM] {
    let mut f = [0.0; DISCOURSE_DIM];
    f[role.one_hot_index()] = 1.0;
    f[4 + act.one_hot_index()] = 1.0;
    f[DISCOURSE_DIM - 1] = normalized_position(t, len);
    f
}

/// Text-dim + discourse-dim feature vector of one token.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenFeature(pub Vec<f64>);

impl TokenFeature {
    pub fn text(&self) -> &[f64] {
        &self.0[..self.0.len() - DISCOURSE_DIM]
    }

    pub fn discourse(&self) -> &[f64] {
        &self.0[self.0.len() - DISCOURSE_DIM..]
    }

    pub fn position(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

/// Per-utterance `[N_t, feature_dim]` token feature matrices of one meeting.
#[derive(Clone, Debug, PartialEq)]
pub struct MeetingFeatures {
    pub utterances: Vec<Tensor>,
}

impl MeetingFeatures {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.utterances.first().map_or(0, Tensor::cols)
    }
}

/// Everything needed to turn tokens into features, fitted once per corpus.
#[derive(Clone, Debug)]
pub struct FeatureSpace {
    pub pca: PcaProjection,
    pub vectors: WordVectors,
    pub oov_seed: u64,
}

/// In-vocabulary / total token counts for diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VocabularyStats {
    pub types: usize,
    pub oov_types: usize,
}

impl FeatureSpace {
    /// Fits the PCA on the distinct in-vocabulary word types of the training
    /// partition.
    pub fn fit(meetings: &[Meeting], vectors: WordVectors, text_dim: usize, oov_seed: u64) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut rows = Vec::new();
        for m in meetings.iter().filter(|m| m.partition == Partition::Train) {
            for u in &m.utterances {
                for tok in &u.tokens {
                    if let Some(v) = vectors.get(tok) {
                        if seen.insert(v.as_ptr()) {
                            rows.push(v.to_vec());
                        }
                    }
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::Config(
                "no training token has a pretrained vector; cannot fit the PCA".into(),
            ));
        }
        let pca = fit_pca(&rows, text_dim)?;
        Ok(Self {
            pca,
            vectors,
            oov_seed,
        })
    }

    pub fn text_dim(&self) -> usize {
        self.pca.out_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.text_dim() + DISCOURSE_DIM
    }

    pub fn text_vector(&self, token: &str) -> Vec<f64> {
        match self.vectors.get(token) {
            Some(v) => self.pca.project(v),
            None => oov_vector(token, self.text_dim(), self.oov_seed),
        }
    }

    pub fn token_feature(&self, m: &Meeting, t: usize, token: usize) -> TokenFeature {
        let u = &m.utterances[t];
        let mut f = self.text_vector(&u.tokens[token]);
        f.extend_from_slice(&discourse_features(u.role, u.dialogue_act, t, m.len()));
        TokenFeature(f)
    }

    pub fn utterance_features(&self, m: &Meeting, t: usize) -> Tensor {
        let u = &m.utterances[t];
        let dim = self.feature_dim();
        let mut data = Vec::with_capacity(u.tokens.len() * dim);
        for i in 0..u.tokens.len() {
            data.extend(self.token_feature(m, t, i).0);
        }
        Tensor::matrix(u.tokens.len(), dim, data).expect("feature matrix shape")
    }

    pub fn meeting_features(&self, m: &Meeting) -> MeetingFeatures {
        MeetingFeatures {
            utterances: (0..m.len()).map(|t| self.utterance_features(m, t)).collect(),
        }
    }

    pub fn vocabulary_stats(&self, meetings: &[Meeting]) -> VocabularyStats {
        let mut types = BTreeSet::new();
        for m in meetings {
            for u in &m.utterances {
                for t in &u.tokens {
                    types.insert(t.as_str());
                }
            }
        }
        let oov_types = types.iter().filter(|t| self.vectors.get(t).is_none()).count();
        VocabularyStats {
            types: types.len(),
            oov_types,
        }
    }
}
