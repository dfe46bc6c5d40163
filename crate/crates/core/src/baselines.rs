//! Unsupervised baselines: tf-idf and averaged word-vector utterance
//! representations, compressed to the embedding width and context-averaged.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{discourse_features, fit_pca_padded, oov_vector, FeatureSpace, Meeting, DEFAULT_TEXT_DIM};
use crate::error::{Error, Result};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Tfidf,
    W2v,
}

impl BaselineKind {
    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::Tfidf => "tfidf",
            BaselineKind::W2v => "w2v",
        }
    }
}

impl core::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tfidf" => Ok(Self::Tfidf),
            "w2v" => Ok(Self::W2v),
            other => Err(Error::Config(format!("unknown baseline `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub context_pre: usize,
    pub context_post: usize,
    pub text_dim: usize,
    pub embedding_dim: usize,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind) -> Self {
        Self {
            kind,
            context_pre: 11,
            context_post: 11,
            text_dim: DEFAULT_TEXT_DIM,
            embedding_dim: 32,
        }
    }
}

/// Per-utterance tf-idf rows over the meeting's own vocabulary. TF is the
/// raw count and IDF is `ln(N/df)` with utterances as documents.
pub fn tfidf_matrix(meeting: &Meeting) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut vocab: BTreeMap<&str, usize> = BTreeMap::new();
    for u in &meeting.utterances {
        for t in &u.tokens {
            let next = vocab.len();
            vocab.entry(t.as_str()).or_insert(next);
        }
    }
    let mut terms: Vec<(&str, usize)> = vocab.iter().map(|(t, &i)| (*t, i)).collect();
    terms.sort_by_key(|&(_, i)| i);
    let v = terms.len();
    let mut df = alloc::vec![0usize; v];
    let mut counts = Vec::with_capacity(meeting.len());
    for u in &meeting.utterances {
        let mut row = alloc::vec![0.0; v];
        for t in &u.tokens {
            row[vocab[t.as_str()]] += 1.0;
        }
        for (d, &c) in df.iter_mut().zip(&row) {
            if c > 0.0 {
                *d += 1;
            }
        }
        counts.push(row);
    }
    let n = meeting.len() as f64;
    let idf: Vec<f64> = df.iter().map(|&d| math::ln(n / d as f64)).collect();
    for row in &mut counts {
        for (x, w) in row.iter_mut().zip(&idf) {
            *x *= w;
        }
    }
    (terms.into_iter().map(|(t, _)| String::from(t)).collect(), counts)
}

/// Mean of the raw word vectors of an utterance's tokens; OOV tokens use
/// their seeded stand-in vectors.
pub fn mean_word_vector(tokens: &[String], space: &FeatureSpace) -> Vec<f64> {
    let dim = space.vectors.dim();
    let mut acc = alloc::vec![0.0; dim];
    for t in tokens {
        match space.vectors.get(t) {
            Some(v) => acc.iter_mut().zip(v).for_each(|(a, x)| *a += x),
            None => acc
                .iter_mut()
                .zip(oov_vector(t, dim, space.oov_seed))
                .for_each(|(a, x)| *a += x),
        }
    }
    let n = tokens.len().max(1) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Mean of each row with its clipped `[t − pre, t + post]` window.
pub fn context_average(rows: &[Vec<f64>], pre: usize, post: usize) -> Vec<Vec<f64>> {
    (0..rows.len())
        .map(|t| {
            let lo = t.saturating_sub(pre);
            let hi = (t + post).min(rows.len() - 1);
            let mut acc = alloc::vec![0.0; rows[t].len()];
            for r in &rows[lo..=hi] {
                acc.iter_mut().zip(r).for_each(|(a, x)| *a += x);
            }
            let n = (hi - lo + 1) as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            acc
        })
        .collect()
}

fn reduce(rows: &[Vec<f64>], dim: usize, stage: &str, meeting: &str) -> Result<Vec<Vec<f64>>> {
    let (pca, found) = fit_pca_padded(rows, dim)?;
    if found < dim {
        warn!("meeting {meeting}: {stage} has rank {found} < {dim}; padding with zeros");
    }
    Ok(rows.iter().map(|r| pca.project(r)).collect())
}

/// Text vectors plus discourse features, compressed per meeting to the
/// embedding width, then context-averaged.
pub fn compress_and_average(meeting: &Meeting, text: &[Vec<f64>], cfg: &BaselineConfig) -> Result<Vec<Vec<f64>>> {
    let n = meeting.len();
    let rows: Vec<Vec<f64>> = text
        .iter()
        .enumerate()
        .map(|(t, v)| {
            let u = &meeting.utterances[t];
            let mut r = v.clone();
            r.extend_from_slice(&discourse_features(u.role, u.dialogue_act, t, n));
            r
        })
        .collect();
    let compressed = reduce(&rows, cfg.embedding_dim, "feature matrix", &meeting.meeting_id)?;
    Ok(context_average(&compressed, cfg.context_pre, cfg.context_post))
}

/// tf-idf baseline vectors for every utterance of a meeting.
pub fn tfidf_embed(meeting: &Meeting, cfg: &BaselineConfig) -> Result<Vec<Vec<f64>>> {
    if meeting.is_empty() {
        return Err(Error::Config(format!("meeting {} has no utterances", meeting.meeting_id)));
    }
    let (terms, matrix) = tfidf_matrix(meeting);
    if terms.len() < cfg.text_dim {
        warn!(
            "meeting {}: {} terms for a {}-dimensional reduction",
            meeting.meeting_id,
            terms.len(),
            cfg.text_dim
        );
    }
    let text = reduce(&matrix, cfg.text_dim, "tf-idf matrix", &meeting.meeting_id)?;
    compress_and_average(meeting, &text, cfg)
}

/// Averaged word-vector baseline; the first reduction is the corpus-level
/// projection of `space`.
pub fn w2v_embed(meeting: &Meeting, space: &FeatureSpace, cfg: &BaselineConfig) -> Result<Vec<Vec<f64>>> {
    if meeting.is_empty() {
        return Err(Error::Config(format!("meeting {} has no utterances", meeting.meeting_id)));
    }
    let text: Vec<Vec<f64>> = meeting
        .utterances
        .iter()
        .map(|u| space.pca.project(&mean_word_vector(&u.tokens, space)))
        .collect();
    compress_and_average(meeting, &text, cfg)
}

pub fn baseline_embed(meeting: &Meeting, space: Option<&FeatureSpace>, cfg: &BaselineConfig) -> Result<Vec<Vec<f64>>> {
    match cfg.kind {
        BaselineKind::Tfidf => tfidf_embed(meeting, cfg),
        BaselineKind::W2v => {
            let space = space.ok_or_else(|| Error::Config("the w2v baseline needs word vectors".into()))?;
            w2v_embed(meeting, space, cfg)
        }
    }
}
