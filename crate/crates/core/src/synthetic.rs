//! Planted-community corpus generator used by tests, the acceptance suite
//! and the `synth` command.
//!
//! Every meeting holds two overlapping communities (A, B), a disjoint one
//! (C) and a singleton (D). Each non-singleton community is laid out as two
//! contiguous segments at random places between non-member chatter. Community members draw tokens from a topic
//! vocabulary whose word vectors cluster around a topic centroid; a share
//! of members speak only filler, so placing them needs context.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Community, DialogueAct, Meeting, Partition, Role, Section, Utterance, WordVectors};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub meetings: usize,
    pub validation_meetings: usize,
    pub test_meetings: usize,
    /// Approximate community size; each planted block varies by ±1.
    pub community_size: usize,
    /// Utterances shared by communities A and B.
    pub overlap: usize,
    /// Non-member utterances per meeting.
    pub chatter: usize,
    pub topics: usize,
    pub words_per_topic: usize,
    pub filler_words: usize,
    /// Out-of-vocabulary surface forms mixed into filler.
    pub oov_words: usize,
    pub vector_dim: usize,
    /// Spread of topic words around their centroid, relative to unit centroids.
    pub topic_noise: f64,
    /// Share of member utterances made of filler only.
    pub filler_only_rate: f64,
    /// Share of topic tokens in a topical utterance.
    pub topic_token_rate: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            meetings: 8,
            validation_meetings: 1,
            test_meetings: 1,
            community_size: 10,
            overlap: 2,
            chatter: 11,
            topics: 12,
            words_per_topic: 40,
            filler_words: 40,
            oov_words: 6,
            vector_dim: 300,
            topic_noise: 0.2,
            filler_only_rate: 0.1,
            topic_token_rate: 0.8,
            min_tokens: 4,
            max_tokens: 8,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub meetings: Vec<Meeting>,
    pub vectors: WordVectors,
}

impl SyntheticCorpus {
    pub fn partition(&self, p: Partition) -> Vec<Meeting> {
        self.meetings.iter().filter(|m| m.partition == p).cloned().collect()
    }
}

fn topic_word(topic: usize, i: usize) -> String {
    format!("t{topic}w{i}")
}

fn filler_word(i: usize) -> String {
    format!("f{i}")
}

fn oov_word(i: usize) -> String {
    format!("zq{i}")
}

fn unit_gaussian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    // Sum of uniforms is close enough to Gaussian for planting clusters.
    let v: Vec<f64> = (0..dim)
        .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>())
        .collect();
    let norm = crate::math::sqrt(v.iter().map(|x| x * x).sum());
    v.into_iter().map(|x| x / norm).collect()
}

fn word_vectors<R: Rng + ?Sized>(cfg: &SyntheticConfig, rng: &mut R) -> Result<WordVectors> {
    let mut wv = WordVectors::new(cfg.vector_dim);
    for t in 0..cfg.topics {
        let centre = unit_gaussian(cfg.vector_dim, rng);
        for i in 0..cfg.words_per_topic {
            let noise = unit_gaussian(cfg.vector_dim, rng);
            let v = centre.iter().zip(&noise).map(|(c, n)| c + cfg.topic_noise * n).collect();
            wv.insert(&topic_word(t, i), v)?;
        }
    }
    for i in 0..cfg.filler_words {
        let v = unit_gaussian(cfg.vector_dim, rng).into_iter().map(|x| 0.5 * x).collect();
        wv.insert(&filler_word(i), v)?;
    }
    Ok(wv)
}

fn filler_token<R: Rng + ?Sized>(cfg: &SyntheticConfig, rng: &mut R) -> String {
    if cfg.oov_words > 0 && rng.gen_bool(0.1) {
        oov_word(rng.gen_range(0..cfg.oov_words))
    } else {
        filler_word(rng.gen_range(0..cfg.filler_words))
    }
}

fn tokens<R: Rng + ?Sized>(cfg: &SyntheticConfig, topics: &[usize], rng: &mut R) -> Vec<String> {
    let n = rng.gen_range(cfg.min_tokens..=cfg.max_tokens);
    (0..n)
        .map(|i| {
            if !topics.is_empty() && rng.gen_bool(cfg.topic_token_rate) {
                let t = topics[i % topics.len()];
                topic_word(t, rng.gen_range(0..cfg.words_per_topic))
            } else {
                filler_token(cfg, rng)
            }
        })
        .collect()
}

/// What each position of a meeting holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Chatter,
    /// Index into the meeting's planted communities (0 = A, 1 = B, ...);
    /// the second entry marks the A∩B overlap.
    Member(usize, Option<usize>),
}

fn layout<R: Rng + ?Sized>(cfg: &SyntheticConfig, rng: &mut R) -> Vec<Slot> {
    let size = |rng: &mut R| {
        let lo = cfg.community_size.saturating_sub(1).max(cfg.overlap + 1);
        rng.gen_range(lo..=cfg.community_size + 1)
    };
    let (a, b, c) = (size(rng), size(rng), size(rng));
    // A∩B sits in one segment flanked by A-only and B-only members; the
    // rest of each community forms a second segment elsewhere, so position
    // alone does not identify a community.
    let a_near = (a - cfg.overlap) / 2;
    let b_near = (b - cfg.overlap) / 2;
    let mut ab = vec![Slot::Member(0, None); a_near];
    ab.extend(vec![Slot::Member(0, Some(1)); cfg.overlap]);
    ab.extend(vec![Slot::Member(1, None); b_near]);
    let mut blocks = vec![
        ab,
        vec![Slot::Member(0, None); a - cfg.overlap - a_near],
        vec![Slot::Member(1, None); b - cfg.overlap - b_near],
        vec![Slot::Member(2, None); c / 2],
        vec![Slot::Member(2, None); c - c / 2],
        vec![Slot::Member(3, None)],
    ];
    blocks.retain(|b| !b.is_empty());
    blocks.shuffle(rng);
    // Scatter chatter into the gaps around the blocks.
    let mut gaps = vec![0usize; blocks.len() + 1];
    for _ in 0..cfg.chatter {
        let g = rng.gen_range(0..gaps.len());
        gaps[g] += 1;
    }
    let mut out = Vec::new();
    for (i, block) in blocks.into_iter().enumerate() {
        out.extend(core::iter::repeat_n(Slot::Chatter, gaps[i]));
        out.extend(block);
    }
    out.extend(core::iter::repeat_n(Slot::Chatter, gaps[gaps.len() - 1]));
    out
}

fn meeting<R: Rng + ?Sized>(cfg: &SyntheticConfig, id: usize, partition: Partition, rng: &mut R) -> Meeting {
    let mut pool: Vec<usize> = (0..cfg.topics).collect();
    pool.shuffle(rng);
    // A, B, C, D topics plus one chatter topic.
    let topics = &pool[..5];
    let slots = layout(cfg, rng);
    let mut members: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); 4];
    let utterances = slots
        .iter()
        .enumerate()
        .map(|(t, slot)| {
            let (words, summary_worthy) = match *slot {
                Slot::Chatter => {
                    let chatter_topic = if rng.gen_bool(0.3) { vec![topics[4]] } else { vec![] };
                    (tokens(cfg, &chatter_topic, rng), false)
                }
                Slot::Member(c, other) => {
                    members[c].insert(t);
                    let mut ts = vec![topics[c]];
                    if let Some(o) = other {
                        members[o].insert(t);
                        ts.push(topics[o]);
                    }
                    let filler_only = c != 3 && rng.gen_bool(cfg.filler_only_rate);
                    let ts = if filler_only { vec![] } else { ts };
                    (tokens(cfg, &ts, rng), true)
                }
            };
            Utterance {
                index: t,
                role: Role::ALL[rng.gen_range(0..4)],
                dialogue_act: DialogueAct::ALL[rng.gen_range(0..DialogueAct::ALL.len())],
                tokens: words,
                summary_worthy,
            }
        })
        .collect();
    let sections = [Section::Abstract, Section::Decision, Section::Action, Section::Problem];
    Meeting {
        meeting_id: format!("SYN{id:03}"),
        partition,
        utterances,
        communities: members
            .into_iter()
            .enumerate()
            .map(|(i, m)| Community {
                id: format!("SYN{id:03}.{}", ["a", "b", "c", "d"][i]),
                section: sections[i],
                members: m,
            })
            .collect(),
    }
}

/// Generates the corpus; the last meetings form the validation and test
/// partitions.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if cfg.meetings < cfg.validation_meetings + cfg.test_meetings + 1 {
        return Err(Error::Config("synthetic corpus needs at least one training meeting".into()));
    }
    if cfg.topics < 5 || cfg.words_per_topic == 0 || cfg.filler_words == 0 {
        return Err(Error::Config("synthetic corpus needs ≥5 topics and non-empty vocabularies".into()));
    }
    if cfg.min_tokens == 0 || cfg.min_tokens > cfg.max_tokens || cfg.overlap >= cfg.community_size {
        return Err(Error::Config("invalid token or community size bounds".into()));
    }
    let mut rng = seed::derived_rng(cfg.seed, 0);
    let vectors = word_vectors(cfg, &mut rng)?;
    let first_validation = cfg.meetings - cfg.validation_meetings - cfg.test_meetings;
    let first_test = cfg.meetings - cfg.test_meetings;
    let meetings = (0..cfg.meetings)
        .map(|i| {
            let partition = if i >= first_test {
                Partition::Test
            } else if i >= first_validation {
                Partition::Validation
            } else {
                Partition::Train
            };
            meeting(cfg, i, partition, &mut seed::derived_rng(cfg.seed, 1 + i as u64))
        })
        .collect::<Vec<_>>();
    for m in &meetings {
        m.validate()?;
    }
    Ok(SyntheticCorpus { meetings, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{classify_all, CommunityKind};

    #[test]
    fn planted_structure() {
        let corpus = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(corpus.meetings.len(), 8);
        assert_eq!(corpus.partition(Partition::Train).len(), 6);
        assert_eq!(corpus.partition(Partition::Validation).len(), 1);
        assert_eq!(corpus.partition(Partition::Test).len(), 1);
        for m in &corpus.meetings {
            assert!((36..=44).contains(&m.len()), "{}", m.len());
            let kinds = classify_all(&m.communities);
            assert_eq!(kinds.iter().filter(|k| **k == CommunityKind::Overlapping).count(), 2);
            assert_eq!(kinds.iter().filter(|k| **k == CommunityKind::Singleton).count(), 1);
            assert_eq!(kinds.iter().filter(|k| **k == CommunityKind::Disjoint).count(), 1);
            let a = &m.communities[0].members;
            let b = &m.communities[1].members;
            assert_eq!(a.intersection(b).count(), 2);
        }
    }

    #[test]
    fn deterministic_and_has_oov() {
        let a = generate(&SyntheticConfig::default()).unwrap();
        let b = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(a.meetings, b.meetings);
        assert_eq!(a.vectors, b.vectors);
        let oov = a
            .meetings
            .iter()
            .flat_map(|m| &m.utterances)
            .flat_map(|u| &u.tokens)
            .filter(|t| a.vectors.get(t).is_none())
            .count();
        assert!(oov > 0);
        let c = generate(&SyntheticConfig {
            seed: 8,
            ..SyntheticConfig::default()
        })
        .unwrap();
        assert_ne!(a.meetings, c.meetings);
    }
}
