//! Genuine/impostor pairs and (positive, anchor, negative) triplets drawn
//! from ground-truth communities.
//!
//! Only utterances that belong to at least one community take part. Two
//! utterances form a genuine pair when they share a community and an
//! impostor pair when they share none; pairs never cross meetings. Counts
//! are exact: examples are drawn uniformly with replacement from the pools.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Meeting;
use crate::error::{Error, Result};
use crate::seed;

/// Examples per epoch used for training: triplets, or pairs per class.
pub const DEFAULT_EXAMPLES_PER_EPOCH: usize = 15594;

/// Meeting position within the sampled slice plus utterance index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UtteranceRef {
    pub meeting: usize,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairLabel {
    Genuine,
    Impostor,
}

impl PairLabel {
    /// Regression target: 0 for genuine, 1 for impostor.
    pub fn target(self) -> f64 {
        match self {
            PairLabel::Genuine => 0.0,
            PairLabel::Impostor => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairExample {
    pub x: UtteranceRef,
    pub y: UtteranceRef,
    pub label: PairLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletExample {
    pub positive: UtteranceRef,
    pub anchor: UtteranceRef,
    pub negative: UtteranceRef,
}

/// Every eligible tuple of one meeting.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MeetingPools {
    /// Unordered pairs `(i, j)`, `i < j`, sharing a community.
    pub genuine: Vec<(usize, usize)>,
    /// Unordered pairs `(i, j)`, `i < j`, sharing no community.
    pub impostor: Vec<(usize, usize)>,
    /// Ordered `(positive, anchor)` pairs whose anchor has at least one negative.
    pub anchored: Vec<(usize, usize)>,
    /// Valid negatives per anchor.
    pub negatives: BTreeMap<usize, Vec<usize>>,
}

impl MeetingPools {
    pub fn build(meeting: &Meeting) -> Self {
        let mut memberships: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (c, com) in meeting.communities.iter().enumerate() {
            for &m in &com.members {
                memberships.entry(m).or_default().insert(c);
            }
        }
        let nodes: Vec<usize> = memberships.keys().copied().collect();
        let shares = |a: usize, b: usize| !memberships[&a].is_disjoint(&memberships[&b]);

        let mut pools = MeetingPools::default();
        for (k, &i) in nodes.iter().enumerate() {
            for &j in &nodes[k + 1..] {
                if shares(i, j) {
                    pools.genuine.push((i, j));
                } else {
                    pools.impostor.push((i, j));
                }
            }
        }
        for &a in &nodes {
            let negs: Vec<usize> = nodes.iter().copied().filter(|&n| n != a && !shares(a, n)).collect();
            if !negs.is_empty() {
                pools.negatives.insert(a, negs);
            }
        }
        for &(i, j) in &pools.genuine {
            for (p, a) in [(i, j), (j, i)] {
                if pools.negatives.contains_key(&a) {
                    pools.anchored.push((p, a));
                }
            }
        }
        pools
    }

    pub fn triplet_count(&self) -> usize {
        self.anchored.iter().map(|(_, a)| self.negatives[a].len()).sum()
    }
}

/// Pools of a whole corpus slice.
#[derive(Clone, Debug, Default)]
pub struct SamplingPools {
    pub meetings: Vec<MeetingPools>,
}

impl SamplingPools {
    pub fn build(meetings: &[Meeting]) -> Self {
        Self {
            meetings: meetings.iter().map(MeetingPools::build).collect(),
        }
    }

    pub fn genuine_total(&self) -> usize {
        self.meetings.iter().map(|m| m.genuine.len()).sum()
    }

    pub fn impostor_total(&self) -> usize {
        self.meetings.iter().map(|m| m.impostor.len()).sum()
    }

    pub fn triplet_total(&self) -> usize {
        self.meetings.iter().map(MeetingPools::triplet_count).sum()
    }
}

/// Uniform draw over the concatenation of per-meeting lists.
fn draw<'a, T, R: Rng + ?Sized>(
    lists: impl Iterator<Item = &'a [T]> + Clone,
    total: usize,
    rng: &mut R,
) -> (usize, &'a T)
where
    T: 'a,
{
    let mut k = rng.gen_range(0..total);
    for (m, list) in lists.enumerate() {
        if k < list.len() {
            return (m, &list[k]);
        }
        k -= list.len();
    }
    unreachable!("draw index within total")
}

pub fn sample_pairs<R: Rng + ?Sized>(
    pools: &SamplingPools,
    n_genuine: usize,
    n_impostor: usize,
    rng: &mut R,
) -> Result<Vec<PairExample>> {
    let (gt, it) = (pools.genuine_total(), pools.impostor_total());
    if gt == 0 && n_genuine > 0 {
        return Err(Error::Sampling("no eligible genuine pair in the corpus".into()));
    }
    if it == 0 && n_impostor > 0 {
        return Err(Error::Sampling("no eligible impostor pair in the corpus".into()));
    }
    let mut out = Vec::with_capacity(n_genuine + n_impostor);
    let mk = |m: usize, (i, j): (usize, usize), label| PairExample {
        x: UtteranceRef { meeting: m, index: i },
        y: UtteranceRef { meeting: m, index: j },
        label,
    };
    for _ in 0..n_genuine {
        let (m, &p) = draw(pools.meetings.iter().map(|m| m.genuine.as_slice()), gt, rng);
        out.push(mk(m, p, PairLabel::Genuine));
    }
    for _ in 0..n_impostor {
        let (m, &p) = draw(pools.meetings.iter().map(|m| m.impostor.as_slice()), it, rng);
        out.push(mk(m, p, PairLabel::Impostor));
    }
    Ok(out)
}

/// Draws `(positive, anchor)` uniformly among anchored within-community
/// pairs, then the negative uniformly among the anchor's non-co-members.
pub fn sample_triplets<R: Rng + ?Sized>(
    pools: &SamplingPools,
    n: usize,
    rng: &mut R,
) -> Result<Vec<TripletExample>> {
    let total: usize = pools.meetings.iter().map(|m| m.anchored.len()).sum();
    if total == 0 && n > 0 {
        return Err(Error::Sampling("no valid triplet in the corpus".into()));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (m, &(p, a)) = draw(pools.meetings.iter().map(|m| m.anchored.as_slice()), total, rng);
        let negs = &pools.meetings[m].negatives[&a];
        let neg = negs[rng.gen_range(0..negs.len())];
        let r = |index| UtteranceRef { meeting: m, index };
        out.push(TripletExample {
            positive: r(p),
            anchor: r(a),
            negative: r(neg),
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaArchitecture {
    Siamese,
    Triplet,
}

impl MetaArchitecture {
    pub fn label(self) -> &'static str {
        match self {
            MetaArchitecture::Siamese => "siamese",
            MetaArchitecture::Triplet => "triplet",
        }
    }
}

impl core::str::FromStr for MetaArchitecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "siamese" => Ok(Self::Siamese),
            "triplet" => Ok(Self::Triplet),
            other => Err(Error::Config(format!("unknown meta-architecture `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Examples {
    Pairs(Vec<PairExample>),
    Triplets(Vec<TripletExample>),
}

impl Examples {
    pub fn len(&self) -> usize {
        match self {
            Examples::Pairs(p) => p.len(),
            Examples::Triplets(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws `n` examples (siamese: `n` genuine plus `n` impostor pairs) from a
/// seeded stream.
pub fn draw_examples(pools: &SamplingPools, meta: MetaArchitecture, n: usize, seed_value: u64) -> Result<Examples> {
    let mut rng = seed::rng(seed_value);
    Ok(match meta {
        MetaArchitecture::Siamese => {
            // Interleave the classes so every minibatch sees both.
            let mut pairs = sample_pairs(pools, n, n, &mut rng)?;
            pairs.shuffle(&mut rng);
            Examples::Pairs(pairs)
        }
        MetaArchitecture::Triplet => Examples::Triplets(sample_triplets(pools, n, &mut rng)?),
    })
}

/// Fresh examples for `epoch`, deterministic in `(base_seed, epoch)`.
pub fn epoch_resample(
    epoch: usize,
    base_seed: u64,
    pools: &SamplingPools,
    meta: MetaArchitecture,
    n: usize,
) -> Result<Examples> {
    draw_examples(pools, meta, n, seed::derive(base_seed, epoch as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Community, DialogueAct, Partition, Role, Section, Utterance};
    use alloc::string::ToString;
    use alloc::vec;

    fn meeting(n: usize, communities: &[&[usize]]) -> Meeting {
        Meeting {
            meeting_id: "m".into(),
            partition: Partition::Train,
            utterances: (0..n)
                .map(|i| Utterance {
                    index: i,
                    role: Role::ProjectManager,
                    dialogue_act: DialogueAct::Inform,
                    tokens: vec!["x".to_string()],
                    summary_worthy: true,
                })
                .collect(),
            communities: communities
                .iter()
                .enumerate()
                .map(|(i, m)| Community {
                    id: format!("c{i}"),
                    section: Section::Abstract,
                    members: m.iter().copied().collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn pools_for_pair_and_singleton() {
        let p = MeetingPools::build(&meeting(5, &[&[1, 2], &[3]]));
        assert_eq!(p.genuine, vec![(1, 2)]);
        assert_eq!(p.impostor, vec![(1, 3), (2, 3)]);
    }

    #[test]
    fn overlap_members_are_never_impostors() {
        let p = MeetingPools::build(&meeting(5, &[&[1, 2], &[2, 3]]));
        assert_eq!(p.genuine, vec![(1, 2), (2, 3)]);
        assert_eq!(p.impostor, vec![(1, 3)]);
    }

    #[test]
    fn exhaustive_triplets() {
        let pools = SamplingPools::build(&[meeting(5, &[&[1, 2], &[3]])]);
        assert_eq!(pools.meetings[0].anchored, vec![(1, 2), (2, 1)]);
        let ts = sample_triplets(&pools, 200, &mut seed::rng(1)).unwrap();
        let seen: BTreeSet<(usize, usize, usize)> = ts
            .iter()
            .map(|t| (t.positive.index, t.anchor.index, t.negative.index))
            .collect();
        assert_eq!(seen, [(1, 2, 3), (2, 1, 3)].into_iter().collect());
    }

    #[test]
    fn singleton_members_are_only_negatives() {
        let pools = SamplingPools::build(&[meeting(8, &[&[1, 2, 4], &[3], &[5, 6]])]);
        let ts = sample_triplets(&pools, 500, &mut seed::rng(2)).unwrap();
        assert!(ts.iter().all(|t| t.positive.index != 3 && t.anchor.index != 3));
        assert!(ts.iter().any(|t| t.negative.index == 3));
        let ps = sample_pairs(&pools, 100, 100, &mut seed::rng(3)).unwrap();
        for p in ps.iter().filter(|p| p.x.index == 3 || p.y.index == 3) {
            assert_eq!(p.label, PairLabel::Impostor);
        }
    }

    #[test]
    fn errors_without_eligible_tuples() {
        let only_singletons = SamplingPools::build(&[meeting(3, &[&[0], &[1]])]);
        assert!(sample_pairs(&only_singletons, 1, 0, &mut seed::rng(0)).is_err());
        assert!(sample_triplets(&only_singletons, 1, &mut seed::rng(0)).is_err());
        let one_community = SamplingPools::build(&[meeting(3, &[&[0, 1, 2]])]);
        assert!(sample_pairs(&one_community, 0, 1, &mut seed::rng(0)).is_err());
        assert!(sample_triplets(&one_community, 1, &mut seed::rng(0)).is_err());
    }

    #[test]
    fn exact_counts_and_labels() {
        let ms = [meeting(10, &[&[0, 1, 2], &[2, 3], &[5, 6, 7]]), meeting(6, &[&[0, 1], &[4, 5]])];
        let pools = SamplingPools::build(&ms);
        let ps = sample_pairs(&pools, 37, 41, &mut seed::rng(5)).unwrap();
        assert_eq!(ps.iter().filter(|p| p.label == PairLabel::Genuine).count(), 37);
        assert_eq!(ps.iter().filter(|p| p.label == PairLabel::Impostor).count(), 41);
        for p in &ps {
            assert_eq!(p.x.meeting, p.y.meeting);
            assert_ne!(p.x.index, p.y.index);
            let shared = ms[p.x.meeting]
                .communities
                .iter()
                .any(|c| c.members.contains(&p.x.index) && c.members.contains(&p.y.index));
            assert_eq!(shared, p.label == PairLabel::Genuine);
        }
    }

    #[test]
    fn resampling_is_deterministic_and_varies_by_epoch() {
        let pools = SamplingPools::build(&[meeting(40, &[&(0..15).collect::<Vec<_>>(), &(15..30).collect::<Vec<_>>()])]);
        assert!(pools.triplet_total() > 1_000);
        let a = epoch_resample(0, 42, &pools, MetaArchitecture::Triplet, 100).unwrap();
        let b = epoch_resample(0, 42, &pools, MetaArchitecture::Triplet, 100).unwrap();
        let c = epoch_resample(1, 42, &pools, MetaArchitecture::Triplet, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(epoch_resample(3, 42, &pools, MetaArchitecture::Triplet, 0).unwrap().is_empty());
    }
}
