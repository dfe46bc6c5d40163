//! Distance-level ranking metrics and the clustering-level Omega index.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::clustering::{assign_communities, fcm_best_of, Assignment, CommunityCount, Distance, FcmConfig};
use crate::corpus::{merge_nested_ground_truth, Meeting};
use crate::error::{Error, Result};
use crate::seed;

/// Cut-off of the ranking metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopK {
    Fixed(usize),
    /// Size of the query's community minus one.
    CommunitySize,
}

impl TopK {
    pub fn label(self) -> String {
        match self {
            TopK::Fixed(k) => format!("{k}"),
            TopK::CommunitySize => "k=v".into(),
        }
    }
}

impl core::str::FromStr for TopK {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<CommunityCount>()? {
            CommunityCount::Fixed(k) => Ok(TopK::Fixed(k)),
            CommunityCount::GroundTruth => Ok(TopK::CommunitySize),
        }
    }
}

/// Precision, recall and F1 at one cut-off.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankingScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RankingScores {
    fn mean(items: &[RankingScores]) -> Option<RankingScores> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        Some(RankingScores {
            precision: items.iter().map(|s| s.precision).sum::<f64>() / n,
            recall: items.iter().map(|s| s.recall).sum::<f64>() / n,
            f1: items.iter().map(|s| s.f1).sum::<f64>() / n,
        })
    }
}

/// All other rows ordered by ascending distance to `query`; ties by index.
pub fn rank_neighbors(embeddings: &[Vec<f64>], query: usize, distance: Distance) -> Vec<usize> {
    let q = &embeddings[query];
    let mut scored: Vec<(f64, usize)> = embeddings
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != query)
        .map(|(i, e)| (distance.eval(q, e), i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, i)| i).collect()
}

/// Scores of one ranking against a relevant set, cut at `k` (clipped to the
/// ranking length).
pub fn scores_at(ranking: &[usize], relevant: &BTreeSet<usize>, k: usize) -> RankingScores {
    let k = k.min(ranking.len());
    if k == 0 || relevant.is_empty() {
        return RankingScores::default();
    }
    let hits = ranking[..k].iter().filter(|i| relevant.contains(i)).count() as f64;
    let precision = hits / k as f64;
    let recall = hits / relevant.len() as f64;
    let f1 = if precision == recall {
        precision
    } else if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    RankingScores { precision, recall, f1 }
}

/// Ranking metrics of one meeting. `communities` hold row indices into
/// `embeddings`. Each (query, community) pair is scored on its own; scores
/// are averaged over the queries of a community, then over communities.
/// Returns `None` when the meeting has no non-singleton community.
pub fn ranking_metrics(
    embeddings: &[Vec<f64>],
    communities: &[BTreeSet<usize>],
    k: TopK,
    distance: Distance,
) -> Option<RankingScores> {
    let mut rankings: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut per_community = Vec::new();
    for c in communities.iter().filter(|c| c.len() > 1) {
        let mut per_query = Vec::with_capacity(c.len());
        for &q in c {
            let ranking = rankings
                .entry(q)
                .or_insert_with(|| rank_neighbors(embeddings, q, distance));
            let relevant: BTreeSet<usize> = c.iter().copied().filter(|&i| i != q).collect();
            let cut = match k {
                TopK::Fixed(k) => {
                    if k > ranking.len() {
                        warn!("k={k} exceeds the {} candidates; clipping", ranking.len());
                    }
                    k
                }
                TopK::CommunitySize => relevant.len(),
            };
            per_query.push(scores_at(ranking, &relevant, cut));
        }
        per_community.extend(RankingScores::mean(&per_query));
    }
    RankingScores::mean(&per_community)
}

/// Co-membership multiplicity of every pair `i < j`, row-major.
fn pair_counts(solution: &[BTreeSet<usize>], n: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n * (n.saturating_sub(1)) / 2];
    let index = |i: usize, j: usize| i * (2 * n - i - 1) / 2 + (j - i - 1);
    for c in solution {
        let members: Vec<usize> = c.iter().copied().collect();
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                counts[index(i, j)] += 1;
            }
        }
    }
    counts
}

/// Observed and expected agreement of two solutions over `n` objects.
pub fn omega_components(s1: &[BTreeSet<usize>], s2: &[BTreeSet<usize>], n: usize) -> Result<(f64, f64)> {
    for c in s1.iter().chain(s2) {
        if let Some(&bad) = c.iter().find(|&&i| i >= n) {
            return Err(Error::Shape {
                op: "omega",
                detail: format!("object {bad} out of range for {n} objects"),
            });
        }
    }
    let (a, b) = (pair_counts(s1, n), pair_counts(s2, n));
    if a.is_empty() {
        return Err(Error::UndefinedOmega);
    }
    let total = a.len() as f64;
    let agree = a.iter().zip(&b).filter(|(x, y)| x == y).count() as f64;
    let mut hist1: BTreeMap<u32, f64> = BTreeMap::new();
    let mut hist2: BTreeMap<u32, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(&b) {
        *hist1.entry(x).or_default() += 1.0;
        *hist2.entry(y).or_default() += 1.0;
    }
    let expected: f64 = hist1
        .iter()
        .map(|(j, n1)| n1 * hist2.get(j).copied().unwrap_or(0.0))
        .sum::<f64>()
        / (total * total);
    Ok((agree / total, expected))
}

/// Omega index of two possibly overlapping solutions over `n` objects.
pub fn omega_index(s1: &[BTreeSet<usize>], s2: &[BTreeSet<usize>], n: usize) -> Result<f64> {
    let (observed, expected) = omega_components(s1, s2, n)?;
    if expected == 1.0 {
        return if observed == 1.0 { Ok(1.0) } else { Err(Error::UndefinedOmega) };
    }
    Ok((observed - expected) / (1.0 - expected))
}

/// Embeddings of one meeting's utterances, in row order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeetingEmbeddings {
    pub meeting_id: String,
    /// Utterance index of each row.
    pub indices: Vec<usize>,
    pub vectors: Vec<Vec<f64>>,
}

impl MeetingEmbeddings {
    fn rows_of(&self, members: &BTreeSet<usize>) -> BTreeSet<usize> {
        members
            .iter()
            .filter_map(|m| self.indices.iter().position(|i| i == m))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub ks: Vec<TopK>,
    pub qs: Vec<CommunityCount>,
    pub fcm: FcmConfig,
    pub distance: Distance,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: vec![TopK::CommunitySize, TopK::Fixed(10)],
            qs: vec![CommunityCount::GroundTruth, CommunityCount::Fixed(11)],
            fcm: FcmConfig::default(),
            distance: Distance::Euclidean,
            seed: 0,
        }
    }
}

/// Predicted communities of one meeting at one `|Q|`, as utterance indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedCommunities {
    pub meeting_id: String,
    pub q: String,
    pub communities: Vec<Vec<usize>>,
    pub unassigned_bucket: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeetingReport {
    pub meeting_id: String,
    pub metrics: BTreeMap<String, f64>,
    pub communities: Vec<PredictedCommunities>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub meetings: Vec<MeetingReport>,
    /// Mean over the meetings reporting each metric.
    pub aggregate: BTreeMap<String, f64>,
}

/// Key names used in reports.
pub fn ranking_keys(k: TopK) -> Vec<String> {
    match k {
        TopK::CommunitySize => vec!["P@k=v".into()],
        TopK::Fixed(k) => vec![format!("P@{k}"), format!("R@{k}"), format!("F1@{k}")],
    }
}

pub fn omega_key(q: CommunityCount) -> String {
    format!("omega_q{}", q.label())
}

/// Ground-truth communities restricted to the embedded rows.
pub fn ground_truth_rows(meeting: &Meeting, emb: &MeetingEmbeddings, merged: bool) -> Vec<BTreeSet<usize>> {
    let communities = if merged {
        merge_nested_ground_truth(&meeting.communities)
    } else {
        meeting.communities.clone()
    };
    communities
        .iter()
        .map(|c| emb.rows_of(&c.members))
        .filter(|c| !c.is_empty())
        .collect()
}

/// FCM clustering of one meeting with `clusters` clusters (clipped to the
/// number of rows), returned as row-index sets.
pub fn cluster_rows(vectors: &[Vec<f64>], clusters: usize, fcm: &FcmConfig, seed_value: u64) -> Result<Assignment> {
    let clusters = clusters.min(vectors.len()).max(1);
    let membership = fcm_best_of(vectors, clusters, fcm, seed_value)?;
    Ok(assign_communities(&membership.matrix, fcm.threshold))
}

/// Seed of the FCM restarts for one meeting and `|Q|`.
pub fn clustering_seed(base: u64, meeting_id: &str, q: CommunityCount) -> u64 {
    seed::derive(seed::derive(base, seed::fnv1a(meeting_id.as_bytes())), seed::fnv1a(q.label().as_bytes()))
}

/// Ranking metrics against raw ground truth, and Omega of FCM communities
/// against the nested-merged ground truth, for every `k` and `|Q|`.
pub fn evaluate_meeting(meeting: &Meeting, emb: &MeetingEmbeddings, cfg: &EvalConfig) -> Result<MeetingReport> {
    if emb.vectors.len() != emb.indices.len() {
        return Err(Error::Shape {
            op: "evaluate",
            detail: format!("{} vectors for {} indices", emb.vectors.len(), emb.indices.len()),
        });
    }
    let mut metrics = BTreeMap::new();
    let raw = ground_truth_rows(meeting, emb, false);
    for &k in &cfg.ks {
        match ranking_metrics(&emb.vectors, &raw, k, cfg.distance) {
            Some(s) => {
                let keys = ranking_keys(k);
                if keys.len() == 1 {
                    metrics.insert(keys[0].clone(), s.precision);
                } else {
                    metrics.insert(keys[0].clone(), s.precision);
                    metrics.insert(keys[1].clone(), s.recall);
                    metrics.insert(keys[2].clone(), s.f1);
                }
            }
            None => warn!("meeting {} has no non-singleton community; ranking skipped", meeting.meeting_id),
        }
    }
    let merged = ground_truth_rows(meeting, emb, true);
    let mut communities = Vec::new();
    let fcm = FcmConfig {
        distance: cfg.distance,
        ..cfg.fcm
    };
    for &q in &cfg.qs {
        if emb.vectors.len() < 2 {
            warn!("meeting {} has fewer than two utterances; omega skipped", meeting.meeting_id);
            continue;
        }
        let clusters = q.resolve(merged.len());
        let assignment = cluster_rows(&emb.vectors, clusters, &fcm, clustering_seed(cfg.seed, &meeting.meeting_id, q))?;
        match omega_index(&assignment.communities, &merged, emb.vectors.len()) {
            Ok(w) => {
                metrics.insert(omega_key(q), w);
            }
            Err(Error::UndefinedOmega) => warn!("omega undefined for meeting {} at |Q|={}", meeting.meeting_id, q.label()),
            Err(e) => return Err(e),
        }
        communities.push(PredictedCommunities {
            meeting_id: meeting.meeting_id.clone(),
            q: q.label(),
            communities: assignment
                .communities
                .iter()
                .map(|c| c.iter().map(|&r| emb.indices[r]).collect())
                .collect(),
            unassigned_bucket: assignment.unassigned_bucket,
        });
    }
    Ok(MeetingReport {
        meeting_id: meeting.meeting_id.clone(),
        metrics,
        communities,
    })
}

/// Per-meeting reports plus their across-meeting means.
pub fn evaluate_corpus(pairs: &[(&Meeting, &MeetingEmbeddings)], cfg: &EvalConfig) -> Result<EvaluationReport> {
    let meetings = pairs
        .iter()
        .map(|(m, e)| evaluate_meeting(m, e, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        aggregate: aggregate(&meetings),
        meetings,
    })
}

pub fn aggregate(meetings: &[MeetingReport]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for m in meetings {
        for (k, &v) in &m.metrics {
            let e = sums.entry(k.clone()).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Mean and (population) standard deviation of each metric across runs.
pub fn mean_std(runs: &[BTreeMap<String, f64>]) -> BTreeMap<String, (f64, f64)> {
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in runs {
        for (k, &v) in r {
            values.entry(k.clone()).or_default().push(v);
        }
    }
    values
        .into_iter()
        .map(|(k, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            (k, (mean, crate::math::sqrt(var)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};
    use rand::Rng;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn ranking_examples() {
        let line: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        assert_eq!(rank_neighbors(&line, 0, Distance::Euclidean), vec![1, 2, 3]);
        assert_eq!(rank_neighbors(&line[..2], 1, Distance::Manhattan), vec![0]);
        let dup = vec![vec![0.0], vec![1.0], vec![0.0]];
        assert_eq!(rank_neighbors(&dup, 0, Distance::Euclidean), vec![2, 1]);
        let tie = vec![vec![0.0], vec![1.0], vec![-1.0]];
        assert_eq!(rank_neighbors(&tie, 0, Distance::Euclidean), vec![1, 2]);
    }

    #[test]
    fn metric_definitions() {
        let s = scores_at(&[1, 5, 2, 9], &set(&[1, 2, 3]), 3);
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
        // Worked query: v = 9, 7 of the top 9 relevant; 8 of the top 10.
        let relevant: BTreeSet<usize> = (1..=9).collect();
        let ranking = [1, 2, 3, 4, 5, 6, 7, 20, 21, 8, 22, 9];
        let v = scores_at(&ranking, &relevant, 9);
        assert!((v.precision * 100.0 - 77.78).abs() < 5e-3);
        assert_eq!(v.precision, v.recall);
        let ten = scores_at(&ranking, &relevant, 10);
        assert!((ten.precision * 100.0 - 80.00).abs() < 5e-3);
        assert!((ten.recall * 100.0 - 88.89).abs() < 5e-3);
        assert!((ten.f1 * 100.0 - 84.21).abs() < 5e-3);
    }

    #[test]
    fn pair_community_is_perfect() {
        let e = vec![vec![0.0], vec![0.1], vec![5.0]];
        let s = ranking_metrics(&e, &[set(&[0, 1]), set(&[2])], TopK::CommunitySize, Distance::Euclidean).unwrap();
        assert_eq!(s, RankingScores { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert!(ranking_metrics(&e, &[set(&[2])], TopK::Fixed(10), Distance::Euclidean).is_none());
    }

    #[test]
    fn community_level_then_meeting_level_averaging() {
        // Community {0,1} is perfect; in {2,3,4} only the pair 3–4 is mutually close.
        let e = vec![vec![0.0], vec![0.1], vec![10.0], vec![20.0], vec![20.1]];
        let cs = [set(&[0, 1]), set(&[2, 3, 4])];
        let s = ranking_metrics(&e, &cs, TopK::CommunitySize, Distance::Euclidean).unwrap();
        // Query 2 ranks [1, 0, 3, 4]: 0 of 2. Queries 3 and 4 get both.
        let second = (0.0 + 1.0 + 1.0) / 3.0;
        assert!((s.precision - (1.0 + second) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn overlap_queries_are_scored_per_community() {
        let e = vec![vec![0.0], vec![0.1], vec![0.2], vec![9.0]];
        let cs = [set(&[0, 1]), set(&[1, 3])];
        let s = ranking_metrics(&e, &cs, TopK::CommunitySize, Distance::Euclidean).unwrap();
        // {0,1}: both queries hit. {1,3}: neither does.
        assert!((s.precision - 0.5).abs() < 1e-15);
    }

    #[test]
    fn omega_worked_example() {
        let (a, b, c, d, e) = (0, 1, 2, 3, 4);
        let s1 = [set(&[a, b, c]), set(&[b, c, d]), set(&[c, d, e]), set(&[c, d])];
        let s2 = [set(&[a, b, c, d]), set(&[b, c, d, e])];
        let (obs, exp) = omega_components(&s1, &s2, 5).unwrap();
        assert!((obs - 0.6).abs() < 1e-15);
        assert!((exp - 0.36).abs() < 1e-15);
        assert!((omega_index(&s1, &s2, 5).unwrap() - 0.375).abs() < 1e-12);
    }

    #[test]
    fn omega_degenerate_cases() {
        let all = [set(&[0, 1, 2])];
        assert_eq!(omega_index(&all, &all, 3).unwrap(), 1.0);
        assert_eq!(omega_index(&[], &[], 3).unwrap(), 1.0);
        assert_eq!(omega_index(&[set(&[0])], &[set(&[0])], 1), Err(Error::UndefinedOmega));
        assert!(omega_index(&[set(&[5])], &[], 3).is_err());
    }

    /// Pair counting written directly over object pairs.
    fn brute_omega(s1: &[BTreeSet<usize>], s2: &[BTreeSet<usize>], n: usize) -> f64 {
        let count = |s: &[BTreeSet<usize>], i, j| s.iter().filter(|c| c.contains(&i) && c.contains(&j)).count();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((count(s1, i, j), count(s2, i, j)));
            }
        }
        let t = pairs.len() as f64;
        let obs = pairs.iter().filter(|(x, y)| x == y).count() as f64 / t;
        let max = pairs.iter().map(|&(x, y)| x.max(y)).max().unwrap_or(0);
        let exp: f64 = (0..=max)
            .map(|j| {
                let n1 = pairs.iter().filter(|p| p.0 == j).count() as f64;
                let n2 = pairs.iter().filter(|p| p.1 == j).count() as f64;
                n1 * n2
            })
            .sum::<f64>()
            / (t * t);
        (obs - exp) / (1.0 - exp)
    }

    fn random_solution<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<BTreeSet<usize>> {
        (0..k)
            .map(|_| (0..n).filter(|_| rng.gen_bool(0.25)).collect::<BTreeSet<_>>())
            .filter(|c| !c.is_empty())
            .collect()
    }

    #[test]
    fn random_solutions_have_omega_near_zero() {
        for s in 0..100 {
            let mut rng = seed::rng(s);
            let a = random_solution(&mut rng, 50, 5);
            let b = random_solution(&mut rng, 50, 5);
            let w = omega_index(&a, &b, 50).unwrap();
            assert!((w - brute_omega(&a, &b, 50)).abs() < 1e-12);
            assert!(w.abs() < 0.15, "seed {s}: {w}");
        }
    }

    proptest! {
        #[test]
        fn omega_symmetry_and_identity(seed_value in 0u64..10_000, n in 3usize..25) {
            let mut rng = seed::rng(seed_value);
            let a = random_solution(&mut rng, n, 4);
            let b = random_solution(&mut rng, n, 4);
            match (omega_index(&a, &b, n), omega_index(&b, &a, n)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
            }
            let (_, exp) = omega_components(&a, &a, n).unwrap();
            if exp < 1.0 {
                prop_assert_eq!(omega_index(&a, &a, n).unwrap(), 1.0);
            }
            let everything: BTreeSet<usize> = (0..n).collect();
            let (obs, _) = omega_components(&a, &b, n).unwrap();
            let mut a2 = a.clone();
            a2.push(everything.clone());
            let mut b2 = b.clone();
            b2.push(everything);
            let (obs2, _) = omega_components(&a2, &b2, n).unwrap();
            prop_assert_eq!(obs, obs2);
        }

        #[test]
        fn k_equals_v_gives_equal_scores(points in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 6..20)) {
            let n = points.len();
            let cs = [(0..n / 2).collect::<BTreeSet<_>>(), (n / 3..n).collect::<BTreeSet<_>>()];
            let s = ranking_metrics(&points, &cs, TopK::CommunitySize, Distance::Euclidean).unwrap();
            prop_assert_eq!(s.precision, s.recall);
            prop_assert_eq!(s.precision, s.f1);
        }
    }
}
