//! Fuzzy c-means with restarts and threshold-based overlapping assignment.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::sampling::MetaArchitecture;
use crate::seed;

/// Distance kernel shared by clustering and ranking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Manhattan,
    Euclidean,
}

impl Distance {
    /// Manhattan for siamese embeddings, Euclidean for triplet embeddings.
    pub fn for_meta(meta: MetaArchitecture) -> Self {
        match meta {
            MetaArchitecture::Siamese => Distance::Manhattan,
            MetaArchitecture::Triplet => Distance::Euclidean,
        }
    }

    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Manhattan => math::l1(a, b),
            Distance::Euclidean => math::l2(a, b),
        }
    }
}

/// Number of clusters: fixed, or the meeting's ground-truth count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommunityCount {
    Fixed(usize),
    GroundTruth,
}

impl CommunityCount {
    pub fn resolve(self, ground_truth: usize) -> usize {
        match self {
            CommunityCount::Fixed(n) => n,
            CommunityCount::GroundTruth => ground_truth,
        }
    }

    pub fn label(self) -> alloc::string::String {
        match self {
            CommunityCount::Fixed(n) => format!("{n}"),
            CommunityCount::GroundTruth => "v".into(),
        }
    }
}

impl core::str::FromStr for CommunityCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "v" {
            return Ok(CommunityCount::GroundTruth);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(CommunityCount::Fixed(n)),
            _ => Err(Error::Config(format!("expected a positive integer or `v`, got `{s}`"))),
        }
    }
}

impl Serialize for CommunityCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            CommunityCount::Fixed(n) => s.serialize_u64(*n as u64),
            CommunityCount::GroundTruth => s.serialize_str("v"),
        }
    }
}

impl<'de> Deserialize<'de> for CommunityCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(alloc::string::String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) if n >= 1 => Ok(CommunityCount::Fixed(n as usize)),
            Raw::N(n) => Err(serde::de::Error::custom(format!("community count must be positive, got {n}"))),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FcmConfig {
    pub num_communities: CommunityCount,
    pub fuzziness: f64,
    pub threshold: f64,
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub distance: Distance,
}

impl Default for FcmConfig {
    fn default() -> Self {
        Self {
            num_communities: CommunityCount::Fixed(11),
            fuzziness: 2.0,
            threshold: 0.2,
            restarts: 20,
            max_iters: 300,
            tol: 1e-6,
            distance: Distance::Euclidean,
        }
    }
}

impl FcmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fuzziness > 1.0 && self.fuzziness.is_finite()) {
            return Err(Error::Config(format!("fuzziness must exceed 1, got {}", self.fuzziness)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.num_communities == CommunityCount::Fixed(0) {
            return Err(Error::Config("number of communities must be positive".into()));
        }
        if self.restarts == 0 || self.max_iters == 0 {
            return Err(Error::Config("restarts and max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Result of one FCM run.
#[derive(Clone, Debug, PartialEq)]
pub struct Membership {
    /// `T × |Q|`, rows sum to one.
    pub matrix: Vec<Vec<f64>>,
    pub centroids: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every membership update.
    pub history: Vec<f64>,
}

impl Membership {
    pub fn num_clusters(&self) -> usize {
        self.centroids.len()
    }
}

/// Rows drawn from a symmetric Dirichlet(1).
pub fn dirichlet_memberships<R: Rng + ?Sized>(rows: usize, clusters: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let draws: Vec<f64> = (0..clusters)
                .map(|_| -math::ln(1.0 - rng.gen::<f64>()))
                .map(|e| e.max(f64::MIN_POSITIVE))
                .collect();
            let total: f64 = draws.iter().sum();
            draws.into_iter().map(|e| e / total).collect()
        })
        .collect()
}

fn centroids(points: &[Vec<f64>], m: &[Vec<f64>], fuz: f64, previous: Option<&[Vec<f64>]>) -> Vec<Vec<f64>> {
    let (q, dim) = (m[0].len(), points[0].len());
    (0..q)
        .map(|c| {
            // Weights m^fuz rescaled by their maximum in log space; the
            // weighted mean is scale-free and large exponents would underflow.
            let logs: Vec<f64> = m
                .iter()
                .map(|row| if row[c] > 0.0 { fuz * math::ln(row[c]) } else { f64::NEG_INFINITY })
                .collect();
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut acc = vec![0.0; dim];
            let mut weight = 0.0;
            for (p, &lw) in points.iter().zip(&logs) {
                if top == f64::NEG_INFINITY {
                    break;
                }
                let w = math::exp(lw - top);
                weight += w;
                for (a, x) in acc.iter_mut().zip(p) {
                    *a += w * x;
                }
            }
            if weight > 0.0 {
                acc.iter_mut().for_each(|a| *a /= weight);
                acc
            } else {
                previous.map_or(acc, |prev| prev[c].clone())
            }
        })
        .collect()
}

/// Membership update for fixed centroids. A point lying on a centroid is
/// hard-assigned to it.
pub fn memberships(points: &[Vec<f64>], centroids: &[Vec<f64>], fuz: f64, distance: Distance) -> Vec<Vec<f64>> {
    let power = 2.0 / (fuz - 1.0);
    points
        .iter()
        .map(|p| {
            let d: Vec<f64> = centroids.iter().map(|c| distance.eval(p, c)).collect();
            if let Some(hit) = d.iter().position(|&x| x == 0.0) {
                let mut row = vec![0.0; d.len()];
                row[hit] = 1.0;
                return row;
            }
            d.iter()
                .map(|&dq| 1.0 / d.iter().map(|&dj| math::powf(dq / dj, power)).sum::<f64>())
                .collect()
        })
        .collect()
}

/// `J = Σ_t Σ_q m_qt^fuz · dist(u_t, c_q)²`.
pub fn objective(points: &[Vec<f64>], m: &[Vec<f64>], centroids: &[Vec<f64>], fuz: f64, distance: Distance) -> f64 {
    points
        .iter()
        .zip(m)
        .map(|(p, row)| {
            row.iter()
                .zip(centroids)
                .map(|(&w, c)| {
                    let d = distance.eval(p, c);
                    math::powf(w, fuz) * d * d
                })
                .sum::<f64>()
        })
        .sum()
}

fn check_points(points: &[Vec<f64>], clusters: usize) -> Result<()> {
    if clusters == 0 {
        return Err(Error::Config("number of communities must be positive".into()));
    }
    if points.len() < clusters {
        return Err(Error::Clustering(format!(
            "{} points cannot form {clusters} clusters",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Shape {
            op: "fcm",
            detail: "embeddings of unequal dimension".into(),
        });
    }
    Ok(())
}

/// FCM from an explicit initial membership matrix.
///
/// Stops when the objective drops by less than `tol` or after `max_iters`
/// updates. An update that would raise the objective (possible with the
/// Manhattan kernel, whose optimal centroid is not the weighted mean) is
/// discarded and the run stops.
pub fn fcm_from(points: &[Vec<f64>], initial: Vec<Vec<f64>>, cfg: &FcmConfig) -> Result<Membership> {
    cfg.validate()?;
    let q = initial.first().map_or(0, Vec::len);
    check_points(points, q)?;
    if initial.len() != points.len() {
        return Err(Error::Shape {
            op: "fcm",
            detail: format!("{} membership rows for {} points", initial.len(), points.len()),
        });
    }
    let fuz = cfg.fuzziness;
    let mut m = initial;
    let mut c = centroids(points, &m, fuz, None);
    let mut j = objective(points, &m, &c, fuz, cfg.distance);
    let mut history = vec![j];
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let c_next = centroids(points, &m, fuz, Some(&c));
        let m_next = memberships(points, &c_next, fuz, cfg.distance);
        let j_next = objective(points, &m_next, &c_next, fuz, cfg.distance);
        iterations += 1;
        if j_next > j {
            break;
        }
        let delta = j - j_next;
        m = m_next;
        c = c_next;
        j = j_next;
        history.push(j);
        if delta < cfg.tol {
            break;
        }
    }
    Ok(Membership {
        matrix: m,
        centroids: c,
        objective: j,
        iterations,
        history,
    })
}

/// One FCM run with `clusters` clusters from a Dirichlet initialization.
pub fn fcm<R: Rng + ?Sized>(points: &[Vec<f64>], clusters: usize, cfg: &FcmConfig, rng: &mut R) -> Result<Membership> {
    check_points(points, clusters)?;
    let init = dirichlet_memberships(points.len(), clusters, rng);
    fcm_from(points, init, cfg)
}

/// `cfg.restarts` runs seeded from `base_seed`; the lowest final objective
/// wins, the earliest restart on ties.
pub fn fcm_best_of(points: &[Vec<f64>], clusters: usize, cfg: &FcmConfig, base_seed: u64) -> Result<Membership> {
    cfg.validate()?;
    let mut best: Option<Membership> = None;
    for r in 0..cfg.restarts {
        let run = fcm(points, clusters, cfg, &mut seed::derived_rng(base_seed, r as u64))?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Overlapping communities read off a membership matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    /// Row-index sets; the unassigned bucket, if any, is last.
    pub communities: Vec<BTreeSet<usize>>,
    pub unassigned_bucket: bool,
}

/// Row `t` joins cluster `q` iff `m_qt ≥ threshold`. Empty clusters are
/// dropped and rows that join nothing form one extra community.
pub fn assign_communities(matrix: &[Vec<f64>], threshold: f64) -> Assignment {
    let q = matrix.first().map_or(0, Vec::len);
    let mut communities: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); q];
    let mut unassigned = BTreeSet::new();
    for (t, row) in matrix.iter().enumerate() {
        let mut placed = false;
        for (c, &w) in row.iter().enumerate() {
            if w >= threshold {
                communities[c].insert(t);
                placed = true;
            }
        }
        if !placed {
            unassigned.insert(t);
        }
    }
    communities.retain(|c| !c.is_empty());
    let unassigned_bucket = !unassigned.is_empty();
    if unassigned_bucket {
        communities.push(unassigned);
    }
    Assignment {
        communities,
        unassigned_bucket,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert_eq, proptest};

    fn cfg(distance: Distance) -> FcmConfig {
        FcmConfig {
            distance,
            ..FcmConfig::default()
        }
    }

    fn clouds(n: usize, seed_value: u64) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(seed_value);
        (0..2 * n)
            .map(|i| {
                let centre = if i < n { -10.0 } else { 10.0 };
                vec![centre + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
            })
            .collect()
    }

    /// Textbook FCM written independently of the implementation above.
    fn reference_fcm(x: &[Vec<f64>], mut u: Vec<Vec<f64>>, m: f64, iters: usize) -> Vec<Vec<f64>> {
        let k = u[0].len();
        for _ in 0..iters {
            let mut v = vec![vec![0.0; x[0].len()]; k];
            for j in 0..k {
                let mut den = 0.0;
                for i in 0..x.len() {
                    let w = u[i][j].powf(m);
                    den += w;
                    for d in 0..x[0].len() {
                        v[j][d] += w * x[i][d];
                    }
                }
                for d in 0..x[0].len() {
                    v[j][d] /= den;
                }
            }
            for i in 0..x.len() {
                let dist: Vec<f64> = v
                    .iter()
                    .map(|c| c.iter().zip(&x[i]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                    .collect();
                for j in 0..k {
                    let s: f64 = (0..k).map(|l| (dist[j] / dist[l]).powf(2.0 / (m - 1.0))).sum();
                    u[i][j] = 1.0 / s;
                }
            }
        }
        u
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = clouds(5, 1);
        let m = fcm(&pts, 1, &cfg(Distance::Euclidean), &mut seed::rng(2)).unwrap();
        assert!(m.matrix.iter().all(|r| r == &vec![1.0]));
        let mean: Vec<f64> = (0..2).map(|d| pts.iter().map(|p| p[d]).sum::<f64>() / 10.0).collect();
        for (a, b) in m.centroids[0].iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn separated_clouds_match_reference() {
        let pts = clouds(5, 3);
        let init = dirichlet_memberships(10, 2, &mut seed::rng(4));
        let c = FcmConfig {
            tol: 0.0,
            max_iters: 50,
            ..cfg(Distance::Euclidean)
        };
        let ours = fcm_from(&pts, init.clone(), &c).unwrap();
        let reference = reference_fcm(&pts, init, 2.0, ours.iterations);
        for (a, b) in ours.matrix.iter().zip(&reference) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
        }
        let first = if ours.matrix[0][0] > 0.5 { 0 } else { 1 };
        for (i, row) in ours.matrix.iter().enumerate() {
            let cluster = if i < 5 { first } else { 1 - first };
            assert!(row[cluster] > 0.95, "{row:?}");
        }
    }

    #[test]
    fn large_fuzziness_tends_to_uniform() {
        let pts = clouds(5, 3);
        let fixed = vec![vec![-10.0, 0.0], vec![0.0, 3.0], vec![10.0, 0.0]];
        for row in memberships(&pts, &fixed, 1e3, Distance::Euclidean) {
            assert!(row.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-2), "{row:?}");
        }
        // A full run parks each centroid on one point, which the coincidence
        // convention hard-assigns; every other row is uniform.
        let c = FcmConfig {
            fuzziness: 1e3,
            ..cfg(Distance::Euclidean)
        };
        let m = fcm(&pts, 3, &c, &mut seed::rng(1)).unwrap();
        let mut uniform_rows = 0;
        for (p, row) in pts.iter().zip(&m.matrix) {
            if m.centroids.iter().any(|c| c == p) {
                continue;
            }
            uniform_rows += 1;
            // Points very close to a parked centroid deviate slightly more.
            assert!(row.iter().all(|x| (x - 1.0 / 3.0).abs() < 2e-2), "{row:?}");
        }
        assert!(uniform_rows >= pts.len() - 3);
    }

    #[test]
    fn near_one_fuzziness_matches_kmeans() {
        let pts = clouds(6, 9);
        let init = dirichlet_memberships(12, 2, &mut seed::rng(5));
        let c = FcmConfig {
            fuzziness: 1.001,
            ..cfg(Distance::Euclidean)
        };
        let m = fcm_from(&pts, init.clone(), &c).unwrap();
        // Hard k-means (Lloyd) from the same initial centroids.
        let mut centres = centroids(&pts, &init, 1.001, None);
        let mut labels = vec![0usize; pts.len()];
        for _ in 0..100 {
            for (l, p) in labels.iter_mut().zip(&pts) {
                *l = (0..2)
                    .min_by(|&a, &b| math::l2(p, &centres[a]).total_cmp(&math::l2(p, &centres[b])))
                    .unwrap();
            }
            for (k, centre) in centres.iter_mut().enumerate() {
                let members: Vec<&Vec<f64>> = pts.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(p, _)| p).collect();
                if !members.is_empty() {
                    for d in 0..2 {
                        centre[d] = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
                    }
                }
            }
        }
        for (row, &l) in m.matrix.iter().zip(&labels) {
            let hard = if row[0] > row[1] { 0 } else { 1 };
            assert_eq!(hard, l);
        }
    }

    #[test]
    fn objective_is_nonincreasing_in_both_kernels() {
        let mut rng = seed::rng(12);
        let pts: Vec<Vec<f64>> = (0..40).map(|_| (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        for distance in [Distance::Euclidean, Distance::Manhattan] {
            for s in 0..5 {
                let m = fcm(&pts, 4, &cfg(distance), &mut seed::rng(s)).unwrap();
                assert!(m.history.windows(2).all(|w| w[1] <= w[0]), "{distance:?}");
                for row in &m.matrix {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    assert!(row.iter().all(|x| (0.0..=1.0).contains(x)));
                }
                assert!(m.objective >= 0.0);
            }
        }
    }

    #[test]
    fn coincident_point_is_hard_assigned() {
        let pts = vec![vec![0.0], vec![0.0], vec![0.0], vec![5.0]];
        let init = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = fcm_from(&pts, init, &cfg(Distance::Euclidean)).unwrap();
        assert_eq!(m.matrix[0], vec![1.0, 0.0]);
        assert_eq!(m.matrix[3], vec![0.0, 1.0]);
        assert_eq!(m.objective, 0.0);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            fcm(&pts, 3, &cfg(Distance::Euclidean), &mut seed::rng(0)),
            Err(Error::Clustering(_))
        ));
        assert!(FcmConfig { fuzziness: 1.0, ..FcmConfig::default() }.validate().is_err());
    }

    #[test]
    fn best_of_restarts() {
        let mut rng = seed::rng(7);
        let pts: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let c = cfg(Distance::Euclidean);
        let best = fcm_best_of(&pts, 5, &c, 99).unwrap();
        for r in 0..c.restarts {
            let run = fcm(&pts, 5, &c, &mut seed::derived_rng(99, r as u64)).unwrap();
            assert!(best.objective <= run.objective);
        }
        assert_eq!(best, fcm_best_of(&pts, 5, &c, 99).unwrap());
        let one = FcmConfig { restarts: 1, ..c };
        assert_eq!(
            fcm_best_of(&pts, 5, &one, 99).unwrap(),
            fcm(&pts, 5, &c, &mut seed::derived_rng(99, 0)).unwrap()
        );
    }

    #[test]
    fn assignment_examples() {
        let a = assign_communities(&[vec![0.5, 0.5], vec![0.9, 0.1]], 0.2);
        assert_eq!(a.communities, vec![[0, 1].into_iter().collect(), [0].into_iter().collect()]);
        assert!(!a.unassigned_bucket);
        let b = assign_communities(&[vec![0.34, 0.33, 0.33], vec![0.8, 0.1, 0.1]], 0.4);
        assert!(b.unassigned_bucket);
        assert_eq!(b.communities, vec![[1].into_iter().collect(), [0].into_iter().collect()]);
    }

    #[test]
    fn community_count_parsing() {
        assert_eq!("v".parse::<CommunityCount>().unwrap(), CommunityCount::GroundTruth);
        assert_eq!("11".parse::<CommunityCount>().unwrap(), CommunityCount::Fixed(11));
        assert!("0".parse::<CommunityCount>().is_err());
        assert_eq!(CommunityCount::GroundTruth.resolve(7), 7);
    }

    proptest! {
        #[test]
        fn assignment_covers_every_row(rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 1..30), th in 0.0f64..1.0) {
            let m: Vec<Vec<f64>> = rows.into_iter().map(|r| { let s: f64 = r.iter().sum(); r.into_iter().map(|x| x / s).collect() }).collect();
            let a = assign_communities(&m, th);
            let union: BTreeSet<usize> = a.communities.iter().flatten().copied().collect();
            prop_assert_eq!(union, (0..m.len()).collect::<BTreeSet<_>>());
        }
    }
}
