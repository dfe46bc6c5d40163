use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::types::{Community, Meeting, Section};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommunityKind {
    Disjoint,
    Nested,
    Overlapping,
    Singleton,
}

impl CommunityKind {
    pub const ALL: [CommunityKind; 4] = [
        CommunityKind::Disjoint,
        CommunityKind::Nested,
        CommunityKind::Overlapping,
        CommunityKind::Singleton,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CommunityKind::Disjoint => "disjoint",
            CommunityKind::Nested => "nested",
            CommunityKind::Overlapping => "overlapping",
            CommunityKind::Singleton => "singleton",
        }
    }
}

/// Classifies `c` against the other communities of its meeting.
///
/// Precedence is singleton, then nested, then overlapping. Identical member
/// sets count as nested (each contains the other). Entries of `all` equal to
/// `c` are skipped.
pub fn classify_community(c: &Community, all: &[Community]) -> CommunityKind {
    if c.members.len() == 1 {
        return CommunityKind::Singleton;
    }
    let others = all.iter().filter(|o| !core::ptr::eq(*o, c) && *o != c);
    let mut overlapping = false;
    for o in others {
        if o.members.is_subset(&c.members) || c.members.is_subset(&o.members) {
            return CommunityKind::Nested;
        }
        if !o.members.is_disjoint(&c.members) {
            overlapping = true;
        }
    }
    if overlapping {
        CommunityKind::Overlapping
    } else {
        CommunityKind::Disjoint
    }
}

/// Label for every community of a meeting, in order.
pub fn classify_all(communities: &[Community]) -> Vec<CommunityKind> {
    communities
        .iter()
        .map(|c| classify_community(c, communities))
        .collect()
}

/// Folds every community that is contained in another into its minimal
/// container, repeated to a fixpoint. Identical member sets collapse into
/// the first occurrence.
pub fn merge_nested_ground_truth(communities: &[Community]) -> Vec<Community> {
    let mut current: Vec<Community> = communities.to_vec();
    loop {
        let mut absorbed = None;
        'outer: for (i, c) in current.iter().enumerate() {
            // minimal container: smallest strict superset, or an earlier duplicate
            let mut best: Option<usize> = None;
            for (j, o) in current.iter().enumerate() {
                if i == j || !c.members.is_subset(&o.members) {
                    continue;
                }
                if o.members.len() == c.members.len() && j > i {
                    continue;
                }
                if best.is_none_or(|b| o.members.len() < current[b].members.len()) {
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                absorbed = Some((i, j));
                break 'outer;
            }
        }
        match absorbed {
            None => return current,
            Some((i, j)) => {
                let members: BTreeSet<usize> = current[i].members.clone();
                current[j].members.extend(members);
                current.remove(i);
            }
        }
    }
}

/// Community counts per section and kind, plus the per-section totals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityStats {
    /// `counts[section][kind]`, indexed by `Section::ALL` and `CommunityKind::ALL`.
    pub counts: [[usize; 4]; 4],
}

impl CommunityStats {
    pub fn collect(meetings: &[Meeting]) -> Self {
        let mut stats = Self::default();
        for m in meetings {
            for (c, kind) in m.communities.iter().zip(classify_all(&m.communities)) {
                stats.counts[section_index(c.section)][kind as usize] += 1;
            }
        }
        stats
    }

    pub fn section_total(&self, section: Section) -> usize {
        self.counts[section_index(section)].iter().sum()
    }

    pub fn kind_total(&self, kind: CommunityKind) -> usize {
        self.counts.iter().map(|row| row[kind as usize]).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

fn section_index(s: Section) -> usize {
    Section::ALL.iter().position(|&x| x == s).expect("known section")
}
