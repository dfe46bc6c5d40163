use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speaker role in the design-team scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "PM")]
    ProjectManager,
    #[serde(rename = "ME")]
    MarketingExpert,
    #[serde(rename = "UI")]
    UserInterface,
    #[serde(rename = "ID")]
    IndustrialDesigner,
}

impl Role {
    pub const ALL: [Role; 4] = [
        Role::ProjectManager,
        Role::MarketingExpert,
        Role::UserInterface,
        Role::IndustrialDesigner,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Role::ProjectManager => "PM",
            Role::MarketingExpert => "ME",
            Role::UserInterface => "UI",
            Role::IndustrialDesigner => "ID",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.label() == s)
    }

    pub fn one_hot_index(self) -> usize {
        self as usize
    }
}

/// Dialogue act labels: the fifteen AMI classes plus `none` for unlabeled segments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DialogueAct {
    Backchannel,
    Stall,
    Fragment,
    Inform,
    ElicitInform,
    Suggest,
    Offer,
    ElicitOfferOrSuggestion,
    Assess,
    CommentAboutUnderstanding,
    ElicitAssessment,
    ElicitCommentAboutUnderstanding,
    BePositive,
    BeNegative,
    Other,
    Unlabeled,
}

impl DialogueAct {
    pub const ALL: [DialogueAct; 16] = [
        DialogueAct::Backchannel,
        DialogueAct::Stall,
        DialogueAct::Fragment,
        DialogueAct::Inform,
        DialogueAct::ElicitInform,
        DialogueAct::Suggest,
        DialogueAct::Offer,
        DialogueAct::ElicitOfferOrSuggestion,
        DialogueAct::Assess,
        DialogueAct::CommentAboutUnderstanding,
        DialogueAct::ElicitAssessment,
        DialogueAct::ElicitCommentAboutUnderstanding,
        DialogueAct::BePositive,
        DialogueAct::BeNegative,
        DialogueAct::Other,
        DialogueAct::Unlabeled,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DialogueAct::Backchannel => "bck",
            DialogueAct::Stall => "stl",
            DialogueAct::Fragment => "fra",
            DialogueAct::Inform => "inf",
            DialogueAct::ElicitInform => "el.inf",
            DialogueAct::Suggest => "sug",
            DialogueAct::Offer => "off",
            DialogueAct::ElicitOfferOrSuggestion => "el.sug",
            DialogueAct::Assess => "ass",
            DialogueAct::CommentAboutUnderstanding => "und",
            DialogueAct::ElicitAssessment => "el.ass",
            DialogueAct::ElicitCommentAboutUnderstanding => "el.und",
            DialogueAct::BePositive => "be.pos",
            DialogueAct::BeNegative => "be.neg",
            DialogueAct::Other => "oth",
            DialogueAct::Unlabeled => "none",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.label() == s)
    }

    pub fn one_hot_index(self) -> usize {
        self as usize
    }
}

impl Serialize for DialogueAct {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for DialogueAct {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_label(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown dialogue act `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub fn label(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [Partition::Train, Partition::Validation, Partition::Test]
            .into_iter()
            .find(|p| p.label() == s)
    }
}

/// Summary section a community's abstractive sentence belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Abstract,
    Action,
    Problem,
    Decision,
}

impl Section {
    pub const ALL: [Section; 4] = [
        Section::Abstract,
        Section::Action,
        Section::Problem,
        Section::Decision,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Section::Abstract => "abstract",
            Section::Action => "action",
            Section::Problem => "problem",
            Section::Decision => "decision",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.label() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub index: usize,
    pub role: Role,
    pub dialogue_act: DialogueAct,
    pub tokens: Vec<String>,
    pub summary_worthy: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Community {
    pub id: String,
    pub section: Section,
    pub members: BTreeSet<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meeting {
    pub meeting_id: String,
    pub partition: Partition,
    pub utterances: Vec<Utterance>,
    pub communities: Vec<Community>,
}

/// Bracketed ASR event tags dropped from token streams by default.
pub const DEFAULT_TAG_BLOCKLIST: &[&str] = &[
    "vocalsound",
    "nonvocalsound",
    "disfmarker",
    "gap",
    "comment",
    "pause",
];

/// True when `token` is an ASR tag from `blocklist`, with or without
/// surrounding `<>`/`[]`/`{}` and a closing slash.
pub fn is_blocked_tag(token: &str, blocklist: &[String]) -> bool {
    let bare = token
        .trim_matches(|c| matches!(c, '<' | '>' | '[' | ']' | '{' | '}' | '/'))
        .to_ascii_lowercase();
    blocklist.iter().any(|t| t.eq_ignore_ascii_case(&bare))
}

pub fn default_blocklist() -> Vec<String> {
    DEFAULT_TAG_BLOCKLIST.iter().map(|s| s.to_string()).collect()
}

impl Meeting {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Indices of summary-worthy utterances, ascending.
    pub fn summary_worthy(&self) -> Vec<usize> {
        self.utterances
            .iter()
            .filter(|u| u.summary_worthy)
            .map(|u| u.index)
            .collect()
    }

    /// Drops blocklisted tokens, then checks every structural invariant.
    pub fn clean(mut self, blocklist: &[String]) -> Result<Self> {
        for u in &mut self.utterances {
            u.tokens.retain(|t| !is_blocked_tag(t, blocklist));
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |path: String, reason: String| Error::Schema {
            meeting: self.meeting_id.clone(),
            path,
            reason,
        };
        let n = self.utterances.len();
        for (i, u) in self.utterances.iter().enumerate() {
            if u.index != i {
                return Err(err(
                    format!("utterances[{i}].index"),
                    format!("expected contiguous index {i}, found {}", u.index),
                ));
            }
            if u.tokens.is_empty() {
                return Err(err(
                    format!("utterances[{i}].tokens"),
                    "no tokens left after preprocessing".into(),
                ));
            }
        }
        let mut ids = BTreeSet::new();
        for (c, com) in self.communities.iter().enumerate() {
            if !ids.insert(com.id.as_str()) {
                return Err(err(
                    format!("communities[{c}].id"),
                    format!("duplicate community id `{}`", com.id),
                ));
            }
            if com.members.is_empty() {
                return Err(err(
                    format!("communities[{c}].members"),
                    "community has no members".into(),
                ));
            }
            for &m in &com.members {
                if m >= n {
                    return Err(err(
                        format!("communities[{c}].members"),
                        format!("index {m} out of range for {n} utterances"),
                    ));
                }
                if !self.utterances[m].summary_worthy {
                    return Err(err(
                        format!("communities[{c}].members"),
                        format!("utterance {m} is not summary-worthy"),
                    ));
                }
            }
        }
        Ok(())
    }
}
