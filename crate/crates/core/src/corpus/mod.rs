//! Transcripts, ground-truth communities and token features.

pub mod community;
pub mod features;
pub mod pca;
pub mod types;

pub use community::{
    classify_all, classify_community, merge_nested_ground_truth, CommunityKind, CommunityStats,
};
pub use features::{
    discourse_features, normalized_position, oov_vector, FeatureSpace, MeetingFeatures,
    TokenFeature, WordVectors, DEFAULT_TEXT_DIM, DISCOURSE_DIM,
};
pub use pca::{fit_pca, fit_pca_padded, PcaProjection};
pub use types::{
    default_blocklist, is_blocked_tag, Community, DialogueAct, Meeting, Partition, Role, Section,
    Utterance, DEFAULT_TAG_BLOCKLIST,
};
