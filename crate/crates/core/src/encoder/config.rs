use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Width of the input token features (text + discourse halves).
    pub feature_dim: usize,
    /// Token vector width `d` after the word encoder; GRU hidden size per direction.
    pub token_dim: usize,
    /// Output embedding width `d_f`.
    pub embedding_dim: usize,
    pub context_pre: usize,
    pub context_post: usize,
    /// Pad (and truncate) utterances to this many tokens; padding is masked.
    pub max_tokens: Option<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            feature_dim: 42,
            token_dim: 42,
            embedding_dim: 32,
            context_pre: 11,
            context_post: 11,
            max_tokens: None,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim < 2 || !self.feature_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "feature_dim must be even and positive, got {}",
                self.feature_dim
            )));
        }
        if self.token_dim == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("token_dim and embedding_dim must be positive".into()));
        }
        if self.max_tokens == Some(0) {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn with_context(mut self, pre: usize, post: usize) -> Self {
        self.context_pre = pre;
        self.context_post = post;
        self
    }

    /// Stable hash of every field, stored in checkpoint headers.
    pub fn config_hash(&self) -> u64 {
        let canonical = format!(
            "feature_dim={};token_dim={};embedding_dim={};context_pre={};context_post={};max_tokens={:?}",
            self.feature_dim,
            self.token_dim,
            self.embedding_dim,
            self.context_pre,
            self.context_post,
            self.max_tokens
        );
        seed::fnv1a(canonical.as_bytes())
    }
}
