//! The two sequence-model variants and their chunked, KV-cached forward
//! pass.
//!
//! Both variants consume a stream of `(features, label)` examples:
//!
//! - **Privileged-label (`Pi`)**: one token per example. Projections of the
//!   example's own label are added to the attention keys and values only,
//!   and the causal mask has a zero diagonal, so the prediction at a
//!   position can use earlier labels but never its own.
//! - **Two-token (`TwoToken`)**: a plain causal decoder over an interleaved
//!   `[x_1, y_1, x_2, y_2, ...]` token sequence; the loss is read at the
//!   feature-token positions only.
//!
//! Attention is multi-query: many query heads share a single key and a
//! single value projection per block, so the sliding-window cache stores
//! exactly one key and one value vector per block per token.

mod attention;
mod cache;
mod checkpoint;
mod forward;
mod params;

pub use attention::{build_attention_mask, mqa_attention};
pub use cache::{kv_cache_floats, KVCache};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use forward::{embed_inputs, forward_chunk, pi_block_forward, BoundBlock, BoundParams, ChunkForward, ChunkInput};
pub use params::{init_params, BlockParams, ModelParams};

use thiserror::Error;

/// LayerNorm stabilizer used everywhere in the model.
pub const LN_EPS: f64 = 1e-6;

/// FFW hidden width as a multiple of the backbone width.
pub const FFW_MULT: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Pi,
    TwoToken,
}

impl Variant {
    pub fn tokens_per_example(self) -> usize {
        match self {
            Variant::Pi => 1,
            Variant::TwoToken => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pi => "pi",
            Variant::TwoToken => "two_token",
        }
    }
}

/// How example features enter the model.
///
/// `LearnedConstant` replaces the input projection with a single learned
/// token, leaving labels as the only signal (the label-only ablation).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputMode {
    Features,
    LearnedConstant,
}

/// Architecture hyperparameters shared by both variants.
///
/// `window` is counted in tokens: the two-token variant fits half as many
/// examples into the same window.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Backbone width D.
    pub width: usize,
    /// Number of transformer blocks.
    pub depth: usize,
    pub num_query_heads: usize,
    /// Key/query width per head.
    pub key_dim: usize,
    /// Value width.
    pub value_dim: usize,
    /// Attendable recent tokens C (0 disables attention).
    pub window: usize,
    /// Number of label classes K.
    pub num_classes: usize,
    /// Feature vector width F.
    pub feature_dim: usize,
    pub input_mode: InputMode,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("per-block caches disagree on tokens seen: {observed:?}")]
    InconsistentCaches { observed: Vec<usize> },
    #[error("cache set has {got} entries, model has depth {expected}")]
    CacheDepthMismatch { got: usize, expected: usize },
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive: [(&str, usize); 7] = [
            ("width", self.width),
            ("depth", self.depth),
            ("num_query_heads", self.num_query_heads),
            ("key_dim", self.key_dim),
            ("value_dim", self.value_dim),
            ("num_classes", self.num_classes),
            ("feature_dim", self.feature_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn ffw_hidden(&self) -> usize {
        FFW_MULT * self.width
    }

    /// Fresh (empty) per-block cache set.
    pub fn new_caches(&self) -> Vec<KVCache> {
        (0..self.depth)
            .map(|_| KVCache::new(self.window, self.key_dim, self.value_dim))
            .collect()
    }

    /// Examples that fit in the attention window.
    pub fn window_examples(&self) -> usize {
        self.window / self.variant.tokens_per_example()
    }
}

/// One supervised example: a feature vector and its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Example {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Example { features, label }
    }
}
