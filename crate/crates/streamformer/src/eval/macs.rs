//! Analytic multiply-accumulate accounting.
//!
//! Counts exactly the matmul-family work the forward pass performs:
//! projections at `tokens * d_in * d_out`, attention scores and value
//! sums at `tokens * attendable * width` per head. Elementwise ops,
//! normalizations and the rotation are free, matching the tape's
//! instrumented counter. Feature extraction happens upstream of this
//! model and is never counted.

use crate::model::{InputMode, ModelConfig, Variant};

/// Attendable keys for the query at absolute token index `a`.
fn fill(config: &ModelConfig, a: usize) -> u64 {
    let windowed = a.min(config.window) as u64;
    match config.variant {
        Variant::Pi => windowed,
        // Self-attention includes the query's own token.
        Variant::TwoToken => windowed + 1,
    }
}

/// Sum of `fill` over tokens `0..tokens`.
fn attention_positions(config: &ModelConfig, tokens: usize) -> u64 {
    (0..tokens).map(|a| fill(config, a)).sum()
}

/// Forward MACs for processing `tokens` model tokens from a fresh cache.
///
/// For the two-token variant, `tokens` counts model tokens (two per
/// example, feature tokens at even indices).
pub fn macs_forward(config: &ModelConfig, tokens: usize) -> u64 {
    let d = config.width as u64;
    let dk = config.key_dim as u64;
    let dv = config.value_dim as u64;
    let h = config.num_query_heads as u64;
    let k = config.num_classes as u64;
    let f = config.feature_dim as u64;
    let hidden = config.ffw_hidden() as u64;
    let t = tokens as u64;

    let x_tokens = match config.variant {
        Variant::Pi => t,
        Variant::TwoToken => t.div_ceil(2),
    };
    let y_tokens = match config.variant {
        Variant::Pi => 0,
        Variant::TwoToken => t / 2,
    };

    // Token embedding.
    let input = match config.input_mode {
        InputMode::Features => x_tokens * f * d,
        InputMode::LearnedConstant => 0,
    };
    let label_embed = y_tokens * k * d;

    // Per-block projections and feed-forward, per token.
    let privileged = if config.variant == Variant::Pi { k * dk + k * dv } else { 0 };
    let per_token_block = h * d * dk   // queries
        + d * dk                       // shared key
        + d * dv                       // shared value
        + privileged                   // label key/value terms
        + h * dv * d                   // output projection
        + d * hidden + hidden * d;     // feed-forward

    // Attention scores and value sums over the sliding window.
    let attn = attention_positions(config, tokens) * h * (dk + dv);

    let blocks = config.depth as u64 * (t * per_token_block + attn);

    // Prediction head at feature-token positions.
    let head = x_tokens * d * k;

    input + label_embed + blocks + head
}

/// Accounted training cost: forward plus backward at the documented
/// 2x-forward approximation, so 3x forward in total.
pub fn training_macs(forward_macs: u64) -> u64 {
    3 * forward_macs
}
