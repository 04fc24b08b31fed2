//! Chunked forward pass over the KV-cache.
//!
//! One chunk of examples is embedded, run through all blocks against the
//! caches, and scored at its prediction positions. Keys and values
//! computed for the chunk are appended to the ring buffers as plain
//! values: later chunks attend to them as constants, so gradients never
//! cross chunk boundaries.

use std::rc::Rc;

use super::attention::{build_attention_mask, mqa_attention};
use super::cache::KVCache;
use super::params::ModelParams;
use super::{Example, InputMode, ModelConfig, ModelError, Variant, LN_EPS};
use crate::numerics::{Mask, Tape, Tensor, TensorId};

/// Tape handles of one block's weights.
pub struct BoundBlock {
    pub ln_scale: TensorId,
    pub ln_offset: TensorId,
    pub w_up: TensorId,
    pub w_down: TensorId,
    pub w_queries: Vec<TensorId>,
    pub w_key: TensorId,
    pub w_value: TensorId,
    pub w_key_label: Option<TensorId>,
    pub w_value_label: Option<TensorId>,
    pub w_out: TensorId,
}

/// Tape handles of the full parameter set, in declaration order.
pub struct BoundParams {
    pub input_proj: TensorId,
    pub label_embed: Option<TensorId>,
    pub const_token: Option<TensorId>,
    pub blocks: Vec<BoundBlock>,
    pub final_ln_scale: TensorId,
    pub final_ln_offset: TensorId,
    pub output_head: TensorId,
    ordered: Vec<TensorId>,
}

impl BoundParams {
    /// Insert every parameter as a tracked leaf of `tape`.
    pub fn bind(tape: &mut Tape, params: &ModelParams) -> BoundParams {
        let mut ordered = Vec::new();
        let mut track = |tape: &mut Tape, t: &Tensor| {
            let id = tape.param(t.clone());
            ordered.push(id);
            id
        };
        let input_proj = track(tape, &params.input_proj);
        let label_embed = params.label_embed.as_ref().map(|t| track(tape, t));
        let const_token = params.const_token.as_ref().map(|t| track(tape, t));
        let blocks = params
            .blocks
            .iter()
            .map(|b| BoundBlock {
                ln_scale: track(tape, &b.ln_scale),
                ln_offset: track(tape, &b.ln_offset),
                w_up: track(tape, &b.w_up),
                w_down: track(tape, &b.w_down),
                w_queries: b.w_queries.iter().map(|q| track(tape, q)).collect(),
                w_key: track(tape, &b.w_key),
                w_value: track(tape, &b.w_value),
                w_key_label: b.w_key_label.as_ref().map(|t| track(tape, t)),
                w_value_label: b.w_value_label.as_ref().map(|t| track(tape, t)),
                w_out: track(tape, &b.w_out),
            })
            .collect();
        let final_ln_scale = track(tape, &params.final_ln_scale);
        let final_ln_offset = track(tape, &params.final_ln_offset);
        let output_head = track(tape, &params.output_head);
        BoundParams {
            input_proj,
            label_embed,
            const_token,
            blocks,
            final_ln_scale,
            final_ln_offset,
            output_head,
            ordered,
        }
    }

    /// Collect gradients after a backward pass, aligned with
    /// [`ModelParams::tensors_mut`] order.
    pub fn collect_grads(&self, tape: &Tape) -> Vec<Vec<f64>> {
        self.ordered.iter().map(|id| tape.grad(*id).to_vec()).collect()
    }

    /// Assemble from leaves already inserted on a tape (gradient-check
    /// support). `ordered` must list every id in declaration order.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        input_proj: TensorId,
        label_embed: Option<TensorId>,
        const_token: Option<TensorId>,
        blocks: Vec<BoundBlock>,
        final_ln_scale: TensorId,
        final_ln_offset: TensorId,
        output_head: TensorId,
        ordered: Vec<TensorId>,
    ) -> BoundParams {
        BoundParams {
            input_proj,
            label_embed,
            const_token,
            blocks,
            final_ln_scale,
            final_ln_offset,
            output_head,
            ordered,
        }
    }
}

/// A chunk of examples prepared as model tokens.
pub struct ChunkInput {
    /// `[n_tokens, D]` token matrix.
    pub tokens: TensorId,
    /// `[n_examples, K]` one-hot labels (privileged variant only).
    pub label_onehot: Option<TensorId>,
    /// Absolute token index of every chunk token.
    pub positions: Rc<Vec<usize>>,
    /// Token rows whose final activations produce the logits.
    pub prediction_rows: Vec<usize>,
}

fn onehot_matrix(examples: &[Example], num_classes: usize) -> Tensor {
    let mut data = vec![0.0; examples.len() * num_classes];
    for (i, ex) in examples.iter().enumerate() {
        assert!(ex.label < num_classes, "label {} out of range for {} classes", ex.label, num_classes);
        data[i * num_classes + ex.label] = 1.0;
    }
    Tensor::new(vec![examples.len(), num_classes], data)
}

/// Embed a chunk of examples into model tokens starting at absolute token
/// index `start_token`.
pub fn embed_inputs(
    tape: &mut Tape,
    bound: &BoundParams,
    config: &ModelConfig,
    examples: &[Example],
    start_token: usize,
) -> ChunkInput {
    assert!(!examples.is_empty(), "embed_inputs: empty chunk");
    let n = examples.len();
    for ex in examples {
        assert_eq!(
            ex.features.len(),
            config.feature_dim,
            "feature dim {} does not match configured {}",
            ex.features.len(),
            config.feature_dim
        );
    }

    let projected = match config.input_mode {
        InputMode::Features => {
            let mut data = Vec::with_capacity(n * config.feature_dim);
            for ex in examples {
                data.extend_from_slice(&ex.features);
            }
            let x = tape.constant(Tensor::new(vec![n, config.feature_dim], data));
            tape.matmul(x, bound.input_proj)
        }
        InputMode::LearnedConstant => {
            let tok = bound.const_token.expect("learned-constant mode without const_token");
            tape.broadcast_row(tok, n)
        }
    };

    match config.variant {
        Variant::Pi => {
            let onehot = tape.constant(onehot_matrix(examples, config.num_classes));
            ChunkInput {
                tokens: projected,
                label_onehot: Some(onehot),
                positions: Rc::new((start_token..start_token + n).collect()),
                prediction_rows: (0..n).collect(),
            }
        }
        Variant::TwoToken => {
            let onehot = tape.constant(onehot_matrix(examples, config.num_classes));
            let embed = bound.label_embed.expect("two-token variant without label_embed");
            let label_tokens = tape.matmul(onehot, embed);
            let stacked = tape.concat_rows(projected, label_tokens);
            // Rows [x_0..x_n) then [y_0..y_n); interleave to x_0 y_0 x_1 y_1 ...
            let order: Vec<usize> = (0..n).flat_map(|i| [i, n + i]).collect();
            let tokens = tape.gather_rows(stacked, order);
            ChunkInput {
                tokens,
                label_onehot: None,
                positions: Rc::new((start_token..start_token + 2 * n).collect()),
                prediction_rows: (0..n).map(|i| 2 * i).collect(),
            }
        }
    }
}

/// One parallel-residual block: `h + FFW(LN(h)) + Attn(LN(h))`.
///
/// Keys and values for the chunk include the privileged label projections
/// when present; queries never do. The chunk's key/value rows are appended
/// to `cache` as constants for later chunks.
pub fn pi_block_forward(
    tape: &mut Tape,
    block: &BoundBlock,
    h: TensorId,
    chunk: &ChunkInput,
    cache: &mut KVCache,
    mask: &Rc<Mask>,
) -> TensorId {
    let normed = tape.layer_norm(h, block.ln_scale, block.ln_offset, LN_EPS);

    // Feed-forward path.
    let up = tape.matmul(normed, block.w_up);
    let act = tape.gelu(up);
    let ffw = tape.matmul(act, block.w_down);

    // Current chunk's keys/values (plus privileged label terms).
    let mut k_cur = tape.matmul(normed, block.w_key);
    let mut v_cur = tape.matmul(normed, block.w_value);
    if let (Some(onehot), Some(wk), Some(wv)) = (chunk.label_onehot, block.w_key_label, block.w_value_label) {
        let k_label = tape.matmul(onehot, wk);
        let v_label = tape.matmul(onehot, wv);
        k_cur = tape.add(k_cur, k_label);
        v_cur = tape.add(v_cur, v_label);
    }
    k_cur = tape.rotary(k_cur, &chunk.positions);

    // Cached rows enter as constants.
    let (ck, cv, _) = cache.snapshot();
    let fill = cache.fill();
    let key_w = tape.shape(k_cur)[1];
    let val_w = tape.shape(v_cur)[1];
    let cached_k = tape.constant(Tensor::new(vec![fill, key_w], ck));
    let cached_v = tape.constant(Tensor::new(vec![fill, val_w], cv));
    let keys = tape.concat_rows(cached_k, k_cur);
    let values = tape.concat_rows(cached_v, v_cur);

    let q_heads: Vec<TensorId> = block
        .w_queries
        .iter()
        .map(|&wq| {
            let q = tape.matmul(normed, wq);
            tape.rotary(q, &chunk.positions)
        })
        .collect();
    let heads = mqa_attention(tape, &q_heads, keys, values, mask);
    let attn = tape.matmul(heads, block.w_out);

    let residual = tape.add(h, ffw);
    let out = tape.add(residual, attn);

    // Persist the chunk's rows for later chunks.
    let n_tokens = chunk.positions.len();
    let k_data = tape.value(k_cur).to_vec();
    let v_data = tape.value(v_cur).to_vec();
    for i in 0..n_tokens {
        cache.append(&k_data[i * key_w..(i + 1) * key_w], &v_data[i * val_w..(i + 1) * val_w]);
    }
    out
}

/// Result of a chunk forward pass.
#[derive(Debug)]
pub struct ChunkForward {
    /// `[n_examples, K]` prediction logits.
    pub logits: TensorId,
    /// Labels of the chunk, prediction-aligned.
    pub labels: Vec<usize>,
}

/// Run a chunk through every block and read logits at the prediction
/// positions. Caches advance by the chunk's tokens.
pub fn forward_chunk(
    tape: &mut Tape,
    bound: &BoundParams,
    config: &ModelConfig,
    examples: &[Example],
    caches: &mut [KVCache],
) -> Result<ChunkForward, ModelError> {
    if caches.len() != config.depth {
        return Err(ModelError::CacheDepthMismatch { got: caches.len(), expected: config.depth });
    }
    let seen: Vec<usize> = caches.iter().map(|c| c.total_tokens_seen()).collect();
    if seen.windows(2).any(|w| w[0] != w[1]) {
        return Err(ModelError::InconsistentCaches { observed: seen });
    }
    let start_token = seen.first().copied().unwrap_or(0);

    let chunk = embed_inputs(tape, bound, config, examples, start_token);

    // Keys cover the (identical) cache window plus the chunk itself.
    let cache_positions: Vec<usize> = {
        let fill = caches[0].fill();
        (start_token - fill..start_token).collect()
    };
    let mut key_positions = cache_positions;
    key_positions.extend(chunk.positions.iter());
    let mask = Rc::new(build_attention_mask(
        config.variant,
        &chunk.positions,
        &key_positions,
        config.window,
    ));

    let mut h = chunk.tokens;
    for (block, cache) in bound.blocks.iter().zip(caches.iter_mut()) {
        h = pi_block_forward(tape, block, h, &chunk, cache, &mask);
    }

    let read = tape.gather_rows(h, chunk.prediction_rows.clone());
    let normed = tape.layer_norm(read, bound.final_ln_scale, bound.final_ln_offset, LN_EPS);
    let logits = tape.matmul(normed, bound.output_head);

    Ok(ChunkForward {
        logits,
        labels: examples.iter().map(|e| e.label).collect(),
    })
}
