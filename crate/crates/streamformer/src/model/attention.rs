//! Causal sliding-window masking and multi-query attention.

use std::rc::Rc;

use super::Variant;
use crate::numerics::{Mask, Tape, TensorId};

/// Mask over `[queries, keys]` given absolute token positions.
///
/// A key at position `k` is attendable from a query at position `q` iff it
/// is causal (`k < q` for the privileged variant, whose diagonal is always
/// zero; `k <= q` for the two-token variant) and within the sliding window
/// (`q - k <= window`).
pub fn build_attention_mask(
    variant: Variant,
    query_positions: &[usize],
    key_positions: &[usize],
    window: usize,
) -> Mask {
    let rows = query_positions.len();
    let cols = key_positions.len();
    let mut bits = vec![false; rows * cols];
    for (r, &qp) in query_positions.iter().enumerate() {
        for (c, &kp) in key_positions.iter().enumerate() {
            let causal = match variant {
                Variant::Pi => kp < qp,
                Variant::TwoToken => kp <= qp,
            };
            bits[r * cols + c] = causal && qp - kp <= window;
        }
    }
    Mask::new(rows, cols, bits)
}

/// Multi-query attention: every head consumes the same single key and
/// value matrix. Per-head scores are scaled by `1/sqrt(dk)`, soft-maxed
/// over unmasked entries, applied to the values, and the head outputs are
/// concatenated to `[t, H*dv]` (the output projection is applied by the
/// caller).
pub fn mqa_attention(
    tape: &mut Tape,
    q_heads: &[TensorId],
    k: TensorId,
    v: TensorId,
    mask: &Rc<Mask>,
) -> TensorId {
    assert!(!q_heads.is_empty(), "mqa_attention: no query heads");
    let dk = tape.shape(q_heads[0])[1];
    let scale = 1.0 / (dk as f64).sqrt();
    let outputs: Vec<TensorId> = q_heads
        .iter()
        .map(|&q| {
            let scores = tape.masked_scores(q, k, mask, scale);
            let probs = tape.masked_softmax(scores, mask);
            tape.masked_aggregate(probs, v, mask)
        })
        .collect();
    tape.concat_cols(&outputs)
}
