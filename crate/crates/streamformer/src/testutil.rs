//! Small helpers shared by unit and integration tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::{forward_chunk, BoundParams, Example, ModelConfig, ModelParams};
use crate::numerics::{Tape, Tensor};
use crate::rng::seeded;

pub fn test_rng(seed: u64) -> ChaCha8Rng {
    seeded(0xC0FFEE ^ seed.wrapping_mul(0x9E37_79B9))
}

pub fn gaussian_tensor<R: Rng>(rng: &mut R, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| crate::rng::gaussian(rng)).collect();
    Tensor::new(shape, data)
}

/// Forward an example sequence in chunks (no training) and return the
/// per-example logit rows.
pub fn collect_logits(
    config: &ModelConfig,
    params: &ModelParams,
    examples: &[Example],
    chunk_size: usize,
) -> Vec<Vec<f64>> {
    let mut caches = config.new_caches();
    let k = config.num_classes;
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(chunk_size) {
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, params);
        let fwd = forward_chunk(&mut tape, &bound, config, chunk, &mut caches).expect("forward");
        let vals = tape.value(fwd.logits);
        for i in 0..chunk.len() {
            out.push(vals[i * k..(i + 1) * k].to_vec());
        }
    }
    out
}

/// Random example chunk for a config.
pub fn random_examples<R: Rng>(rng: &mut R, config: &ModelConfig, n: usize) -> Vec<Example> {
    (0..n)
        .map(|_| {
            let features: Vec<f64> = (0..config.feature_dim).map(|_| crate::rng::gaussian(rng)).collect();
            let label = rng.random_range(0..config.num_classes);
            Example::new(features, label)
        })
        .collect()
}
