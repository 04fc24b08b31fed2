//! Learnable weights and their deterministic initialization.

use rand::Rng;

use super::{InputMode, ModelConfig, Variant};
use crate::numerics::Tensor;
use crate::rng::{gaussian, seeded};

/// Weights of one transformer block.
///
/// A single key and a single value projection serve all query heads.
/// The label projections exist only in the privileged-label variant.
#[derive(Clone, Debug)]
pub struct BlockParams {
    pub ln_scale: Tensor,  // [D]
    pub ln_offset: Tensor, // [D]
    pub w_up: Tensor,      // [D, 4D]
    pub w_down: Tensor,    // [4D, D]
    pub w_queries: Vec<Tensor>, // per head [D, dk]
    pub w_key: Tensor,     // [D, dk]
    pub w_value: Tensor,   // [D, dv]
    pub w_key_label: Option<Tensor>,   // [K, dk]
    pub w_value_label: Option<Tensor>, // [K, dv]
    pub w_out: Tensor,     // [H*dv, D]
}

/// All weights of a model instance.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub input_proj: Tensor,           // [F, D]
    pub label_embed: Option<Tensor>,  // [K, D], two-token variant
    pub const_token: Option<Tensor>,  // [D], label-only ablation
    pub blocks: Vec<BlockParams>,
    pub final_ln_scale: Tensor,  // [D]
    pub final_ln_offset: Tensor, // [D]
    pub output_head: Tensor,     // [D, K], zero-initialized
}

impl ModelParams {
    /// Visit every parameter in declaration order (the checkpoint and
    /// optimizer order).
    pub fn visit(&self, mut f: impl FnMut(&str, &Tensor)) {
        f("input_proj", &self.input_proj);
        if let Some(t) = &self.label_embed {
            f("label_embed", t);
        }
        if let Some(t) = &self.const_token {
            f("const_token", t);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let name = |part: &str| format!("block{i}.{part}");
            f(&name("ln_scale"), &b.ln_scale);
            f(&name("ln_offset"), &b.ln_offset);
            f(&name("w_up"), &b.w_up);
            f(&name("w_down"), &b.w_down);
            for (h, q) in b.w_queries.iter().enumerate() {
                f(&format!("block{i}.w_query{h}"), q);
            }
            f(&name("w_key"), &b.w_key);
            f(&name("w_value"), &b.w_value);
            if let Some(t) = &b.w_key_label {
                f(&name("w_key_label"), t);
            }
            if let Some(t) = &b.w_value_label {
                f(&name("w_value_label"), t);
            }
            f(&name("w_out"), &b.w_out);
        }
        f("final_ln_scale", &self.final_ln_scale);
        f("final_ln_offset", &self.final_ln_offset);
        f("output_head", &self.output_head);
    }

    /// Mutable references to every parameter, in the same order as
    /// [`ModelParams::visit`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.push(&mut self.input_proj);
        if let Some(t) = &mut self.label_embed {
            out.push(t);
        }
        if let Some(t) = &mut self.const_token {
            out.push(t);
        }
        for b in &mut self.blocks {
            out.push(&mut b.ln_scale);
            out.push(&mut b.ln_offset);
            out.push(&mut b.w_up);
            out.push(&mut b.w_down);
            for q in &mut b.w_queries {
                out.push(q);
            }
            out.push(&mut b.w_key);
            out.push(&mut b.w_value);
            if let Some(t) = &mut b.w_key_label {
                out.push(t);
            }
            if let Some(t) = &mut b.w_value_label {
                out.push(t);
            }
            out.push(&mut b.w_out);
        }
        out.push(&mut self.final_ln_scale);
        out.push(&mut self.final_ln_offset);
        out.push(&mut self.output_head);
        out
    }

    pub fn num_tensors(&self) -> usize {
        let mut n = 0;
        self.visit(|_, _| n += 1);
        n
    }

    pub fn num_weights(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.numel());
        n
    }
}

impl ModelParams {
    /// All-zero parameter set of the shapes `config` dictates (checkpoint
    /// loading target).
    pub fn zeros(config: &ModelConfig) -> ModelParams {
        let d = config.width;
        let k = config.num_classes;
        let hidden = config.ffw_hidden();
        let privileged = config.variant == Variant::Pi;
        ModelParams {
            input_proj: Tensor::zeros(vec![config.feature_dim, d]),
            label_embed: (config.variant == Variant::TwoToken).then(|| Tensor::zeros(vec![k, d])),
            const_token: (config.input_mode == InputMode::LearnedConstant).then(|| Tensor::zeros(vec![d])),
            blocks: (0..config.depth)
                .map(|_| BlockParams {
                    ln_scale: Tensor::zeros(vec![d]),
                    ln_offset: Tensor::zeros(vec![d]),
                    w_up: Tensor::zeros(vec![d, hidden]),
                    w_down: Tensor::zeros(vec![hidden, d]),
                    w_queries: (0..config.num_query_heads)
                        .map(|_| Tensor::zeros(vec![d, config.key_dim]))
                        .collect(),
                    w_key: Tensor::zeros(vec![d, config.key_dim]),
                    w_value: Tensor::zeros(vec![d, config.value_dim]),
                    w_key_label: privileged.then(|| Tensor::zeros(vec![k, config.key_dim])),
                    w_value_label: privileged.then(|| Tensor::zeros(vec![k, config.value_dim])),
                    w_out: Tensor::zeros(vec![config.num_query_heads * config.value_dim, d]),
                })
                .collect(),
            final_ln_scale: Tensor::zeros(vec![d]),
            final_ln_offset: Tensor::zeros(vec![d]),
            output_head: Tensor::zeros(vec![d, k]),
        }
    }
}

fn gaussian_weights<R: Rng>(rng: &mut R, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let std = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| gaussian(rng) * std).collect();
    Tensor::new(shape, data)
}

/// Deterministic parameter initialization.
///
/// Projections are scaled-Gaussian (1/sqrt(fan-in)); the output head is
/// all zeros so the very first prediction is exactly uniform and the
/// first per-example loss is exactly `ln K`.
pub fn init_params(config: &ModelConfig, seed: u64) -> ModelParams {
    let mut rng = seeded(seed);
    let d = config.width;
    let k = config.num_classes;
    let hidden = config.ffw_hidden();

    let input_proj = gaussian_weights(&mut rng, vec![config.feature_dim, d], config.feature_dim);
    let label_embed = match config.variant {
        Variant::TwoToken => {
            let data: Vec<f64> = (0..k * d).map(|_| gaussian(&mut rng)).collect();
            Some(Tensor::new(vec![k, d], data))
        }
        Variant::Pi => None,
    };
    let const_token = match config.input_mode {
        InputMode::LearnedConstant => {
            let data: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
            Some(Tensor::new(vec![d], data))
        }
        InputMode::Features => None,
    };

    let blocks = (0..config.depth)
        .map(|_| {
            let privileged = config.variant == Variant::Pi;
            let w_key = gaussian_weights(&mut rng, vec![d, config.key_dim], d);
            // Mimetic attention init: queries start near the shared key
            // projection, so scores approximate content similarity from
            // step one instead of waiting for a matching circuit to form.
            let w_queries = (0..config.num_query_heads)
                .map(|_| {
                    let mut q = w_key.clone();
                    let noise = gaussian_weights(&mut rng, vec![d, config.key_dim], d);
                    for (qv, nv) in q.data.iter_mut().zip(&noise.data) {
                        *qv += 3.0 * nv;
                    }
                    q
                })
                .collect();
            BlockParams {
                ln_scale: Tensor::new(vec![d], vec![1.0; d]),
                ln_offset: Tensor::zeros(vec![d]),
                w_up: gaussian_weights(&mut rng, vec![d, hidden], d),
                w_down: gaussian_weights(&mut rng, vec![hidden, d], hidden),
                w_queries,
                w_key,
                w_value: gaussian_weights(&mut rng, vec![d, config.value_dim], d),
                w_key_label: privileged.then(|| gaussian_weights(&mut rng, vec![k, config.key_dim], k)),
                w_value_label: privileged.then(|| gaussian_weights(&mut rng, vec![k, config.value_dim], k)),
                w_out: gaussian_weights(
                    &mut rng,
                    vec![config.num_query_heads * config.value_dim, d],
                    config.num_query_heads * config.value_dim,
                ),
            }
        })
        .collect();

    ModelParams {
        input_proj,
        label_embed,
        const_token,
        blocks,
        final_ln_scale: Tensor::new(vec![d], vec![1.0; d]),
        final_ln_offset: Tensor::zeros(vec![d]),
        output_head: Tensor::zeros(vec![d, k]),
    }
}
