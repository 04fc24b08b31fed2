//! Decoupled weight-decay Adam update.

use thiserror::Error;

use super::Tensor;

/// A gradient came back NaN or infinite; training must stop rather than
/// silently clip.
#[derive(Debug, Error)]
#[error("non-finite gradient in parameter {param_index} at element {element} (value {value})")]
pub struct NonFiniteGradient {
    pub param_index: usize,
    pub element: usize,
    pub value: f64,
}

/// Optimizer state: per-parameter moment accumulators plus hyperparameters.
#[derive(Clone, Debug)]
pub struct AdamWState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl AdamWState {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamWState {
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
            weight_decay,
        }
    }
}

/// One AdamW update over a parameter list.
///
/// Moments are allocated on first use and must keep matching shapes
/// afterwards. The decay term is decoupled: `p -= lr * wd * p` on top of
/// the bias-corrected moment update. `step_count` increments exactly once.
pub fn adamw_step(
    params: &mut [&mut Tensor],
    grads: &[&[f64]],
    state: &mut AdamWState,
) -> Result<(), NonFiniteGradient> {
    assert_eq!(params.len(), grads.len(), "adamw_step: {} params vs {} grads", params.len(), grads.len());
    if state.first_moment.is_empty() {
        state.first_moment = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        state.second_moment = params.iter().map(|p| vec![0.0; p.numel()]).collect();
    }
    assert_eq!(state.first_moment.len(), params.len(), "adamw_step: stale moment count");

    for (idx, (p, g)) in params.iter().zip(grads).enumerate() {
        assert_eq!(p.numel(), g.len(), "adamw_step: param {idx} has {} elements, grad has {}", p.numel(), g.len());
        if let Some(element) = g.iter().position(|v| !v.is_finite()) {
            return Err(NonFiniteGradient { param_index: idx, element, value: g[element] });
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let lr = state.learning_rate;

    for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first_moment[idx];
        let v = &mut state.second_moment[idx];
        for j in 0..g.len() {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p.data[j] -= lr * (m_hat / (v_hat.sqrt() + state.epsilon) + state.weight_decay * p.data[j]);
        }
    }
    Ok(())
}
