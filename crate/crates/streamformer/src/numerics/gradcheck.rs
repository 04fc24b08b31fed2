//! Finite-difference verification of reverse-mode gradients.

use super::{Tape, Tensor, TensorId};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Numerical gradients of a scalar function of several parameter tensors.
///
/// `f` rebuilds the computation on a fresh tape from the given parameter
/// leaves and returns the scalar loss node. Each parameter element is
/// displaced by ±h in turn.
pub fn central_difference_grads(
    f: &dyn Fn(&mut Tape, &[TensorId]) -> TensorId,
    params: &[Tensor],
    h: f64,
) -> Vec<Vec<f64>> {
    let eval = |data: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = data.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&mut tape, &ids);
        tape.value(loss)[0]
    };
    let mut grads = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let g: Vec<f64> = (0..params[p].numel())
            .map(|j| {
                let mut plus = params.to_vec();
                plus[p].data[j] += h;
                let mut minus = params.to_vec();
                minus[p].data[j] -= h;
                (eval(&plus) - eval(&minus)) / (2.0 * h)
            })
            .collect();
        grads.push(g);
    }
    grads
}

/// Compare reverse-mode gradients against central differences.
///
/// Returns the maximum over all parameter elements of
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(f: &dyn Fn(&mut Tape, &[TensorId]) -> TensorId, params: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = params.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &ids);
    assert!(
        tape.value(loss)[0].is_finite(),
        "grad_check: loss is not finite at the given parameters"
    );
    tape.backward(loss);
    let analytic: Vec<Vec<f64>> = ids.iter().map(|id| tape.grad(*id).to_vec()).collect();
    let numeric = central_difference_grads(f, params, FD_STEP);

    let mut worst = 0.0f64;
    for (a_p, n_p) in analytic.iter().zip(&numeric) {
        for (&a, &n) in a_p.iter().zip(n_p) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}
