//! Recent-window label baseline.

/// Average accuracy of an oracle that scores position `t` correct iff its
/// label occurred among the `window` most recent labels. Positions with
/// no history score incorrect.
pub fn window_oracle(labels: &[usize], window: usize) -> f64 {
    assert!(window >= 1, "window must be >= 1");
    if labels.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    for t in 0..labels.len() {
        let lo = t.saturating_sub(window);
        if labels[lo..t].contains(&labels[t]) {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}
