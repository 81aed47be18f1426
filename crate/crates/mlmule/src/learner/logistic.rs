//! Multinomial logistic regression internals.
//!
//! Parameter layout: `W` (n_classes x input_dim, row-major) then `b`
//! (n_classes).

use super::{softmax_in_place, ShapeTag};

pub(super) fn logits(shape: &ShapeTag, values: &[f64], x: &[f64]) -> Vec<f64> {
    let (d, k) = (shape.input_dim, shape.n_classes);
    let mut zs = Vec::with_capacity(k);
    for c in 0..k {
        let row = &values[c * d..(c + 1) * d];
        let mut z = values[k * d + c];
        for (w, xi) in row.iter().zip(x) {
            z += w * xi;
        }
        zs.push(z);
    }
    zs
}

/// Adds this sample's cross-entropy gradient into `grad` and returns
/// its loss term.
pub(super) fn accumulate(
    shape: &ShapeTag,
    values: &[f64],
    x: &[f64],
    y: usize,
    grad: &mut [f64],
) -> f64 {
    let (d, k) = (shape.input_dim, shape.n_classes);
    let mut probs = logits(shape, values, x);
    softmax_in_place(&mut probs);
    let loss = -probs[y].max(1e-300).ln();
    for c in 0..k {
        let delta = probs[c] - f64::from(c == y);
        let row = &mut grad[c * d..(c + 1) * d];
        for (g, xi) in row.iter_mut().zip(x) {
            *g += delta * xi;
        }
        grad[k * d + c] += delta;
    }
    loss
}
