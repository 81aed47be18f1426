//! One-hidden-layer tanh MLP internals.
//!
//! Parameter layout: `W1` (hidden x input_dim), `b1` (hidden), `W2`
//! (n_classes x hidden), `b2` (n_classes).

use super::{softmax_in_place, ShapeTag};

fn offsets(shape: &ShapeTag) -> (usize, usize, usize) {
    let (d, h, k) = (shape.input_dim, shape.hidden, shape.n_classes);
    let b1 = h * d;
    let w2 = b1 + h;
    let b2 = w2 + k * h;
    (b1, w2, b2)
}

/// Returns (hidden activations, logits).
pub(super) fn logits(shape: &ShapeTag, values: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (d, h, k) = (shape.input_dim, shape.hidden, shape.n_classes);
    let (b1, w2, b2) = offsets(shape);
    let mut hidden = Vec::with_capacity(h);
    for j in 0..h {
        let row = &values[j * d..(j + 1) * d];
        let mut a = values[b1 + j];
        for (w, xi) in row.iter().zip(x) {
            a += w * xi;
        }
        hidden.push(a.tanh());
    }
    let mut zs = Vec::with_capacity(k);
    for c in 0..k {
        let row = &values[w2 + c * h..w2 + (c + 1) * h];
        let mut z = values[b2 + c];
        for (w, hj) in row.iter().zip(&hidden) {
            z += w * hj;
        }
        zs.push(z);
    }
    (hidden, zs)
}

pub(super) fn accumulate(
    shape: &ShapeTag,
    values: &[f64],
    x: &[f64],
    y: usize,
    grad: &mut [f64],
) -> f64 {
    let (d, h, k) = (shape.input_dim, shape.hidden, shape.n_classes);
    let (b1, w2, b2) = offsets(shape);

    let (hidden, mut probs) = logits(shape, values, x);
    softmax_in_place(&mut probs);
    let loss = -probs[y].max(1e-300).ln();

    // output layer
    let mut dhidden = vec![0.0; h];
    for c in 0..k {
        let delta = probs[c] - f64::from(c == y);
        let w_row = &values[w2 + c * h..w2 + (c + 1) * h];
        let g_row = &mut grad[w2 + c * h..w2 + (c + 1) * h];
        for j in 0..h {
            g_row[j] += delta * hidden[j];
            dhidden[j] += delta * w_row[j];
        }
        grad[b2 + c] += delta;
    }

    // hidden layer through tanh'
    for j in 0..h {
        let da = dhidden[j] * (1.0 - hidden[j] * hidden[j]);
        let g_row = &mut grad[j * d..(j + 1) * d];
        for (g, xi) in g_row.iter_mut().zip(x) {
            *g += da * xi;
        }
        grad[b1 + j] += da;
    }
    loss
}
