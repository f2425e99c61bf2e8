use ndarray::{Array2, Axis};

use crate::activity::ActivityType;

pub const CE_EPSILON: f64 = 1e-12;

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Row-wise softmax of a `[batch, classes]` matrix.
pub fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut p = z.clone();
    for mut row in p.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    p
}

pub fn cross_entropy(p: &[f64], true_class: ActivityType) -> f64 {
    -(p[true_class.index()] + CE_EPSILON).ln()
}

/// Summed cross-entropy of the row-wise softmax of `logits` against class
/// indices, and `scale` times its exact gradient with respect to the logits.
pub(crate) fn softmax_ce(logits: &Array2<f64>, targets: &[usize], scale: f64) -> (f64, Array2<f64>) {
    let mut grad = softmax_rows(logits);
    let mut total = 0.0;
    for (mut row, &t) in grad.axis_iter_mut(Axis(0)).zip(targets) {
        let pt = row[t];
        total -= (pt + CE_EPSILON).ln();
        // d/dz of -ln(p_t + eps) is (p_t / (p_t + eps)) * (p - onehot(t)).
        let k = scale * pt / (pt + CE_EPSILON);
        row[t] -= 1.0;
        row *= k;
    }
    (total, grad)
}

/// Summed cross-entropy only.
pub(crate) fn softmax_ce_loss(logits: &Array2<f64>, targets: &[usize]) -> f64 {
    let p = softmax_rows(logits);
    p.axis_iter(Axis(0))
        .zip(targets)
        .map(|(row, &t)| -(row[t] + CE_EPSILON).ln())
        .sum()
}
