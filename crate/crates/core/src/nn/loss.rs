//! Classification losses with gradients w.r.t. logits.

use super::softmax;

pub const PROB_EPS: f64 = 1e-12;

/// `-(1 - p_t)^gamma ln p_t` for the target-class probability `p_t`.
pub fn focal_loss(probs: &[f64], target: usize, gamma: f64) -> f64 {
    let p = probs[target].max(PROB_EPS);
    -(1.0 - p).powf(gamma) * p.ln()
}

/// Mean focal loss over a batch of probability vectors.
pub fn focal_loss_batch(probs: &[Vec<f64>], targets: &[usize], gamma: f64) -> f64 {
    let total: f64 = probs.iter().zip(targets).map(|(p, &t)| focal_loss(p, t, gamma)).sum();
    total / probs.len() as f64
}

/// Focal loss on logits, returning the loss and its logit gradient.
pub fn focal_loss_logits(logits: &[f64], target: usize, gamma: f64) -> (f64, Vec<f64>) {
    let probs = softmax(logits);
    let pt = probs[target].max(PROB_EPS);
    let one_minus = (1.0 - pt).max(0.0);
    let loss = -one_minus.powf(gamma) * pt.ln();
    // dL/dp_t, then chain through softmax: dp_t/dz_j = p_t (delta_tj - p_j).
    let dl_dpt = if gamma == 0.0 {
        -1.0 / pt
    } else {
        gamma * one_minus.powf(gamma - 1.0) * pt.ln() - one_minus.powf(gamma) / pt
    };
    let grad = probs
        .iter()
        .enumerate()
        .map(|(j, &pj)| dl_dpt * pt * (if j == target { 1.0 } else { 0.0 } - pj))
        .collect();
    (loss, grad)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit with the positive term weighted:
/// `-(w y ln s(z) + (1 - y) ln(1 - s(z)))`.
pub fn weighted_binary_loss(logit: f64, target: u8, pos_weight: f64) -> f64 {
    let y = f64::from(target);
    pos_weight * y * softplus(-logit) + (1.0 - y) * softplus(logit)
}

pub fn weighted_binary_grad(logit: f64, target: u8, pos_weight: f64) -> f64 {
    let y = f64::from(target);
    let s = sigmoid(logit);
    -pos_weight * y * (1.0 - s) + (1.0 - y) * s
}
