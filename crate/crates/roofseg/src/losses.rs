//! Training-loss kernels with analytic gradients.
//!
//! Pure f64 numerics: softmax cross-entropy over per-point class logits, an
//! offset-regression loss (Euclidean error plus a direction term), and a
//! hinged discriminative embedding loss (pull to instance means, push means
//! apart, regularize mean norms). No autodiff — every kernel returns its
//! gradient in closed form, and the tests check it against central finite
//! differences.
//!
//! The direction term is `1 - cos(pred, gt)` rather than the raw cosine:
//! adding `+cos` would reward misalignment, and the shifted form keeps the
//! kernel non-negative without changing the gradient.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::cloud::Embeddings;
use crate::error::{Error, Result};

/// Norm threshold below which the cosine direction term is skipped.
const COSINE_GUARD: f64 = 1e-8;

/// Weight of the mean-norm regularizer inside the embedding loss.
const REG_WEIGHT: f64 = 0.001;

/// A scalar loss plus its gradient with respect to the differentiable
/// inputs, flattened row-major.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// Per-point embeddings with their instance assignment. Points with a
/// negative id (non-roof) take no part in the loss and get zero gradient.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    pub embeddings: Embeddings,
    pub instance_ids: Vec<i64>,
}

impl EmbeddingBatch {
    pub fn new(embeddings: Embeddings, instance_ids: Vec<i64>) -> Result<Self> {
        if embeddings.len() != instance_ids.len() {
            return Err(Error::length_mismatch(
                "embeddings vs instance ids",
                embeddings.len(),
                instance_ids.len(),
            ));
        }
        Ok(EmbeddingBatch {
            embeddings,
            instance_ids,
        })
    }
}

/// Sum of per-point softmax cross-entropy. The gradient is with respect to
/// the logits, flattened as `point * classes + class`.
pub fn classification_loss(logits: &[Vec<f64>], labels: &[usize]) -> Result<LossValue> {
    if logits.len() != labels.len() {
        return Err(Error::length_mismatch(
            "logit rows vs labels",
            logits.len(),
            labels.len(),
        ));
    }
    let classes = logits.first().map_or(0, Vec::len);
    let mut value = 0.0;
    let mut gradient = vec![0.0; logits.len() * classes];
    for (i, (row, &label)) in logits.iter().zip(labels).enumerate() {
        if row.len() != classes || classes == 0 {
            return Err(Error::length_mismatch("logit row width", classes, row.len()));
        }
        if label >= classes {
            return Err(Error::LabelOutOfRange {
                label,
                classes,
                index: i,
            });
        }
        // Stabilized log-sum-exp.
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        value += max + sum.ln() - row[label];
        for (c, z) in row.iter().enumerate() {
            let softmax = (z - max).exp() / sum;
            gradient[i * classes + c] = softmax - if c == label { 1.0 } else { 0.0 };
        }
    }
    Ok(LossValue { value, gradient })
}

/// Sum over points of `|pred - gt| + (1 - cos(pred, gt))`; the direction
/// term is skipped when either vector is shorter than the guard. Gradient is
/// with respect to the predicted offsets, flattened xyz per point.
pub fn offset_loss(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<LossValue> {
    if pred.len() != gt.len() {
        return Err(Error::length_mismatch(
            "predicted vs ground-truth offsets",
            pred.len(),
            gt.len(),
        ));
    }
    let mut value = 0.0;
    let mut gradient = vec![0.0; pred.len() * 3];
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        let e = p - g;
        let e_norm = e.norm();
        value += e_norm;
        let mut grad = if e_norm > 0.0 { e / e_norm } else { Vector3::zeros() };

        let (pn, gn) = (p.norm(), g.norm());
        if pn >= COSINE_GUARD && gn >= COSINE_GUARD {
            let cos = p.dot(g) / (pn * gn);
            value += 1.0 - cos;
            // d cos / d p = g/(|p||g|) - (p.g) p / (|p|^3 |g|)
            grad -= g / (pn * gn) - p * (p.dot(g) / (pn * pn * pn * gn));
        }
        gradient[i * 3..i * 3 + 3].copy_from_slice(grad.as_slice());
    }
    Ok(LossValue { value, gradient })
}

/// Hinged discriminative embedding loss:
/// pull-to-mean within instances, push between instance means, plus a small
/// mean-norm regularizer. Gradient is with respect to all embeddings,
/// flattened row-major; rows with negative instance ids stay zero.
pub fn embedding_loss(
    batch: &EmbeddingBatch,
    margin_pull: f64,
    margin_push: f64,
) -> Result<LossValue> {
    if !(margin_pull > 0.0) || !(margin_push > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "margins must be positive, got pull={margin_pull} push={margin_push}"
        )));
    }
    let dim = batch.embeddings.dim();
    let mut members: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &id) in batch.instance_ids.iter().enumerate() {
        if id >= 0 {
            members.entry(id).or_default().push(i);
        }
    }
    if members.is_empty() {
        return Err(Error::NoInstances);
    }
    let count = members.len() as f64;

    let mut means: Vec<Vec<f64>> = Vec::with_capacity(members.len());
    for rows in members.values() {
        let mut mean = vec![0.0; dim];
        for &i in rows {
            for (m, x) in mean.iter_mut().zip(batch.embeddings.row(i)) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= rows.len() as f64;
        }
        means.push(mean);
    }

    let mut value = 0.0;
    let mut gradient = vec![0.0; batch.embeddings.len() * dim];
    // Gradient accumulated on each mean; distributed to members at the end.
    let mut mean_grads = vec![vec![0.0; dim]; means.len()];

    // Pull term.
    for (inst, rows) in members.values().enumerate() {
        let n = rows.len() as f64;
        let mean = &means[inst];
        let scale = 1.0 / (count * n);
        let mut sum_dirs = vec![0.0; dim];
        for &i in rows {
            let row = batch.embeddings.row(i);
            let diff: Vec<f64> = row.iter().zip(mean).map(|(x, m)| x - m).collect();
            let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
            let hinge = norm - margin_pull;
            if hinge > 0.0 {
                value += scale * hinge * hinge;
                for (k, d) in diff.iter().enumerate() {
                    let dir = 2.0 * hinge * d / norm;
                    gradient[i * dim + k] += scale * dir;
                    sum_dirs[k] += dir;
                }
            }
        }
        // The mean moves against the pulled points; the final distribution
        // step applies the member factor 1/n.
        for (g, s) in mean_grads[inst].iter_mut().zip(&sum_dirs) {
            *g -= scale * s;
        }
    }

    // Push term over unordered mean pairs.
    let pairs = means.len() * (means.len() - 1) / 2;
    if pairs > 0 {
        let scale = 1.0 / pairs as f64;
        for a in 0..means.len() {
            for b in a + 1..means.len() {
                let diff: Vec<f64> = means[a].iter().zip(&means[b]).map(|(x, y)| x - y).collect();
                let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                let hinge = 2.0 * margin_push - dist;
                if hinge > 0.0 {
                    value += scale * hinge * hinge;
                    if dist > 0.0 {
                        for k in 0..dim {
                            let d = scale * 2.0 * hinge * diff[k] / dist;
                            mean_grads[a][k] -= d;
                            mean_grads[b][k] += d;
                        }
                    }
                }
            }
        }
    }

    // Mean-norm regularizer.
    for (inst, mean) in means.iter().enumerate() {
        let norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
        value += REG_WEIGHT * norm / count;
        if norm > 0.0 {
            for (g, m) in mean_grads[inst].iter_mut().zip(mean) {
                *g += REG_WEIGHT * m / (norm * count);
            }
        }
    }

    // Distribute accumulated mean gradients to members.
    for (inst, rows) in members.values().enumerate() {
        let n = rows.len() as f64;
        for &i in rows {
            for k in 0..dim {
                gradient[i * dim + k] += mean_grads[inst][k] / n;
            }
        }
    }

    Ok(LossValue { value, gradient })
}

/// Unweighted sum of the three heads; gradients concatenate in argument
/// order.
pub fn total_loss(cls: &LossValue, reg: &LossValue, emb: &LossValue) -> LossValue {
    let mut gradient =
        Vec::with_capacity(cls.gradient.len() + reg.gradient.len() + emb.gradient.len());
    gradient.extend_from_slice(&cls.gradient);
    gradient.extend_from_slice(&reg.gradient);
    gradient.extend_from_slice(&emb.gradient);
    LossValue {
        value: cls.value + reg.value + emb.value,
        gradient,
    }
}
