//! Masked pairwise distances and the embedding losses with analytic gradients.
//!
//! The distance between two items at one level is the L1 distance of their
//! activations restricted to the logical OR of the two code masks. The OR
//! keeps pairwise distances from collapsing to zero under sparse codes and
//! lets gradients flow on every dimension either item activates.
//!
//! Subgradient convention for L1 at equal coordinates: sign(0) = 0, so
//! masked-out and exactly-equal coordinates stay silent.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::batch::EmbeddingBatch;
use crate::error::{HiqError, Result};
use crate::hashopt::LevelAssignment;

/// Loss value with the gradient of the activations it was computed on.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Array2<f64>,
    pub warnings: Vec<LossWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossWarning {
    /// No dissimilar items in the batch; loss and gradient are zero.
    SingleClass,
    /// This many classes had a single example and were excluded from
    /// pair formation.
    SingletonClasses(usize),
}

/// Which embedding loss to train with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// Triplet hinge with semi-hard negative mining.
    Triplet { margin: f64 },
    /// Softmax cross-entropy over negated distances with one positive pair
    /// per class, plus an activation L2 penalty.
    Npairs { l2_reg: f64 },
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Union of two sorted dimension lists.
fn union_mask(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// L1 distance restricted to the OR of the two code masks.
pub fn masked_distance(
    f_i: ArrayView1<f64>,
    f_j: ArrayView1<f64>,
    h_i: &[usize],
    h_j: &[usize],
) -> Result<f64> {
    if f_i.len() != f_j.len() {
        return Err(HiqError::Input(format!(
            "dimension mismatch: {} vs {}",
            f_i.len(),
            f_j.len()
        )));
    }
    Ok(union_mask(h_i, h_j)
        .into_iter()
        .map(|q| (f_i[q] - f_j[q]).abs())
        .sum())
}

fn pairwise_distances(slice: ArrayView2<f64>, codes: &[Vec<usize>]) -> Array2<f64> {
    let n = slice.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = masked_distance(slice.row(i), slice.row(j), &codes[i], &codes[j])
                .expect("rows of one matrix share a width");
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

fn check_loss_inputs(slice: ArrayView2<f64>, codes: &[Vec<usize>], labels: &[i64]) -> Result<()> {
    if codes.len() != slice.nrows() || labels.len() != slice.nrows() {
        return Err(HiqError::Input(format!(
            "{} rows, {} codes, {} labels",
            slice.nrows(),
            codes.len(),
            labels.len()
        )));
    }
    for code in codes {
        if code.iter().any(|&q| q >= slice.ncols()) {
            return Err(HiqError::Input("code dimension out of range".into()));
        }
    }
    Ok(())
}

/// Adds `w * d(masked distance(i, j)) / d(activations)` into `grad`.
fn add_distance_grad(
    grad: &mut Array2<f64>,
    slice: ArrayView2<f64>,
    codes: &[Vec<usize>],
    i: usize,
    j: usize,
    w: f64,
) {
    for q in union_mask(&codes[i], &codes[j]) {
        let s = sgn(slice[(i, q)] - slice[(j, q)]);
        grad[(i, q)] += w * s;
        grad[(j, q)] -= w * s;
    }
}

/// Triplet hinge with semi-hard negative mining over masked distances.
///
/// For each ordered anchor-positive pair the negative is the one with the
/// smallest distance strictly greater than the positive distance, falling
/// back to the farthest negative when none exists. The loss is the mean
/// hinge over anchor-positive pairs. A batch without dissimilar items
/// yields zero loss, zero gradient, and a warning.
pub fn triplet_semihard_loss(
    slice: ArrayView2<f64>,
    codes: &[Vec<usize>],
    labels: &[i64],
    margin: f64,
) -> Result<LossOutput> {
    check_loss_inputs(slice, codes, labels)?;
    let n = slice.nrows();
    let mut grad = Array2::zeros(slice.dim());
    if labels.iter().all(|&y| y == labels[0]) {
        return Ok(LossOutput {
            value: 0.0,
            grad,
            warnings: vec![LossWarning::SingleClass],
        });
    }
    let dist = pairwise_distances(slice, codes);

    // (anchor, positive, negative, hinge active?)
    let mut triplets: Vec<(usize, usize, usize)> = Vec::new();
    let mut n_pairs = 0usize;
    for a in 0..n {
        for p in 0..n {
            if a == p || labels[a] != labels[p] {
                continue;
            }
            n_pairs += 1;
            let d_ap = dist[(a, p)];
            let mut semi: Option<usize> = None;
            let mut far: Option<usize> = None;
            for neg in 0..n {
                if labels[neg] == labels[a] {
                    continue;
                }
                let d_an = dist[(a, neg)];
                if d_an > d_ap && semi.is_none_or(|s| d_an < dist[(a, s)]) {
                    semi = Some(neg);
                }
                if far.is_none_or(|f| d_an > dist[(a, f)]) {
                    far = Some(neg);
                }
            }
            let neg = semi.or(far).expect("dissimilar items exist");
            triplets.push((a, p, neg));
        }
    }

    let w = 1.0 / n_pairs as f64;
    let mut value = 0.0;
    for (a, p, neg) in triplets {
        let hinge = margin + dist[(a, p)] - dist[(a, neg)];
        if hinge > 0.0 {
            value += w * hinge;
            add_distance_grad(&mut grad, slice, codes, a, p, w);
            add_distance_grad(&mut grad, slice, codes, a, neg, -w);
        }
    }

    Ok(LossOutput {
        value,
        grad,
        warnings: Vec::new(),
    })
}

/// Softmax cross-entropy over negated masked distances.
///
/// One (anchor, positive) pair participates per label; classes with more
/// examples rotate through them via `rotation` (the trainer passes the
/// iteration index), classes with a single example are excluded with a
/// warning. For anchor `k` the logits are `-d(anchor_k, positive_j)` over
/// all participating classes `j`; the loss is the mean cross-entropy at the
/// own class plus `l2_reg * mean_i ||f_i||^2`.
pub fn npairs_loss(
    slice: ArrayView2<f64>,
    codes: &[Vec<usize>],
    labels: &[i64],
    l2_reg: f64,
    rotation: usize,
) -> Result<LossOutput> {
    check_loss_inputs(slice, codes, labels)?;
    let n = slice.nrows();
    let mut grad = Array2::zeros(slice.dim());
    let mut warnings = Vec::new();

    // Classes in first-appearance order with their member items.
    let mut classes: Vec<(i64, Vec<usize>)> = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        match classes.iter_mut().find(|(label, _)| *label == y) {
            Some((_, members)) => members.push(i),
            None => classes.push((y, vec![i])),
        }
    }
    let skipped = classes.iter().filter(|(_, m)| m.len() < 2).count();
    if skipped > 0 {
        warnings.push(LossWarning::SingletonClasses(skipped));
    }
    let pairs: Vec<(usize, usize)> = classes
        .iter()
        .filter(|(_, m)| m.len() >= 2)
        .map(|(_, m)| {
            let c = m.len();
            (m[rotation % c], m[(rotation + 1) % c])
        })
        .collect();

    // L2 penalty applies to the whole slice regardless of participation.
    let mut value = 0.0;
    if l2_reg > 0.0 {
        let norm_sq: f64 = slice.iter().map(|x| x * x).sum();
        value += l2_reg * norm_sq / n as f64;
        let coef = 2.0 * l2_reg / n as f64;
        grad.zip_mut_with(&slice, |g, &f| *g += coef * f);
    }

    let k_classes = pairs.len();
    if k_classes < 2 {
        warnings.push(LossWarning::SingleClass);
        return Ok(LossOutput {
            value,
            grad,
            warnings,
        });
    }

    let w = 1.0 / k_classes as f64;
    for (k, &(anchor, _)) in pairs.iter().enumerate() {
        let d_row: Vec<f64> = pairs
            .iter()
            .map(|&(_, pos)| {
                masked_distance(slice.row(anchor), slice.row(pos), &codes[anchor], &codes[pos])
                    .expect("rows share a width")
            })
            .collect();
        // Stable log-sum-exp of logits -d.
        let max_logit = d_row.iter().map(|d| -d).fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = d_row.iter().map(|d| (-d - max_logit).exp()).sum();
        value += w * (d_row[k] + max_logit + sum_exp.ln());
        for (j, &(_, pos)) in pairs.iter().enumerate() {
            let soft = (-d_row[j] - max_logit).exp() / sum_exp;
            let coef = if j == k { 1.0 - soft } else { -soft };
            // d(loss_k)/d(d_kj) = delta_jk - soft_j.
            add_distance_grad(&mut grad, slice, codes, anchor, pos, w * coef);
        }
    }

    Ok(LossOutput {
        value,
        grad,
        warnings,
    })
}

/// Sum of per-level losses over all levels of a cascade; the gradient is
/// the column-block concatenation of the per-level gradients.
pub fn total_embedding_loss(
    batch: &EmbeddingBatch,
    assignments: &[LevelAssignment],
    loss: LossKind,
    rotation: usize,
) -> Result<LossOutput> {
    if assignments.len() != batch.levels() {
        return Err(HiqError::Input(format!(
            "{} level assignments for {} levels",
            assignments.len(),
            batch.levels()
        )));
    }
    let d = batch.dims();
    let mut value = 0.0;
    let mut grad = Array2::zeros((batch.n(), d * batch.levels()));
    let mut warnings = Vec::new();
    for (v, assignment) in assignments.iter().enumerate() {
        let slice = batch.level_slice(v + 1);
        let out = match loss {
            LossKind::Triplet { margin } => triplet_semihard_loss(
                slice,
                &assignment.item_codes,
                &assignment.remapped_labels,
                margin,
            )?,
            LossKind::Npairs { l2_reg } => npairs_loss(
                slice,
                &assignment.item_codes,
                &assignment.remapped_labels,
                l2_reg,
                rotation,
            )?,
        };
        value += out.value;
        grad.slice_mut(ndarray::s![.., v * d..(v + 1) * d])
            .assign(&out.grad);
        warnings.extend(out.warnings);
    }
    Ok(LossOutput {
        value,
        grad,
        warnings,
    })
}
