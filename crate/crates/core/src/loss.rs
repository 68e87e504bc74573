//! Cluster-discrimination losses over cosine scores.
//!
//! Three variants share one forward/backward path:
//!
//! * `CD`: softmax cross-entropy against the primary pseudo-label,
//!   `log(1 + sum_{j != y} exp(s_j - s_y))`.
//! * `MLC`: one coupled term over every positive/negative pair,
//!   `log(1 + sum_j exp(s_j) * sum_i exp(-s_i))`. Adding a constant to every
//!   score leaves it unchanged.
//! * `MLCD`: the MLC argument plus standalone positive and negative sums,
//!   which factors into `log(1 + sum_i exp(-s_i)) + log(1 + sum_j exp(s_j))`.
//!   The two terms pull positives up and negatives down in absolute terms,
//!   not just relative to each other.
//!
//! Every log-sum-exp is evaluated with max subtraction, so scales up to 256
//! are safe.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{dot_f64, FeatureMatrix, ScoreMatrix};

/// Margin used for positive classes unless configured otherwise.
pub const DEFAULT_MARGIN: f64 = 0.3;
/// Logit scale applied after the margin.
pub const DEFAULT_SCALE: f64 = 32.0;
/// Default fraction of negative classes sampled per step.
pub const DEFAULT_RATIO: f64 = 0.1;

// Floor on sin(theta) in the margin derivative, which diverges at s = 1.
const SIN_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossVariant {
    Cd,
    Mlc,
    #[default]
    Mlcd,
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CD" => Ok(Self::Cd),
            "MLC" => Ok(Self::Mlc),
            "MLCD" => Ok(Self::Mlcd),
            other => Err(Error::InvalidConfig(format!(
                "unknown loss variant `{other}`"
            ))),
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cd => "CD",
            Self::Mlc => "MLC",
            Self::Mlcd => "MLCD",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub variant: LossVariant,
    /// Additive angular margin on positives, radians.
    pub margin: f64,
    /// Logit scale.
    pub scale: f64,
    /// Negative sampling ratio.
    pub ratio: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::Mlcd,
            margin: DEFAULT_MARGIN,
            scale: DEFAULT_SCALE,
            ratio: DEFAULT_RATIO,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.margin) {
            return Err(Error::InvalidConfig(format!(
                "margin {} outside [0, 0.5]",
                self.margin
            )));
        }
        if !(self.scale > 0.0 && self.scale <= 256.0) {
            return Err(Error::InvalidConfig(format!(
                "scale {} outside (0, 256]",
                self.scale
            )));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::BadRatio(self.ratio));
        }
        Ok(())
    }
}

/// Loss value and score gradient for one row.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad_scores: Vec<f64>,
    /// Mean of the positive entries of the input row.
    pub mean_si: f64,
    /// Mean of the negative entries (NaN when there are none).
    pub mean_sj: f64,
}

fn softplus(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x > 0.0 {
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

/// `log(sum exp(x))` over the selected entries; `-inf` when none are selected.
fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// `cos(arccos(s) + m)`, or the linear fallback `s - m sin(m)` once
/// `arccos(s) + m` would pass pi.
pub fn margin_value(s: f64, m: f64) -> f64 {
    if m == 0.0 {
        return s;
    }
    let s = s.clamp(-1.0, 1.0);
    if s > (PI - m).cos() {
        let sin_theta = (1.0 - s * s).max(0.0).sqrt();
        s * m.cos() - sin_theta * m.sin()
    } else {
        s - m * m.sin()
    }
}

/// `d margin_value / d s`: `sin(theta + m) / sin(theta)` on the angular
/// branch, 1 on the fallback branch.
pub fn margin_derivative(s: f64, m: f64) -> f64 {
    if m == 0.0 {
        return 1.0;
    }
    let s = s.clamp(-1.0, 1.0);
    if s > (PI - m).cos() {
        let sin_theta = (1.0 - s * s).max(0.0).sqrt().max(SIN_FLOOR);
        m.cos() + m.sin() * s / sin_theta
    } else {
        1.0
    }
}

/// Applies the additive angular margin to the masked (positive) entries.
pub fn apply_margin(scores: &ScoreMatrix, positive_mask: &[bool], m: f64) -> Result<ScoreMatrix> {
    if positive_mask.len() != scores.data.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.data.len(),
            actual: positive_mask.len(),
        });
    }
    let data = scores
        .data
        .iter()
        .zip(positive_mask)
        .map(|(&s, &pos)| {
            if pos {
                margin_value(s as f64, m) as f32
            } else {
                s
            }
        })
        .collect();
    Ok(ScoreMatrix {
        rows: scores.rows,
        cols: scores.cols,
        data,
    })
}

/// Softmax cross-entropy against `label`.
pub fn loss_cd(scores: &[f64], label: usize) -> Result<LossOutput> {
    let c = scores.len();
    if label >= c {
        return Err(Error::BadLabel { label, classes: c });
    }
    let target = scores[label];
    let others = scores
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label)
        .map(|(_, &s)| s - target);
    let value = softplus(log_sum_exp(others));

    let lse = log_sum_exp(scores.iter().copied());
    let grad_scores = scores
        .iter()
        .enumerate()
        .map(|(j, &s)| (s - lse).exp() - if j == label { 1.0 } else { 0.0 })
        .collect();
    Ok(LossOutput {
        value,
        grad_scores,
        mean_si: target,
        mean_sj: mean(
            scores
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != label)
                .map(|(_, &s)| s),
        ),
    })
}

fn split<'a>(
    scores: &'a [f64],
    positive_mask: &'a [bool],
) -> Result<(
    impl Iterator<Item = f64> + Clone + 'a,
    impl Iterator<Item = f64> + Clone + 'a,
)> {
    if scores.len() != positive_mask.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: positive_mask.len(),
        });
    }
    if !positive_mask.iter().any(|&p| p) {
        return Err(Error::EmptyPositives);
    }
    let pos = scores
        .iter()
        .zip(positive_mask)
        .filter(|(_, &p)| p)
        .map(|(&s, _)| s);
    let neg = scores
        .iter()
        .zip(positive_mask)
        .filter(|(_, &p)| !p)
        .map(|(&s, _)| s);
    Ok((pos, neg))
}

/// Coupled multi-label loss `log(1 + sum_neg exp(s_j) * sum_pos exp(-s_i))`.
pub fn loss_mlc(scores: &[f64], positive_mask: &[bool]) -> Result<LossOutput> {
    let (pos, neg) = split(scores, positive_mask)?;
    if neg.clone().next().is_none() {
        return Err(Error::EmptyNegatives);
    }
    let lse_pos = log_sum_exp(pos.clone().map(|s| -s));
    let lse_neg = log_sum_exp(neg.clone());
    let z = lse_pos + lse_neg;
    let value = softplus(z);
    let weight = sigmoid(z);
    let grad_scores = scores
        .iter()
        .zip(positive_mask)
        .map(|(&s, &p)| {
            if p {
                -weight * (-s - lse_pos).exp()
            } else {
                weight * (s - lse_neg).exp()
            }
        })
        .collect();
    Ok(LossOutput {
        value,
        grad_scores,
        mean_si: mean(pos),
        mean_sj: mean(neg),
    })
}

/// Separated multi-label loss
/// `log(1 + sum_pos exp(-s_i)) + log(1 + sum_neg exp(s_j))`.
/// The negative term vanishes when the row has no negatives.
pub fn loss_mlcd(scores: &[f64], positive_mask: &[bool]) -> Result<LossOutput> {
    let (pos, neg) = split(scores, positive_mask)?;
    let lse_pos = log_sum_exp(pos.clone().map(|s| -s));
    let lse_neg = log_sum_exp(neg.clone());
    let value = softplus(lse_pos) + softplus(lse_neg);
    let w_pos = sigmoid(lse_pos);
    let w_neg = sigmoid(lse_neg);
    let grad_scores = scores
        .iter()
        .zip(positive_mask)
        .map(|(&s, &p)| {
            if p {
                -w_pos * (-s - lse_pos).exp()
            } else {
                w_neg * (s - lse_neg).exp()
            }
        })
        .collect();
    Ok(LossOutput {
        value,
        grad_scores,
        mean_si: mean(pos),
        mean_sj: mean(neg),
    })
}

/// Batch loss with gradients for embeddings, active centers and raw cosines.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    /// Mean per-sample loss.
    pub value: f64,
    /// `b x d`, w.r.t. the embedding rows as given.
    pub grad_embeddings: Vec<f64>,
    /// `c x d`, w.r.t. the active center rows as given.
    pub grad_centers: Vec<f64>,
    /// `b x c`, w.r.t. the raw cosine scores (before margin and scale).
    pub grad_scores: Vec<f64>,
    /// Mean raw cosine over positive pairs.
    pub mean_si: f64,
    /// Mean raw cosine over negative pairs (NaN when there are none).
    pub mean_sj: f64,
    /// Per-sample loss values.
    pub per_sample: Vec<f64>,
}

/// Which active columns count as positives for the loss: the whole target
/// list, or only its first entry for `CD`.
fn loss_positives(variant: LossVariant, targets: &[usize]) -> &[usize] {
    match variant {
        LossVariant::Cd => &targets[..1],
        LossVariant::Mlc | LossVariant::Mlcd => targets,
    }
}

/// Forward and backward pass over a batch of normalized embeddings against
/// the active (sampled) centers.
///
/// `targets[i]` lists the active-column indices of sample `i`'s positives in
/// label order; `CD` uses only the first. Columns that are not a positive of
/// sample `i` act as its negatives.
pub fn loss_forward_backward(
    embeddings: &FeatureMatrix,
    centers: &FeatureMatrix,
    targets: &[Vec<usize>],
    config: &LossConfig,
) -> Result<BatchLoss> {
    if !embeddings.is_normalized() || !centers.is_normalized() {
        return Err(Error::InvalidConfig(
            "loss inputs must be flagged normalized".into(),
        ));
    }
    if embeddings.cols() != centers.cols() {
        return Err(Error::DimensionMismatch {
            expected: centers.cols(),
            actual: embeddings.cols(),
        });
    }
    if targets.len() != embeddings.rows() {
        return Err(Error::DimensionMismatch {
            expected: embeddings.rows(),
            actual: targets.len(),
        });
    }
    loss_forward_backward_f64(
        &embeddings.to_f64(),
        &centers.to_f64(),
        embeddings.cols(),
        targets,
        config,
    )
}

/// `f64` path of [`loss_forward_backward`]. Cosines are plain dot products
/// of the given rows; no normalization is checked or applied, which lets
/// finite-difference checks perturb individual coordinates.
pub fn loss_forward_backward_f64(
    embeddings: &[f64],
    centers: &[f64],
    dim: usize,
    targets: &[Vec<usize>],
    config: &LossConfig,
) -> Result<BatchLoss> {
    config.validate()?;
    if dim == 0 || embeddings.len() % dim != 0 || centers.len() % dim != 0 {
        return Err(Error::InvalidConfig(
            "matrix length is not a multiple of dim".into(),
        ));
    }
    let b = embeddings.len() / dim;
    let c = centers.len() / dim;
    if targets.len() != b {
        return Err(Error::DimensionMismatch {
            expected: b,
            actual: targets.len(),
        });
    }
    if b == 0 {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    for t in targets {
        if t.is_empty() {
            return Err(Error::EmptyPositives);
        }
        for (pos, &col) in t.iter().enumerate() {
            if col >= c {
                return Err(Error::BadLabel {
                    label: col,
                    classes: c,
                });
            }
            if t[..pos].contains(&col) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate target column {col}"
                )));
            }
        }
    }

    let gamma = config.scale;
    let m = config.margin;
    let inv_b = 1.0 / b as f64;

    struct Row {
        value: f64,
        grad_cos: Vec<f64>,
        pos_sum: f64,
        pos_n: usize,
        neg_sum: f64,
        neg_n: usize,
    }

    let rows: Vec<Result<Row>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let e = &embeddings[i * dim..(i + 1) * dim];
            let cosines: Vec<f64> = (0..c)
                .map(|j| dot_f64(e, &centers[j * dim..(j + 1) * dim]))
                .collect();
            let positives = loss_positives(config.variant, &targets[i]);
            let mut mask = vec![false; c];
            for &p in positives {
                mask[p] = true;
            }
            let logits: Vec<f64> = cosines
                .iter()
                .zip(&mask)
                .map(|(&s, &p)| gamma * if p { margin_value(s, m) } else { s })
                .collect();
            let out = match config.variant {
                LossVariant::Cd => loss_cd(&logits, positives[0])?,
                LossVariant::Mlc => loss_mlc(&logits, &mask)?,
                LossVariant::Mlcd => loss_mlcd(&logits, &mask)?,
            };
            let grad_cos = out
                .grad_scores
                .iter()
                .zip(&cosines)
                .zip(&mask)
                .map(|((&g, &s), &p)| {
                    let chain = if p { margin_derivative(s, m) } else { 1.0 };
                    g * gamma * chain * inv_b
                })
                .collect();
            let (mut pos_sum, mut pos_n, mut neg_sum, mut neg_n) = (0.0, 0, 0.0, 0);
            for (&s, &p) in cosines.iter().zip(&mask) {
                if p {
                    pos_sum += s;
                    pos_n += 1;
                } else {
                    neg_sum += s;
                    neg_n += 1;
                }
            }
            Ok(Row {
                value: out.value,
                grad_cos,
                pos_sum,
                pos_n,
                neg_sum,
                neg_n,
            })
        })
        .collect();
    let rows: Vec<Row> = rows.into_iter().collect::<Result<_>>()?;

    let per_sample: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let value = per_sample.iter().sum::<f64>() * inv_b;

    let mut grad_scores = Vec::with_capacity(b * c);
    for r in &rows {
        grad_scores.extend_from_slice(&r.grad_cos);
    }

    let mut grad_embeddings = vec![0.0; b * dim];
    grad_embeddings
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(i, out)| {
            for j in 0..c {
                let g = grad_scores[i * c + j];
                for (o, w) in out.iter_mut().zip(&centers[j * dim..(j + 1) * dim]) {
                    *o += g * w;
                }
            }
        });
    let mut grad_centers = vec![0.0; c * dim];
    grad_centers
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(j, out)| {
            for i in 0..b {
                let g = grad_scores[i * c + j];
                for (o, e) in out.iter_mut().zip(&embeddings[i * dim..(i + 1) * dim]) {
                    *o += g * e;
                }
            }
        });

    let (ps, pn, ns, nn) = rows.iter().fold((0.0, 0, 0.0, 0), |acc, r| {
        (
            acc.0 + r.pos_sum,
            acc.1 + r.pos_n,
            acc.2 + r.neg_sum,
            acc.3 + r.neg_n,
        )
    });
    Ok(BatchLoss {
        value,
        grad_embeddings,
        grad_centers,
        grad_scores,
        mean_si: if pn == 0 { f64::NAN } else { ps / pn as f64 },
        mean_sj: if nn == 0 { f64::NAN } else { ns / nn as f64 },
        per_sample,
    })
}
