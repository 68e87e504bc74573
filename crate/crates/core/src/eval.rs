//! Frozen-embedding evaluation: k-NN and linear-probe accuracy, positive and
//! negative similarity statistics, and a PCA-to-RGB projection for
//! visualizing patch features.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::labeling::LabelAssignment;
use crate::tensor::{dot, FeatureMatrix};

pub const HISTOGRAM_BINS: usize = 64;

fn check_cols(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<()> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            actual: b.cols(),
        });
    }
    Ok(())
}

fn check_labels(m: &FeatureMatrix, labels: &[u32]) -> Result<()> {
    if m.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            actual: labels.len(),
        });
    }
    Ok(())
}

/// Label predicted by a majority vote over the `k` most similar training
/// rows. Ties go to the smaller summed cosine distance, then the smaller
/// label.
fn knn_predict(query: &[f32], train: &FeatureMatrix, train_labels: &[u32], k: usize) -> u32 {
    let mut sims: Vec<(usize, f64)> = train
        .iter_rows()
        .enumerate()
        .map(|(i, r)| (i, dot(query, r)))
        .collect();
    let k = k.min(sims.len());
    let cmp = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if k < sims.len() {
        sims.select_nth_unstable_by(k - 1, cmp);
        sims.truncate(k);
    }
    // (label, votes, summed distance)
    let mut tally: Vec<(u32, usize, f64)> = Vec::new();
    for (i, s) in sims {
        let label = train_labels[i];
        match tally.iter_mut().find(|t| t.0 == label) {
            Some(t) => {
                t.1 += 1;
                t.2 += 1.0 - s;
            }
            None => tally.push((label, 1, 1.0 - s)),
        }
    }
    tally
        .into_iter()
        .min_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)))
        .map(|t| t.0)
        .unwrap_or(0)
}

/// Cosine k-nearest-neighbor accuracy of `test` against `train`.
pub fn knn_eval(
    train: &FeatureMatrix,
    train_labels: &[u32],
    test: &FeatureMatrix,
    test_labels: &[u32],
    k_neighbors: usize,
) -> Result<f64> {
    check_cols(train, test)?;
    check_labels(train, train_labels)?;
    check_labels(test, test_labels)?;
    if k_neighbors < 1 {
        return Err(Error::InvalidConfig(
            "k_neighbors must be at least 1".into(),
        ));
    }
    if train.rows() == 0 || test.rows() == 0 {
        return Err(Error::TooFewSamples {
            needed: 1,
            actual: 0,
        });
    }
    let correct: usize = (0..test.rows())
        .into_par_iter()
        .map(|i| {
            (knn_predict(test.row(i), train, train_labels, k_neighbors) == test_labels[i]) as usize
        })
        .sum();
    Ok(correct as f64 / test.rows() as f64)
}

/// Multinomial logistic regression trained by full-batch gradient descent on
/// frozen embeddings (zero-initialized, with bias); returns test accuracy.
pub fn linear_probe(
    train: &FeatureMatrix,
    train_labels: &[u32],
    test: &FeatureMatrix,
    test_labels: &[u32],
    epochs: usize,
    lr: f64,
) -> Result<f64> {
    check_cols(train, test)?;
    check_labels(train, train_labels)?;
    check_labels(test, test_labels)?;
    let mut distinct: Vec<u32> = train_labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateLabels);
    }
    if test.rows() == 0 {
        return Err(Error::TooFewSamples {
            needed: 1,
            actual: 0,
        });
    }
    let classes = train_labels
        .iter()
        .chain(test_labels)
        .copied()
        .max()
        .unwrap() as usize
        + 1;
    let d = train.cols();
    let n = train.rows() as f64;
    // weights: classes x (d + 1), last column is the bias
    let stride = d + 1;
    let mut w = vec![0.0f64; classes * stride];
    let logits = |w: &[f64], x: &[f32]| -> Vec<f64> {
        (0..classes)
            .map(|c| {
                let row = &w[c * stride..(c + 1) * stride];
                row[d] + x.iter().zip(row).map(|(&a, b)| a as f64 * b).sum::<f64>()
            })
            .collect()
    };

    for _ in 0..epochs {
        let grads: Vec<Vec<f64>> = (0..train.rows())
            .into_par_iter()
            .map(|i| {
                let x = train.row(i);
                let z = logits(&w, x);
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                let mut g = vec![0.0; classes * stride];
                for c in 0..classes {
                    let p = exps[c] / sum
                        - if c as u32 == train_labels[i] {
                            1.0
                        } else {
                            0.0
                        };
                    let row = &mut g[c * stride..(c + 1) * stride];
                    for (gv, &xv) in row.iter_mut().zip(x) {
                        *gv = p * xv as f64;
                    }
                    row[d] = p;
                }
                g
            })
            .collect();
        let mut total = vec![0.0f64; w.len()];
        for g in &grads {
            for (t, v) in total.iter_mut().zip(g) {
                *t += v;
            }
        }
        for (wv, g) in w.iter_mut().zip(&total) {
            *wv -= lr * g / n;
        }
    }

    let correct = (0..test.rows())
        .filter(|&i| {
            let z = logits(&w, test.row(i));
            let pred = z
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(c, _)| c as u32)
                .unwrap();
            pred == test_labels[i]
        })
        .count();
    Ok(correct as f64 / test.rows() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityStats {
    pub mean_si: f64,
    pub mean_sj: f64,
    pub positive_hist: Vec<u64>,
    pub negative_hist: Vec<u64>,
}

pub fn histogram_bin(cosine: f64) -> usize {
    let t = (cosine + 1.0) / 2.0 * HISTOGRAM_BINS as f64;
    (t.floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

/// Mean cosine to assigned centers (`s_i`) and to every other center
/// (`s_j`), with 64-bin histograms over `[-1, 1]`.
pub fn similarity_stats(
    embeddings: &FeatureMatrix,
    centers: &FeatureMatrix,
    assignment: &LabelAssignment,
) -> Result<SimilarityStats> {
    check_cols(embeddings, centers)?;
    if assignment.len() != embeddings.rows() {
        return Err(Error::DimensionMismatch {
            expected: embeddings.rows(),
            actual: assignment.len(),
        });
    }
    if assignment.k() != centers.rows() {
        return Err(Error::DimensionMismatch {
            expected: centers.rows(),
            actual: assignment.k(),
        });
    }
    let k = centers.rows();
    struct Partial {
        pos_sum: f64,
        pos_n: u64,
        neg_sum: f64,
        neg_n: u64,
        pos_hist: Vec<u64>,
        neg_hist: Vec<u64>,
    }
    let partials: Vec<Partial> = (0..embeddings.rows())
        .into_par_iter()
        .map(|i| {
            let e = embeddings.row(i);
            let mut is_pos = vec![false; k];
            for &c in assignment.positives(i) {
                is_pos[c as usize] = true;
            }
            let mut p = Partial {
                pos_sum: 0.0,
                pos_n: 0,
                neg_sum: 0.0,
                neg_n: 0,
                pos_hist: vec![0; HISTOGRAM_BINS],
                neg_hist: vec![0; HISTOGRAM_BINS],
            };
            for (j, w) in centers.iter_rows().enumerate() {
                let s = dot(e, w);
                if is_pos[j] {
                    p.pos_sum += s;
                    p.pos_n += 1;
                    p.pos_hist[histogram_bin(s)] += 1;
                } else {
                    p.neg_sum += s;
                    p.neg_n += 1;
                    p.neg_hist[histogram_bin(s)] += 1;
                }
            }
            p
        })
        .collect();
    let mut out = SimilarityStats {
        mean_si: 0.0,
        mean_sj: 0.0,
        positive_hist: vec![0; HISTOGRAM_BINS],
        negative_hist: vec![0; HISTOGRAM_BINS],
    };
    let (mut ps, mut pn, mut ns, mut nn) = (0.0, 0u64, 0.0, 0u64);
    for p in partials {
        ps += p.pos_sum;
        pn += p.pos_n;
        ns += p.neg_sum;
        nn += p.neg_n;
        for b in 0..HISTOGRAM_BINS {
            out.positive_hist[b] += p.pos_hist[b];
            out.negative_hist[b] += p.neg_hist[b];
        }
    }
    out.mean_si = if pn == 0 { f64::NAN } else { ps / pn as f64 };
    out.mean_sj = if nn == 0 { f64::NAN } else { ns / nn as f64 };
    Ok(out)
}

/// Evaluation summary written as `key=value` lines plus a histogram CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub knn_accuracy: Option<f64>,
    pub probe_accuracy: Option<f64>,
    pub stats: Option<SimilarityStats>,
}

impl EvalReport {
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                let _ = writeln!(out, "{k}={v}");
            }
        };
        put("knn_accuracy", self.knn_accuracy);
        put("probe_accuracy", self.probe_accuracy);
        put("mean_si", self.stats.as_ref().map(|s| s.mean_si));
        put("mean_sj", self.stats.as_ref().map(|s| s.mean_sj));
        if let Some(s) = &self.stats {
            let _ = writeln!(
                out,
                "positive_pairs={}",
                s.positive_hist.iter().sum::<u64>()
            );
            let _ = writeln!(
                out,
                "negative_pairs={}",
                s.negative_hist.iter().sum::<u64>()
            );
        }
        out
    }

    /// `bin_low,bin_high,pos_count,neg_count` rows; `None` without stats.
    pub fn histogram_csv(&self) -> Option<String> {
        let s = self.stats.as_ref()?;
        let mut out = String::from("bin_low,bin_high,pos_count,neg_count\n");
        let width = 2.0 / HISTOGRAM_BINS as f64;
        for b in 0..HISTOGRAM_BINS {
            let lo = -1.0 + b as f64 * width;
            let _ = writeln!(
                out,
                "{},{},{},{}",
                lo,
                lo + width,
                s.positive_hist[b],
                s.negative_hist[b]
            );
        }
        Some(out)
    }
}

/// Per-row colors from the top three principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaRgb {
    pub rgb: Vec<[u8; 3]>,
    /// First-component score above zero.
    pub mask: Vec<bool>,
    /// Number of components with non-negligible variance, at most 3. Channels
    /// past the rank are filled with 128.
    pub rank: usize,
    /// Principal directions actually used, `rank x d`.
    pub components: Vec<Vec<f64>>,
}

impl PcaRgb {
    pub fn is_rank_deficient(&self) -> bool {
        self.rank < 3
    }
}

/// Projects rows onto their top three principal components and min-max maps
/// each component to `[0, 255]`.
///
/// Eigenvector signs are fixed so that the largest-magnitude coordinate is
/// positive (lowest index on ties).
pub fn pca_rgb(features: &FeatureMatrix) -> Result<PcaRgb> {
    let m = features.rows();
    let d = features.cols();
    if m < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            actual: m,
        });
    }
    let mut mean = vec![0.0f64; d];
    for r in features.iter_rows() {
        for (a, &v) in mean.iter_mut().zip(r) {
            *a += v as f64;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    let centered: Vec<Vec<f64>> = features
        .iter_rows()
        .map(|r| r.iter().zip(&mean).map(|(&v, mu)| v as f64 - mu).collect())
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in &centered {
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] += r[a] * r[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / m as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let top = order.first().map_or(0.0, |&i| eig.eigenvalues[i]).max(0.0);
    let rank = order
        .iter()
        .take(3)
        .take_while(|&&i| top > 0.0 && eig.eigenvalues[i] > 1e-10 * top)
        .count();

    let components: Vec<Vec<f64>> = order[..rank]
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let pivot = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map(|(j, _)| j)
                .unwrap();
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();

    let scores: Vec<Vec<f64>> = components
        .iter()
        .map(|c| {
            centered
                .iter()
                .map(|r| r.iter().zip(c).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let mut rgb = vec![[128u8; 3]; m];
    for (ch, s) in scores.iter().enumerate() {
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (px, &v) in rgb.iter_mut().zip(s) {
            px[ch] = if hi > lo {
                ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                128
            };
        }
    }
    let mask = match scores.first() {
        Some(s) => s.iter().map(|&v| v > 0.0).collect(),
        None => vec![false; m],
    };
    Ok(PcaRgb {
        rgb,
        mask,
        rank,
        components,
    })
}
