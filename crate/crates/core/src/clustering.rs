//! Spherical k-means: the offline clustering pass that produces class
//! prototypes and single pseudo-labels.
//!
//! Centroids live on the unit sphere. For unit vectors
//! `||e - w||^2 = 2 - 2 e.w`, so nearest-centroid assignment is an argmax
//! over cosine similarity. The update step takes the normalized mean of each
//! cluster's members, which maximizes the summed cosine for a fixed
//! assignment; together the two steps never increase the mean squared
//! distance.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{dot, l2_normalize_f64, FeatureMatrix, ZERO_NORM_CUTOFF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMethod {
    /// `k` distinct samples drawn uniformly without replacement.
    Random,
    /// D^2-weighted seeding.
    #[default]
    KMeansPlusPlus,
}

impl FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Self::Random),
            "kmeanspp" | "kmeans++" => Ok(Self::KMeansPlusPlus),
            other => Err(Error::InvalidConfig(format!(
                "unknown init method `{other}`"
            ))),
        }
    }
}

impl fmt::Display for InitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::KMeansPlusPlus => "kmeanspp",
        })
    }
}

/// Unit-norm class prototypes plus fitting metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    pub centroids: FeatureMatrix,
    pub seed: u64,
    pub iterations_run: usize,
    /// Objective of the final assignment; `None` until fitted.
    pub final_objective: Option<f64>,
}

impl CentroidSet {
    /// Wraps an existing matrix of prototypes (e.g. loaded from disk).
    pub fn from_matrix(centroids: FeatureMatrix) -> Result<Self> {
        let centroids = if centroids.is_normalized() {
            centroids
        } else {
            centroids.normalize_rows()?
        };
        if centroids.rows() == 0 || centroids.cols() == 0 {
            return Err(Error::InvalidConfig(
                "centroid set must be non-empty".into(),
            ));
        }
        Ok(Self {
            centroids,
            seed: 0,
            iterations_run: 0,
            final_objective: None,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }
}

/// One label per sample and the mean squared distance to the chosen centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct HardAssignment {
    pub labels: Vec<u32>,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the objective decreases by less than this (absolute).
    pub tol: f64,
    pub seed: u64,
    pub method: InitMethod,
}

impl KMeansParams {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
            method: InitMethod::KMeansPlusPlus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub objective: f64,
    /// The update preceding this entry re-seeded at least one empty cluster.
    pub after_repair: bool,
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centroids: CentroidSet,
    pub assignment: HardAssignment,
    /// Objective after initialization, then after every update.
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone)]
pub struct CentroidUpdate {
    pub centroids: CentroidSet,
    /// Clusters that were empty (or whose members summed to zero) and got
    /// re-seeded.
    pub repaired: Vec<usize>,
}

fn require_normalized(features: &FeatureMatrix) -> Result<FeatureMatrix> {
    if features.is_normalized() {
        Ok(features.clone())
    } else {
        let mut f = features.clone();
        f.set_normalized()?;
        Ok(f)
    }
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

pub fn kmeans_init(
    features: &FeatureMatrix,
    k: usize,
    seed: u64,
    method: InitMethod,
) -> Result<CentroidSet> {
    let n = features.rows();
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let features = require_normalized(features)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = match method {
        InitMethod::Random => index::sample(&mut rng, n, k).into_vec(),
        InitMethod::KMeansPlusPlus => plus_plus_seeds(&features, k, &mut rng),
    };
    let mut centroids = features.select_rows(&chosen);
    centroids.set_normalized()?;
    Ok(CentroidSet {
        centroids,
        seed,
        iterations_run: 0,
        final_objective: None,
    })
}

fn plus_plus_seeds(features: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = features.rows();
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(features.row(i), features.row(first)))
        .collect();
    while chosen.len() < k {
        let total: f64 = (0..n).filter(|&i| !taken[i]).map(|i| d2[i]).sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for i in (0..n).filter(|&i| !taken[i]) {
                acc += d2[i];
                if d2[i] > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just past the final partial sum
            pick.unwrap_or_else(|| (0..n).rev().find(|&i| !taken[i] && d2[i] > 0.0).unwrap())
        } else {
            // every remaining sample duplicates a chosen one
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        taken[next] = true;
        for i in 0..n {
            let d = squared_distance(features.row(i), features.row(next));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    chosen
}

/// Index of the most similar row of `centers` (lowest index on ties) and the
/// similarity itself.
pub(crate) fn nearest_center(e: &[f32], centers: &FeatureMatrix) -> (usize, f64) {
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (j, w) in centers.iter_rows().enumerate() {
        let s = dot(e, w);
        if s > best_sim {
            best_sim = s;
            best = j;
        }
    }
    (best, best_sim)
}

/// Nearest-centroid assignment by maximum cosine similarity.
pub fn kmeans_assign(features: &FeatureMatrix, centroids: &CentroidSet) -> Result<HardAssignment> {
    assign_to_centers(features, &centroids.centroids)
}

pub fn assign_to_centers(
    features: &FeatureMatrix,
    centers: &FeatureMatrix,
) -> Result<HardAssignment> {
    if features.cols() != centers.cols() {
        return Err(Error::DimensionMismatch {
            expected: centers.cols(),
            actual: features.cols(),
        });
    }
    let per_sample: Vec<(u32, f64)> = (0..features.rows())
        .into_par_iter()
        .map(|i| {
            let e = features.row(i);
            let (j, _) = nearest_center(e, centers);
            (j as u32, squared_distance(e, centers.row(j)))
        })
        .collect();
    let n = per_sample.len().max(1) as f64;
    let objective = per_sample.iter().map(|(_, d)| d).sum::<f64>() / n;
    Ok(HardAssignment {
        labels: per_sample.into_iter().map(|(l, _)| l).collect(),
        objective,
    })
}

/// Recomputes each centroid as the normalized mean of its members.
///
/// Empty clusters are re-seeded with the sample farthest from its own
/// (freshly updated) centroid, taking distinct samples in order of
/// decreasing distance, lowest index first on ties.
pub fn kmeans_update(
    features: &FeatureMatrix,
    assignment: &HardAssignment,
    k: usize,
) -> Result<CentroidUpdate> {
    let n = features.rows();
    let d = features.cols();
    if assignment.labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: assignment.labels.len(),
        });
    }
    if let Some(&bad) = assignment.labels.iter().find(|&&l| l as usize >= k) {
        return Err(Error::BadLabel {
            label: bad as usize,
            classes: k,
        });
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in assignment.labels.iter().enumerate() {
        members[l as usize].push(i);
    }
    // one fixed-order f64 reduction per cluster
    let means: Vec<Option<Vec<f64>>> = members
        .par_iter()
        .map(|m| {
            if m.is_empty() {
                return None;
            }
            let mut acc = vec![0.0f64; d];
            for &i in m {
                for (a, &v) in acc.iter_mut().zip(features.row(i)) {
                    *a += v as f64;
                }
            }
            let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < ZERO_NORM_CUTOFF {
                None
            } else {
                l2_normalize_f64(&acc).ok()
            }
        })
        .collect();

    let repaired: Vec<usize> = (0..k).filter(|&j| means[j].is_none()).collect();
    let mut rows: Vec<Vec<f32>> = means
        .iter()
        .map(|m| {
            m.as_ref()
                .map_or_else(Vec::new, |v| v.iter().map(|&x| x as f32).collect())
        })
        .collect();

    if !repaired.is_empty() {
        // distance of each sample to its own centroid; samples whose own
        // cluster was itself degenerate count as infinitely far
        let mut order: Vec<(usize, f64)> = (0..n)
            .map(|i| {
                let own = &rows[assignment.labels[i] as usize];
                let dist = if own.is_empty() {
                    f64::INFINITY
                } else {
                    squared_distance(features.row(i), own)
                };
                (i, dist)
            })
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (slot, &j) in repaired.iter().enumerate() {
            let (sample, _) = order[slot % n];
            rows[j] = features.row(sample).to_vec();
        }
    }

    let mut centroids = FeatureMatrix::from_rows(&rows)?;
    centroids.set_normalized()?;
    Ok(CentroidUpdate {
        centroids: CentroidSet {
            centroids,
            seed: 0,
            iterations_run: 0,
            final_objective: None,
        },
        repaired,
    })
}

/// Alternates assignment and update from a seeded initialization.
pub fn kmeans_fit(features: &FeatureMatrix, params: &KMeansParams) -> Result<KMeansFit> {
    if params.max_iters == 0 {
        return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
    }
    if !(params.tol >= 0.0) {
        return Err(Error::InvalidConfig("tol must be non-negative".into()));
    }
    let features = require_normalized(features)?;
    let mut centroids = kmeans_init(&features, params.k, params.seed, params.method)?;
    let mut assignment = kmeans_assign(&features, &centroids)?;
    let mut history = vec![HistoryEntry {
        objective: assignment.objective,
        after_repair: false,
    }];

    let mut iterations_run = 0;
    for _ in 0..params.max_iters {
        let update = kmeans_update(&features, &assignment, params.k)?;
        centroids = update.centroids;
        let next = kmeans_assign(&features, &centroids)?;
        let after_repair = !update.repaired.is_empty();
        history.push(HistoryEntry {
            objective: next.objective,
            after_repair,
        });
        let decrease = assignment.objective - next.objective;
        assignment = next;
        iterations_run += 1;
        if !after_repair && decrease < params.tol {
            break;
        }
    }

    centroids.seed = params.seed;
    centroids.iterations_run = iterations_run;
    centroids.final_objective = Some(assignment.objective);
    Ok(KMeansFit {
        centroids,
        assignment,
        history,
    })
}
