//! Seeded synthetic datasets.
//!
//! The multi-concept benchmark places `concepts` random unit directions in
//! `dim` dimensions; every sample is a normalized blend of one or two of them
//! plus isotropic Gaussian noise. The dominant (largest-weight) direction is
//! the ground-truth label.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{l2_normalize_f64, FeatureMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct MultiConceptConfig {
    pub concepts: usize,
    pub dim: usize,
    pub samples: usize,
    /// Probability that a sample blends a second direction.
    pub mix_probability: f64,
    /// Secondary weight drawn uniformly from this range; the dominant weight is 1.
    pub secondary_weight: (f64, f64),
    /// Per-coordinate noise standard deviation, scaled by `1/sqrt(dim)`.
    pub noise: f64,
    pub seed: u64,
}

impl Default for MultiConceptConfig {
    fn default() -> Self {
        Self {
            concepts: 20,
            dim: 16,
            samples: 2000,
            mix_probability: 0.5,
            secondary_weight: (0.3, 0.7),
            noise: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub features: FeatureMatrix,
    /// Dominant concept per sample.
    pub labels: Vec<u32>,
    /// Every concept blended into each sample, dominant first.
    pub concepts: Vec<Vec<u32>>,
    pub directions: FeatureMatrix,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Splits into the first `n_train` samples and the rest.
    pub fn split(&self, n_train: usize) -> Result<(SyntheticDataset, SyntheticDataset)> {
        if n_train > self.len() {
            return Err(Error::TooFewSamples {
                needed: n_train,
                actual: self.len(),
            });
        }
        let part = |range: std::ops::Range<usize>| -> Result<SyntheticDataset> {
            let idx: Vec<usize> = range.collect();
            Ok(SyntheticDataset {
                features: self.features.select_rows(&idx),
                labels: idx.iter().map(|&i| self.labels[i]).collect(),
                concepts: idx.iter().map(|&i| self.concepts[i].clone()).collect(),
                directions: self.directions.clone(),
            })
        };
        Ok((part(0..n_train)?, part(n_train..self.len())?))
    }
}

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(u) = l2_normalize_f64(&v) {
            return u;
        }
    }
}

pub fn multi_concept(cfg: &MultiConceptConfig) -> Result<SyntheticDataset> {
    if cfg.concepts < 2 || cfg.dim < 1 {
        return Err(Error::InvalidConfig(
            "synthetic benchmark needs at least 2 concepts and 1 dimension".into(),
        ));
    }
    let (lo, hi) = cfg.secondary_weight;
    if !(0.0..=hi).contains(&lo) || hi >= 1.0 || !(0.0..=1.0).contains(&cfg.mix_probability) {
        return Err(Error::InvalidConfig(
            "secondary weight must lie in [0, 1) and mix probability in [0, 1]".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let directions: Vec<Vec<f64>> = (0..cfg.concepts)
        .map(|_| gaussian_unit(&mut rng, cfg.dim))
        .collect();
    let sigma = cfg.noise / (cfg.dim as f64).sqrt();

    let mut rows = Vec::with_capacity(cfg.samples);
    let mut labels = Vec::with_capacity(cfg.samples);
    let mut concepts = Vec::with_capacity(cfg.samples);
    while rows.len() < cfg.samples {
        let first = rng.random_range(0..cfg.concepts);
        let mut x = directions[first].clone();
        let mut used = vec![first as u32];
        if rng.random_bool(cfg.mix_probability) {
            let mut second = rng.random_range(0..cfg.concepts - 1);
            if second >= first {
                second += 1;
            }
            let w = if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            };
            for (a, b) in x.iter_mut().zip(&directions[second]) {
                *a += w * b;
            }
            used.push(second as u32);
        }
        for a in x.iter_mut() {
            *a += sigma * rng.sample::<f64, _>(StandardNormal);
        }
        if let Ok(u) = l2_normalize_f64(&x) {
            rows.push(u);
            labels.push(first as u32);
            concepts.push(used);
        }
    }
    Ok(SyntheticDataset {
        features: FeatureMatrix::from_f64(cfg.samples, cfg.dim, &rows.concat())?
            .normalize_rows()?,
        labels,
        concepts,
        directions: FeatureMatrix::from_f64(cfg.concepts, cfg.dim, &directions.concat())?
            .normalize_rows()?,
    })
}

/// Two classes around opposite poles of the first axis, jittered in the
/// remaining coordinates so that every sample keeps its class sign.
pub fn two_class_separable(samples: usize, dim: usize, seed: u64) -> Result<SyntheticDataset> {
    if dim < 2 {
        return Err(Error::InvalidConfig("separable data needs dim >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(samples * dim);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let class = (i % 2) as u32;
        let mut x = vec![0.0f64; dim];
        x[0] = if class == 0 { 1.0 } else { -1.0 };
        for v in x.iter_mut().skip(1) {
            *v = 0.2 * rng.sample::<f64, _>(StandardNormal) / (dim as f64).sqrt();
        }
        rows.extend(l2_normalize_f64(&x)?);
        labels.push(class);
    }
    let mut dirs = vec![0.0f64; 2 * dim];
    dirs[0] = 1.0;
    dirs[dim] = -1.0;
    Ok(SyntheticDataset {
        features: FeatureMatrix::from_f64(samples, dim, &rows)?.normalize_rows()?,
        concepts: labels.iter().map(|&l| vec![l]).collect(),
        labels,
        directions: FeatureMatrix::from_f64(2, dim, &dirs)?.normalize_rows()?,
    })
}
