//! Negative class sampling.
//!
//! Each step draws one set of negative classes for the whole batch, uniformly
//! without replacement from the classes that are not a positive of any batch
//! sample. The active class set is the union of those negatives and every
//! batch positive.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SampledClassSet {
    /// Sorted, distinct union of batch positives and sampled negatives.
    pub class_ids: Vec<u32>,
    /// Sorted batch positives.
    pub positives: Vec<u32>,
    /// Sorted sampled negatives.
    pub negatives: Vec<u32>,
    pub ratio: f64,
    /// Generator position before the draw.
    pub rng_word_pos: u128,
}

impl SampledClassSet {
    /// Column of `class` inside `class_ids`.
    pub fn column_of(&self, class: u32) -> Option<usize> {
        self.class_ids.binary_search(&class).ok()
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    /// Row-major `b x len()` mask: entry `(i, c)` is set when active column
    /// `c` is a positive of sample `i`.
    pub fn positive_mask<L: AsRef<[u32]>>(&self, batch: &[L]) -> Vec<bool> {
        let c = self.len();
        let mut mask = vec![false; batch.len() * c];
        for (i, list) in batch.iter().enumerate() {
            for &p in list.as_ref() {
                if let Some(col) = self.column_of(p) {
                    mask[i * c + col] = true;
                }
            }
        }
        mask
    }
}

/// Number of negatives drawn from `available` candidates at ratio `r`.
pub fn negative_count(available: usize, r: f64) -> usize {
    if available == 0 {
        return 0;
    }
    if r >= 1.0 {
        return available;
    }
    ((r * available as f64).floor() as usize).clamp(1, available)
}

/// Seeded class sampler. Distinct `stream` values give independent
/// sequences for the same seed.
#[derive(Debug, Clone)]
pub struct ClassSampler {
    rng: ChaCha8Rng,
}

impl ClassSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn sample_classes(
        &mut self,
        k: usize,
        batch_positives: &[u32],
        r: f64,
    ) -> Result<SampledClassSet> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::BadRatio(r));
        }
        let mut positives = batch_positives.to_vec();
        positives.sort_unstable();
        positives.dedup();
        if let Some(&bad) = positives.iter().find(|&&p| p as usize >= k) {
            return Err(Error::BadLabel {
                label: bad as usize,
                classes: k,
            });
        }

        let rng_word_pos = self.rng.get_word_pos();
        let mut is_positive = vec![false; k];
        for &p in &positives {
            is_positive[p as usize] = true;
        }
        let candidates: Vec<u32> = (0..k as u32)
            .filter(|&c| !is_positive[c as usize])
            .collect();
        let count = negative_count(candidates.len(), r);
        let mut negatives: Vec<u32> = if count == candidates.len() {
            candidates
        } else {
            index::sample(&mut self.rng, candidates.len(), count)
                .into_iter()
                .map(|i| candidates[i])
                .collect()
        };
        negatives.sort_unstable();

        let mut class_ids: Vec<u32> = positives.iter().chain(&negatives).copied().collect();
        class_ids.sort_unstable();
        Ok(SampledClassSet {
            class_ids,
            positives,
            negatives,
            ratio: r,
            rng_word_pos,
        })
    }
}
