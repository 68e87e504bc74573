//! Negative class sampling: one shared draw per batch, batch positives always
//! kept, and the empirical inclusion rate of each class.
//!
//! Usage: cargo run --example negative_sampling

use mlcd::sampler::{negative_count, ClassSampler};

fn main() -> mlcd::error::Result<()> {
    let k = 40;
    let positives = [3u32, 17, 17, 28];
    let mut sampler = ClassSampler::new(2024);
    for r in [0.1, 0.25, 0.5, 1.0] {
        let s = sampler.sample_classes(k, &positives, r)?;
        println!(
            "r={r:<5} negatives={:>2} (expected {:>2}) active={:>2}  {:?}",
            s.negatives.len(),
            negative_count(k - s.positives.len(), r),
            s.len(),
            s.negatives
        );
    }

    // Every non-positive class should be drawn with probability count/avail.
    let draws = 10_000;
    let r = 0.25;
    let avail = k - 3;
    let mut hits = vec![0u32; k];
    for _ in 0..draws {
        for c in sampler.sample_classes(k, &positives, r)?.negatives {
            hits[c as usize] += 1;
        }
    }
    let p = negative_count(avail, r) as f64 / avail as f64;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    let worst = hits
        .iter()
        .enumerate()
        .filter(|(c, _)| !positives.contains(&(*c as u32)))
        .map(|(_, &h)| (h as f64 - draws as f64 * p).abs() / sigma)
        .fold(0.0, f64::max);
    println!(
        "inclusion probability {p:.4}; worst class deviation {worst:.2} sigma over {draws} draws"
    );
    println!(
        "positives never drawn as negatives: {}",
        positives.iter().all(|&c| hits[c as usize] == 0)
    );
    Ok(())
}
