//! Top-l and threshold multi-label assignment against k-means centroids, and
//! how the label lists nest as l grows or tau falls.
//!
//! Usage: cargo run --example multi_label_assignment

use mlcd::clustering::{kmeans_fit, KMeansParams};
use mlcd::labeling::{assign_threshold, assign_top_l};
use mlcd::synthetic::{multi_concept, MultiConceptConfig};

fn main() -> mlcd::error::Result<()> {
    let data = multi_concept(&MultiConceptConfig {
        samples: 1000,
        ..Default::default()
    })?;
    let fit = kmeans_fit(
        &data.features,
        &KMeansParams {
            seed: 7,
            ..KMeansParams::new(40)
        },
    )?;

    let top1 = assign_top_l(&data.features, &fit.centroids, 1)?;
    let top2 = assign_top_l(&data.features, &fit.centroids, 2)?;
    let top4 = assign_top_l(&data.features, &fit.centroids, 4)?;
    println!("first five samples:");
    for i in 0..5 {
        println!(
            "  sample {i}: concepts {:?}  top-1 {:?}  top-2 {:?}  top-4 {:?}",
            data.concepts[i],
            top1.positives(i),
            top2.positives(i),
            top4.positives(i)
        );
    }
    let prefix = (0..data.len()).all(|i| top4.positives(i).starts_with(top2.positives(i)));
    println!("top-2 is a prefix of top-4 for every sample: {prefix}");
    let hard_agree = top1.top1() == fit.assignment.labels;
    println!("top-1 equals the hard k-means assignment: {hard_agree}");

    for tau in [0.95, 0.9, 0.8, 0.6] {
        let a = assign_threshold(&data.features, &fit.centroids, tau)?;
        let mean_len = a.lists().iter().map(Vec::len).sum::<usize>() as f64 / a.len() as f64;
        let fallback = a.lists().iter().filter(|l| l.len() == 1).count();
        println!("tau={tau}: mean positives {mean_len:.2}, single-label samples {fallback}");
    }
    Ok(())
}
