//! Spherical k-means on the synthetic benchmark: objective history, repair
//! steps, and agreement between cosine-argmax and Euclidean-argmin.
//!
//! Usage: cargo run --example cluster_features -- [K] [SEED]

use mlcd::clustering::{kmeans_assign, kmeans_fit, InitMethod, KMeansParams};
use mlcd::synthetic::{multi_concept, MultiConceptConfig};

fn main() -> mlcd::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let k: usize = args
        .next()
        .map_or(40, |s| s.parse().expect("K must be an integer"));
    let seed: u64 = args
        .next()
        .map_or(7, |s| s.parse().expect("SEED must be an integer"));

    let data = multi_concept(&MultiConceptConfig::default())?;
    for method in [InitMethod::Random, InitMethod::KMeansPlusPlus] {
        let fit = kmeans_fit(
            &data.features,
            &KMeansParams {
                method,
                seed,
                ..KMeansParams::new(k)
            },
        )?;
        println!(
            "init={method} k={k} iterations={}",
            fit.centroids.iterations_run
        );
        for (i, h) in fit.history.iter().enumerate() {
            let tag = if h.after_repair {
                "  (after repair)"
            } else {
                ""
            };
            println!("  {i:>3}  objective={:.6}{tag}", h.objective);
        }

        // The same labels fall out of the Euclidean nearest centroid.
        let hard = kmeans_assign(&data.features, &fit.centroids)?;
        let euclid_agree = data.features.iter_rows().zip(&hard.labels).all(|(x, &l)| {
            let dist = |c: &[f32]| -> f64 {
                x.iter()
                    .zip(c)
                    .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                    .sum()
            };
            let best = (0..k)
                .min_by(|&a, &b| {
                    dist(fit.centroids.centroids.row(a))
                        .total_cmp(&dist(fit.centroids.centroids.row(b)))
                })
                .unwrap();
            best as u32 == l
        });
        println!("  cosine argmax == euclidean argmin: {euclid_agree}");
    }
    Ok(())
}
