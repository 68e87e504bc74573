//! Trains MLC and MLCD with identical settings on the synthetic multi-concept
//! benchmark (k = 40 clusters, top-2 labels, 500 steps, scale 32, margin 0.3,
//! sampling ratio 0.25, batch 64) and compares mean positive and negative
//! cosine and held-out k-NN accuracy.
//!
//! Usage: cargo run --release --example mlc_vs_mlcd -- [LR] [OPTIMIZER] [NOISE]

use mlcd::clustering::{kmeans_fit, KMeansParams};
use mlcd::eval::{knn_eval, similarity_stats};
use mlcd::labeling::assign_top_l;
use mlcd::loss::{LossConfig, LossVariant};
use mlcd::synthetic::{multi_concept, MultiConceptConfig};
use mlcd::trainer::{train, OptimizerKind, TrainConfig};

fn main() -> mlcd::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let lr: f64 = args
        .next()
        .map_or(1e-3, |s| s.parse().expect("LR must be a number"));
    let optimizer: OptimizerKind = args
        .next()
        .map_or(Ok(OptimizerKind::AdamW), |s| s.parse())?;
    let noise: f64 = args
        .next()
        .map_or(0.3, |s| s.parse().expect("NOISE must be a number"));

    let data = multi_concept(&MultiConceptConfig {
        samples: 2500,
        noise,
        ..Default::default()
    })?;
    let (train_set, test_set) = data.split(2000)?;
    let fit = kmeans_fit(
        &train_set.features,
        &KMeansParams {
            seed: 7,
            ..KMeansParams::new(40)
        },
    )?;
    let labels = assign_top_l(&train_set.features, &fit.centroids, 2)?;

    println!("lr={lr} optimizer={optimizer} noise={noise}");
    for variant in [LossVariant::Mlc, LossVariant::Mlcd] {
        let cfg = TrainConfig {
            loss: LossConfig {
                variant,
                margin: 0.3,
                scale: 32.0,
                ratio: 0.25,
            },
            batch_size: 64,
            steps: 500,
            learning_rate: lr,
            optimizer,
            warmup_steps: 50,
            log_interval: 100,
            seed: 11,
            ..TrainConfig::default()
        };
        let (state, history) = train(&train_set.features, &labels, &cfg, None)?;
        println!("{variant}:");
        for r in &history.records {
            println!(
                "  step {:>4}  loss {:>8.4}  mean_si {:.4}  mean_sj {:+.4}",
                r.step, r.loss, r.mean_si, r.mean_sj
            );
        }
        let e_train = state.embed(&train_set.features)?;
        let e_test = state.embed(&test_set.features)?;
        let stats = similarity_stats(&e_train, &state.centers, &labels)?;
        let acc = knn_eval(&e_train, &train_set.labels, &e_test, &test_set.labels, 5)?;
        println!(
            "  final (all classes): mean_si={:.4} mean_sj={:+.4} knn@5={:.4}",
            stats.mean_si, stats.mean_sj, acc
        );
    }
    Ok(())
}
