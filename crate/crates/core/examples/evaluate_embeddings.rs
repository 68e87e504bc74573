//! Full pipeline on the synthetic benchmark: cluster, assign top-2 labels,
//! train with MLCD, then measure k-NN and linear-probe accuracy of the frozen
//! embeddings against the raw features, plus similarity histograms.
//!
//! Usage: cargo run --release --example evaluate_embeddings

use mlcd::clustering::{kmeans_fit, KMeansParams};
use mlcd::eval::{knn_eval, linear_probe, similarity_stats, EvalReport};
use mlcd::labeling::assign_top_l;
use mlcd::loss::{LossConfig, LossVariant};
use mlcd::synthetic::{multi_concept, MultiConceptConfig};
use mlcd::trainer::{train, TrainConfig};

fn main() -> mlcd::error::Result<()> {
    let data = multi_concept(&MultiConceptConfig {
        samples: 2500,
        ..Default::default()
    })?;
    let (tr, te) = data.split(2000)?;
    let fit = kmeans_fit(
        &tr.features,
        &KMeansParams {
            seed: 7,
            ..KMeansParams::new(40)
        },
    )?;
    let labels = assign_top_l(&tr.features, &fit.centroids, 2)?;

    let raw_knn = knn_eval(&tr.features, &tr.labels, &te.features, &te.labels, 5)?;
    let raw_probe = linear_probe(&tr.features, &tr.labels, &te.features, &te.labels, 200, 1.0)?;
    println!("raw features:   knn@5={raw_knn:.4} probe={raw_probe:.4}");

    let cfg = TrainConfig {
        loss: LossConfig {
            variant: LossVariant::Mlcd,
            margin: 0.3,
            scale: 32.0,
            ratio: 0.25,
        },
        steps: 500,
        warmup_steps: 50,
        log_interval: 100,
        seed: 11,
        ..TrainConfig::default()
    };
    let (state, history) = train(&tr.features, &labels, &cfg, None)?;
    for r in &history.records {
        println!(
            "  step {:>4}  loss {:.4}  mean_si {:.4}  mean_sj {:.4}",
            r.step, r.loss, r.mean_si, r.mean_sj
        );
    }
    let e_tr = state.embed(&tr.features)?;
    let e_te = state.embed(&te.features)?;
    let report = EvalReport {
        knn_accuracy: Some(knn_eval(&e_tr, &tr.labels, &e_te, &te.labels, 5)?),
        probe_accuracy: Some(linear_probe(
            &e_tr, &tr.labels, &e_te, &te.labels, 200, 1.0,
        )?),
        stats: Some(similarity_stats(&e_tr, &state.centers, &labels)?),
    };
    print!("MLCD embeddings:\n{}", report.to_key_values());
    let csv = report.histogram_csv().unwrap_or_default();
    println!("histogram (non-empty bins):");
    for line in csv.lines().skip(1).filter(|l| !l.ends_with(",0,0")) {
        println!("  {line}");
    }
    Ok(())
}
