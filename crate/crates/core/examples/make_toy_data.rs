//! Writes the synthetic multi-concept benchmark as files for the `mlcd`
//! command-line pipeline:
//!
//! * `train.fmat`, `train.lbl`: 2000 samples with their dominant concept
//! * `test.fmat`, `test.lbl`: 500 held-out samples
//! * `toy.cfg`: a training config for `mlcd train`
//!
//! Usage: cargo run --example make_toy_data -- [OUT_DIR]

use std::path::PathBuf;

use mlcd::fmat::save_fmat;
use mlcd::labeling::{save_lbl, LabelAssignment, LabelMode};
use mlcd::synthetic::{multi_concept, MultiConceptConfig};

const CONFIG: &str = "\
# toy run on the synthetic benchmark
variant=MLCD
k=40
l=2
steps=500
batch_size=64
learning_rate=0.001
seed=11
margin=0.3
scale=32
ratio=0.25
warmup_steps=50
log_interval=50
";

fn main() -> mlcd::error::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "toy-data".into()));
    std::fs::create_dir_all(&out)?;
    let data = multi_concept(&MultiConceptConfig {
        samples: 2500,
        ..Default::default()
    })?;
    let (train, test) = data.split(2000)?;
    let k = data.directions.rows();
    for (name, part) in [("train", &train), ("test", &test)] {
        save_fmat(&out.join(format!("{name}.fmat")), &part.features)?;
        let lists = part.labels.iter().map(|&l| vec![l]).collect();
        save_lbl(
            &out.join(format!("{name}.lbl")),
            &LabelAssignment::new(lists, k, LabelMode::External)?,
        )?;
    }
    std::fs::write(out.join("toy.cfg"), CONFIG)?;
    println!(
        "wrote {} (train {}, test {})",
        out.display(),
        train.len(),
        test.len()
    );
    println!("next:");
    let d = out.display();
    println!("  mlcd cluster --features {d}/train.fmat --k 40 --seed 7 --out {d}/centroids.fmat");
    println!("  mlcd assign --features {d}/train.fmat --centroids {d}/centroids.fmat --mode topl --l 2 --out {d}/pseudo.lbl");
    println!("  mlcd train --features {d}/train.fmat --labels {d}/pseudo.lbl --config {d}/toy.cfg --out {d}/run-mlcd");
    println!("  mlcd eval --checkpoint {d}/run-mlcd --train {d}/train.fmat --test {d}/test.fmat --pseudo-labels {d}/pseudo.lbl --report {d}/mlcd.report");
    Ok(())
}
