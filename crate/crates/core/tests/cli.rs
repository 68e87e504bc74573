use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mlcd::clustering::{kmeans_assign, CentroidSet};
use mlcd::eval::similarity_stats;
use mlcd::fmat::{load_fmat, save_fmat};
use mlcd::labeling::{load_lbl, save_lbl, LabelAssignment, LabelMode};
use mlcd::synthetic::{multi_concept, MultiConceptConfig};
use mlcd::tensor::FeatureMatrix;
use tempfile::TempDir;

fn mlcd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlcd"))
        .args(args)
        .env("MLCD_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small multi-concept set written as `x.fmat` plus dominant-concept `x.lbl`.
fn toy(dir: &Path, samples: usize, seed: u64) -> (PathBuf, FeatureMatrix) {
    let data = multi_concept(&MultiConceptConfig {
        concepts: 6,
        dim: 8,
        samples,
        seed,
        ..Default::default()
    })
    .unwrap();
    let path = dir.join(format!("x{seed}.fmat"));
    save_fmat(&path, &data.features).unwrap();
    let lists = data.labels.iter().map(|&c| vec![c]).collect();
    save_lbl(
        &path.with_extension("lbl"),
        &LabelAssignment::new(lists, 6, LabelMode::External).unwrap(),
    )
    .unwrap();
    (path, data.features)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, body).unwrap();
    p
}

const CONFIG: &str = "variant=MLCD\nk=6\nsteps=5\nbatch_size=16\nlearning_rate=0.001\nseed=3\nl=2\nembed_dim=8\nwarmup_steps=0\n";

#[test]
fn cluster_with_k_equal_to_n_reaches_zero_objective() {
    let dir = TempDir::new().unwrap();
    let (x, _) = toy(dir.path(), 12, 1);
    let out = dir.path().join("c.fmat");
    let o = mlcd(&[
        "cluster",
        "--features",
        s(&x),
        "--k",
        "12",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let last = stdout(&o).lines().last().unwrap().to_string();
    let value: f64 = last
        .strip_prefix("final_objective=")
        .unwrap()
        .parse()
        .unwrap();
    assert!(value.abs() < 1e-9, "{last}");
    assert!(dir.path().join("c.fmat.manifest").exists());
}

#[test]
fn cluster_rerun_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (x, _) = toy(dir.path(), 80, 2);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = mlcd(&[
            "cluster",
            "--features",
            s(&x),
            "--k",
            "5",
            "--seed",
            "9",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.fmat"), run("b.fmat"));
}

#[test]
fn malformed_magic_exits_2_and_names_the_file() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("broken.fmat");
    std::fs::write(&bad, b"NOTAMAGIC-and-some-bytes-to-fill-a-header").unwrap();
    let o = mlcd(&[
        "cluster",
        "--features",
        s(&bad),
        "--k",
        "2",
        "--out",
        s(&dir.path().join("c.fmat")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("broken.fmat"), "{}", stderr(&o));
}

#[test]
fn assign_modes_and_their_errors() {
    let dir = TempDir::new().unwrap();
    let (x, feats) = toy(dir.path(), 60, 3);
    let c = dir.path().join("c.fmat");
    assert!(
        mlcd(&["cluster", "--features", s(&x), "--k", "6", "--out", s(&c)])
            .status
            .success()
    );
    let centroids = CentroidSet::from_matrix(load_fmat(&c).unwrap()).unwrap();
    let hard = kmeans_assign(&feats, &centroids).unwrap().labels;

    let top1 = dir.path().join("top1.lbl");
    let o = mlcd(&[
        "assign",
        "--features",
        s(&x),
        "--centroids",
        s(&c),
        "--mode",
        "topl",
        "--l",
        "1",
        "--out",
        s(&top1),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lbl = load_lbl(&top1).unwrap();
    assert!(lbl.lists().iter().all(|l| l.len() == 1));
    assert_eq!(lbl.top1(), hard);
    assert!(dir.path().join("top1.lbl.manifest").exists());

    let thr = dir.path().join("thr.lbl");
    let o = mlcd(&[
        "assign",
        "--features",
        s(&x),
        "--centroids",
        s(&c),
        "--mode",
        "threshold",
        "--tau",
        "0.99",
        "--out",
        s(&thr),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lbl = load_lbl(&thr).unwrap();
    assert!(lbl.lists().iter().all(|l| l.len() == 1));
    assert_eq!(lbl.top1(), hard);

    let o = mlcd(&[
        "assign",
        "--features",
        s(&x),
        "--centroids",
        s(&c),
        "--mode",
        "topl",
        "--l",
        "7",
        "--out",
        s(&thr),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

fn pipeline(dir: &Path) -> (PathBuf, PathBuf) {
    let (x, _) = toy(dir, 64, 4);
    let c = dir.join("c.fmat");
    assert!(
        mlcd(&["cluster", "--features", s(&x), "--k", "6", "--out", s(&c)])
            .status
            .success()
    );
    let lbl = dir.join("pseudo.lbl");
    let o = mlcd(&[
        "assign",
        "--features",
        s(&x),
        "--centroids",
        s(&c),
        "--l",
        "2",
        "--out",
        s(&lbl),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    (x, lbl)
}

#[test]
fn one_step_training_writes_checkpoint_and_two_metric_rows() {
    let dir = TempDir::new().unwrap();
    let (x, lbl) = pipeline(dir.path());
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("run");
    let o = mlcd(&[
        "train",
        "--features",
        s(&x),
        "--labels",
        s(&lbl),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--set",
        "steps=1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "encoder.fmat",
        "centers.fmat",
        "checkpoint.txt",
        "manifest.txt",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
}

#[test]
fn missing_config_key_exits_2_naming_the_key() {
    let dir = TempDir::new().unwrap();
    let (x, lbl) = pipeline(dir.path());
    let cfg = write_config(dir.path(), &CONFIG.replace("batch_size=16\n", ""));
    let o = mlcd(&[
        "train",
        "--features",
        s(&x),
        "--labels",
        s(&lbl),
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("batch_size"), "{}", stderr(&o));
}

#[test]
fn label_k_must_match_config() {
    let dir = TempDir::new().unwrap();
    let (x, lbl) = pipeline(dir.path());
    let cfg = write_config(dir.path(), &CONFIG.replace("k=6", "k=7"));
    let o = mlcd(&[
        "train",
        "--features",
        s(&x),
        "--labels",
        s(&lbl),
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_rejects_dimension_mismatch_and_stats_agree_with_library() {
    let dir = TempDir::new().unwrap();
    let (x, lbl) = pipeline(dir.path());
    let cfg = write_config(dir.path(), CONFIG);
    let run = dir.path().join("run");
    assert!(mlcd(&[
        "train",
        "--features",
        s(&x),
        "--labels",
        s(&lbl),
        "--config",
        s(&cfg),
        "--out",
        s(&run)
    ])
    .status
    .success());

    let report = dir.path().join("eval.txt");
    let o = mlcd(&[
        "eval",
        "--checkpoint",
        s(&run),
        "--train",
        s(&x),
        "--test",
        s(&x),
        "--pseudo-labels",
        s(&lbl),
        "--report",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("knn_accuracy=") && text.contains("mean_si="));
    assert!(dir.path().join("eval.txt.hist.csv").exists());
    assert!(dir.path().join("eval.txt.manifest").exists());

    // wrong feature width
    let wide = dir.path().join("wide.fmat");
    save_fmat(&wide, &FeatureMatrix::from_f64(2, 5, &[1.0; 10]).unwrap()).unwrap();
    std::fs::copy(x.with_extension("lbl"), wide.with_extension("lbl")).unwrap();
    let o = mlcd(&[
        "eval",
        "--checkpoint",
        s(&run),
        "--train",
        s(&x),
        "--test",
        s(&wide),
        "--report",
        s(&report),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    // stats over raw embeddings and centers equals the library computation
    let (e, _) = toy(dir.path(), 30, 5);
    let centers = run.join("centers.fmat");
    let stats_report = dir.path().join("stats.txt");
    let o = mlcd(&[
        "stats",
        "--embeddings",
        s(&e),
        "--centroids",
        s(&centers),
        "--labels",
        s(&e.with_extension("lbl")),
        "--report",
        s(&stats_report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let expected = similarity_stats(
        &load_fmat(&e).unwrap().normalize_rows().unwrap(),
        &load_fmat(&centers).unwrap(),
        &load_lbl(&e.with_extension("lbl")).unwrap(),
    )
    .unwrap();
    let text = std::fs::read_to_string(&stats_report).unwrap();
    let value = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key}=")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((value("mean_si") - expected.mean_si).abs() < 1e-6);
    assert!((value("mean_sj") - expected.mean_sj).abs() < 1e-6);
}

#[test]
fn selftest_passes() {
    let o = mlcd(&["selftest"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    assert_eq!(
        out.lines().filter(|l| l.contains("status=pass")).count(),
        3,
        "{out}"
    );
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(mlcd(&["cluster"]).status.code(), Some(2));
    assert_eq!(mlcd(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(mlcd(&["--help"]).status.code(), Some(0));
}
