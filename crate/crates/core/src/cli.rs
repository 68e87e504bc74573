//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or format error, 3 numeric failure
//! (non-finite loss, zero-norm rows, failed self-check).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::checkpoint::{manifest_path_for, Checkpoint, RunManifest, MANIFEST_FILE, METRICS_FILE};
use crate::clustering::{kmeans_fit, CentroidSet, InitMethod, KMeansParams};
use crate::config::{split_assignment, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{knn_eval, linear_probe, similarity_stats, EvalReport};
use crate::fmat::{load_fmat, save_fmat};
use crate::labeling::{assign_threshold, assign_top_l, load_lbl, save_lbl, LabelAssignment};
use crate::selftest;
use crate::tensor::FeatureMatrix;
use crate::trainer::train;

#[derive(Debug, Parser)]
#[command(
    name = "mlcd",
    version,
    about = "Multi-label cluster discrimination toolkit"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "MLCD_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AssignMode {
    Topl,
    Threshold,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spherical k-means over an FMAT feature file.
    Cluster {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `random` or `kmeanspp`.
        #[arg(long, default_value = "kmeanspp")]
        init: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multi-label assignment against a centroid file.
    Assign {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        centroids: PathBuf,
        #[arg(long, value_enum, default_value = "topl")]
        mode: AssignMode,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains encoder and class centers; writes a checkpoint directory.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Config override `key=value`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Centroid file used to warm-start the class centers.
        #[arg(long)]
        centroids: Option<PathBuf>,
    },
    /// k-NN and linear-probe accuracy of a checkpoint's embeddings.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Raw training features (FMAT).
        #[arg(long)]
        train: PathBuf,
        /// Raw test features (FMAT).
        #[arg(long)]
        test: PathBuf,
        /// Ground-truth labels for `--train` (default: same path, `.lbl`).
        #[arg(long)]
        train_labels: Option<PathBuf>,
        /// Ground-truth labels for `--test` (default: same path, `.lbl`).
        #[arg(long)]
        test_labels: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 5)]
        knn_k: usize,
        #[arg(long, default_value_t = 200)]
        probe_epochs: usize,
        #[arg(long, default_value_t = 1.0)]
        probe_lr: f64,
        /// Pseudo-labels of `--train`; adds similarity statistics.
        #[arg(long)]
        pseudo_labels: Option<PathBuf>,
    },
    /// Positive/negative cosine statistics of embeddings against centers.
    Stats {
        /// Embeddings, or raw features when `--checkpoint` is given.
        #[arg(long)]
        embeddings: PathBuf,
        /// Class centers (default with `--checkpoint`: its centers).
        #[arg(long)]
        centroids: Option<PathBuf>,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Factorization, shift-invariance and finite-difference checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 2;
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_unit_features(path: &Path) -> Result<FeatureMatrix> {
    let f = load_fmat(path)?;
    if f.is_normalized() {
        Ok(f)
    } else {
        f.normalize_rows()
    }
}

fn default_labels(path: &Path) -> PathBuf {
    path.with_extension("lbl")
}

fn primary_labels(path: &Path, n: usize) -> Result<Vec<u32>> {
    let lbl = load_lbl(path)?;
    if lbl.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: lbl.len(),
        });
    }
    Ok(lbl.top1())
}

fn run(command: Command) -> Result<i32> {
    let started = Instant::now();
    match command {
        Command::Cluster {
            features,
            k,
            iters,
            tol,
            seed,
            init,
            out,
        } => {
            let method: InitMethod = init.parse()?;
            let x = load_unit_features(&features)?;
            let params = KMeansParams {
                k,
                max_iters: iters,
                tol,
                seed,
                method,
            };
            let fit = kmeans_fit(&x, &params)?;
            for (i, h) in fit.history.iter().enumerate() {
                let tag = if h.after_repair { " repaired" } else { "" };
                println!("iter={i} objective={:.9}{tag}", h.objective);
            }
            println!("final_objective={:.9}", fit.assignment.objective);
            save_fmat(&out, &fit.centroids.centroids)?;
            let mut m = RunManifest::new("cluster")
                .setting("k", k)
                .setting("iters", iters)
                .setting("tol", tol)
                .setting("init", method)
                .setting("iterations_run", fit.centroids.iterations_run);
            m.seed = Some(seed);
            m.inputs.push(features);
            m.outputs.push(out.clone());
            m.wall_time_secs = started.elapsed().as_secs_f64();
            m.write(&manifest_path_for(&out))?;
        }
        Command::Assign {
            features,
            centroids,
            mode,
            l,
            tau,
            out,
        } => {
            let x = load_unit_features(&features)?;
            let set = CentroidSet::from_matrix(load_fmat(&centroids)?)?;
            let (labels, setting) = match mode {
                AssignMode::Topl => {
                    let l =
                        l.ok_or_else(|| Error::InvalidConfig("--mode topl needs --l".into()))?;
                    (assign_top_l(&x, &set, l)?, ("l", l.to_string()))
                }
                AssignMode::Threshold => {
                    let tau = tau.ok_or_else(|| {
                        Error::InvalidConfig("--mode threshold needs --tau".into())
                    })?;
                    (assign_threshold(&x, &set, tau)?, ("tau", tau.to_string()))
                }
            };
            save_lbl(&out, &labels)?;
            let sizes: Vec<usize> = labels.lists().iter().map(Vec::len).collect();
            println!(
                "samples={} k={} min_len={} max_len={}",
                labels.len(),
                labels.k(),
                sizes.iter().min().unwrap_or(&0),
                sizes.iter().max().unwrap_or(&0)
            );
            let mut m = RunManifest::new("assign")
                .setting("mode", format!("{mode:?}").to_lowercase())
                .setting(setting.0, setting.1);
            m.inputs.extend([features, centroids]);
            m.outputs.push(out.clone());
            m.wall_time_secs = started.elapsed().as_secs_f64();
            m.write(&manifest_path_for(&out))?;
        }
        Command::Train {
            features,
            labels,
            config,
            out,
            overrides,
            centroids,
        } => {
            let overrides = overrides
                .iter()
                .map(|s| split_assignment(s).map(|(k, v)| (k.to_string(), v.to_string())))
                .collect::<Result<Vec<_>>>()?;
            let cfg = RunConfig::load(&config, &overrides)?;
            let x = load_fmat(&features)?;
            let lbl = load_lbl(&labels)?;
            check_labels(&lbl, &cfg, x.rows())?;
            let prototypes = match &centroids {
                Some(p) => {
                    let c = load_fmat(p)?;
                    if c.rows() != cfg.k || c.cols() != x.cols() {
                        return Err(Error::ShapeMismatch {
                            rows: cfg.k,
                            cols: x.cols(),
                            actual: c.rows() * c.cols(),
                        });
                    }
                    Some(
                        c.iter_rows()
                            .map(|r| Some(r.iter().map(|&v| v as f64).collect()))
                            .collect::<Vec<_>>(),
                    )
                }
                None => None,
            };
            let (state, history) = train(&x, &lbl, &cfg.train, prototypes.as_deref())?;
            let ck = Checkpoint::from_state(&state, cfg.train.seed, cfg.train.loss, cfg.l);
            let mut outputs = ck.save(&out)?;
            let metrics = out.join(METRICS_FILE);
            fs::write(&metrics, history.to_csv())?;
            outputs.push(metrics);
            if let Some(last) = history.last() {
                println!(
                    "step={} loss={:.6} mean_si={:.6} mean_sj={:.6}",
                    last.step, last.loss, last.mean_si, last.mean_sj
                );
            }
            let mut m = RunManifest::new("train");
            m.settings = cfg
                .to_key_values()
                .lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect();
            m.seed = Some(cfg.train.seed);
            m.inputs.extend([features, labels, config]);
            m.inputs.extend(centroids);
            m.outputs = outputs;
            m.wall_time_secs = started.elapsed().as_secs_f64();
            m.write(&out.join(MANIFEST_FILE))?;
        }
        Command::Eval {
            checkpoint,
            train,
            test,
            train_labels,
            test_labels,
            report,
            knn_k,
            probe_epochs,
            probe_lr,
            pseudo_labels,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let state = ck.to_state()?;
            let e_train = state.embed(&load_fmat(&train)?)?;
            let e_test = state.embed(&load_fmat(&test)?)?;
            let train_labels = train_labels.unwrap_or_else(|| default_labels(&train));
            let test_labels = test_labels.unwrap_or_else(|| default_labels(&test));
            let y_train = primary_labels(&train_labels, e_train.rows())?;
            let y_test = primary_labels(&test_labels, e_test.rows())?;
            let mut r = EvalReport {
                knn_accuracy: Some(knn_eval(&e_train, &y_train, &e_test, &y_test, knn_k)?),
                probe_accuracy: Some(linear_probe(
                    &e_train,
                    &y_train,
                    &e_test,
                    &y_test,
                    probe_epochs,
                    probe_lr,
                )?),
                stats: None,
            };
            let mut inputs = vec![checkpoint, train, test, train_labels, test_labels];
            if let Some(p) = pseudo_labels {
                let a = load_lbl(&p)?;
                r.stats = Some(similarity_stats(&e_train, &state.centers, &a)?);
                inputs.push(p);
            }
            let mut m = RunManifest::new("eval")
                .setting("knn_k", knn_k)
                .setting("probe_epochs", probe_epochs)
                .setting("probe_lr", probe_lr);
            m.seed = Some(ck.seed);
            m.inputs = inputs;
            m.outputs = write_report(&r, &report)?;
            m.wall_time_secs = started.elapsed().as_secs_f64();
            m.write(&manifest_path_for(&report))?;
        }
        Command::Stats {
            embeddings,
            centroids,
            labels,
            checkpoint,
            report,
        } => {
            let (e, centers) = match &checkpoint {
                Some(dir) => {
                    let ck = Checkpoint::load(dir)?;
                    let state = ck.to_state()?;
                    let e = state.embed(&load_fmat(&embeddings)?)?;
                    let centers = match &centroids {
                        Some(p) => load_unit_features(p)?,
                        None => state.centers.clone(),
                    };
                    (e, centers)
                }
                None => {
                    let p = centroids.as_ref().ok_or_else(|| {
                        Error::InvalidConfig("stats needs --centroids or --checkpoint".into())
                    })?;
                    (load_unit_features(&embeddings)?, load_unit_features(p)?)
                }
            };
            let a = load_lbl(&labels)?;
            let r = EvalReport {
                stats: Some(similarity_stats(&e, &centers, &a)?),
                ..EvalReport::default()
            };
            if let Some(path) = report {
                let mut m = RunManifest::new("stats");
                m.inputs.push(embeddings);
                m.inputs.extend(centroids);
                m.inputs.push(labels);
                m.inputs.extend(checkpoint);
                m.outputs = write_report(&r, &path)?;
                m.wall_time_secs = started.elapsed().as_secs_f64();
                m.write(&manifest_path_for(&path))?;
            }
        }
        Command::Selftest { seed } => {
            let mut ok = true;
            for s in selftest::run_all(seed)? {
                println!(
                    "suite={} cases={} max_error={:.3e} tolerance={:.0e} status={}",
                    s.name,
                    s.cases,
                    s.max_error,
                    s.tolerance,
                    if s.passed() { "pass" } else { "FAIL" }
                );
                for f in &s.failures {
                    println!("  {f}");
                }
                ok &= s.passed();
            }
            return Ok(if ok { 0 } else { 3 });
        }
    }
    Ok(0)
}

fn check_labels(lbl: &LabelAssignment, cfg: &RunConfig, n: usize) -> Result<()> {
    if lbl.k() != cfg.k {
        return Err(Error::InvalidConfig(format!(
            "label file declares k={} but config has k={}",
            lbl.k(),
            cfg.k
        )));
    }
    if lbl.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: lbl.len(),
        });
    }
    if let (Some(l), Some(u)) = (cfg.l, lbl.uniform_len()) {
        if l != u {
            return Err(Error::InvalidConfig(format!(
                "config has l={l} but label lists have length {u}"
            )));
        }
    }
    Ok(())
}

/// Prints the report, writes it and its histogram CSV; returns both paths.
fn write_report(r: &EvalReport, path: &Path) -> Result<Vec<PathBuf>> {
    let text = r.to_key_values();
    print!("{text}");
    fs::write(path, &text)?;
    let mut out = vec![path.to_path_buf()];
    if let Some(csv) = r.histogram_csv() {
        let mut hist = path.as_os_str().to_owned();
        hist.push(".hist.csv");
        let hist = PathBuf::from(hist);
        fs::write(&hist, csv)?;
        out.push(hist);
    }
    Ok(out)
}
