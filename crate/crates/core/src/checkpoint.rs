//! Checkpoint directories and run manifests.
//!
//! A checkpoint directory holds `encoder.fmat`, `centers.fmat` and
//! `checkpoint.txt` (`key=value`: step, seed, variant, margin, scale, ratio,
//! l). Every command writes one manifest next to its outputs recording the
//! command line, resolved settings, paths, seed, wall time and SHA-256 of
//! each artifact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::split_assignment;
use crate::error::{Error, Result};
use crate::fmat::{load_fmat, save_fmat};
use crate::loss::LossConfig;
use crate::tensor::FeatureMatrix;
use crate::trainer::TrainState;

pub const ENCODER_FILE: &str = "encoder.fmat";
pub const CENTERS_FILE: &str = "centers.fmat";
pub const INFO_FILE: &str = "checkpoint.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: FeatureMatrix,
    pub centers: FeatureMatrix,
    pub step: u64,
    pub seed: u64,
    pub loss: LossConfig,
    pub l: Option<usize>,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState, seed: u64, loss: LossConfig, l: Option<usize>) -> Self {
        Self {
            encoder: state.encoder.clone(),
            centers: state.centers.clone(),
            step: state.step,
            seed,
            loss,
            l,
        }
    }

    pub fn info_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "step={}", self.step);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "variant={}", self.loss.variant);
        let _ = writeln!(s, "margin={}", self.loss.margin);
        let _ = writeln!(s, "scale={}", self.loss.scale);
        let _ = writeln!(s, "ratio={}", self.loss.ratio);
        if let Some(l) = self.l {
            let _ = writeln!(s, "l={l}");
        }
        s
    }

    /// Writes the three checkpoint files into `dir`, creating it if needed.
    /// Returns the written paths.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let enc = dir.join(ENCODER_FILE);
        let cen = dir.join(CENTERS_FILE);
        let info = dir.join(INFO_FILE);
        save_fmat(&enc, &self.encoder)?;
        save_fmat(&cen, &self.centers)?;
        fs::write(&info, self.info_text())?;
        Ok(vec![enc, cen, info])
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let info_path = dir.join(INFO_FILE);
        let text = fs::read_to_string(&info_path).map_err(|e| Error::Format {
            path: info_path.clone(),
            reason: e.to_string(),
        })?;
        let fmt_err = |reason: String| Error::Format {
            path: info_path.clone(),
            reason,
        };
        let mut step = None;
        let mut seed = None;
        let mut loss = LossConfig::default();
        let mut variant = None;
        let mut l = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = split_assignment(line).map_err(|e| fmt_err(e.to_string()))?;
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| fmt_err(format!("bad number `{v}` for `{k}`")))
            };
            let int = |v: &str| {
                v.parse::<u64>()
                    .map_err(|_| fmt_err(format!("bad integer `{v}` for `{k}`")))
            };
            match k {
                "step" => step = Some(int(v)?),
                "seed" => seed = Some(int(v)?),
                "variant" => variant = Some(v.parse().map_err(|e: Error| fmt_err(e.to_string()))?),
                "margin" => loss.margin = num(v)?,
                "scale" => loss.scale = num(v)?,
                "ratio" => loss.ratio = num(v)?,
                "l" => l = Some(int(v)? as usize),
                other => return Err(fmt_err(format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| fmt_err(format!("missing key `{k}`"));
        loss.variant = variant.ok_or_else(|| missing("variant"))?;
        let encoder = load_fmat(&dir.join(ENCODER_FILE))?;
        let centers = load_fmat(&dir.join(CENTERS_FILE))?;
        if encoder.cols() != centers.cols() {
            return Err(Error::DimensionMismatch {
                expected: encoder.cols(),
                actual: centers.cols(),
            });
        }
        Ok(Self {
            encoder,
            centers,
            step: step.ok_or_else(|| missing("step"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            loss,
            l,
        })
    }

    pub fn to_state(&self) -> Result<TrainState> {
        TrainState::from_parameters(
            self.encoder.clone(),
            self.centers.clone(),
            self.step,
            self.seed,
        )
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

/// Record of one command invocation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunManifest {
    pub command: String,
    pub settings: Vec<(String, String)>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            ..Self::default()
        }
    }

    pub fn setting(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.settings.push((key.to_string(), value.to_string()));
        self
    }

    /// Manifest text; output checksums are computed from the files on disk.
    /// `wall_time` is the only line that varies between identical runs.
    pub fn render(&self) -> Result<String> {
        let mut s = String::new();
        let _ = writeln!(s, "command={}", self.command);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed={seed}");
        }
        for (k, v) in &self.settings {
            let _ = writeln!(s, "config.{k}={v}");
        }
        for p in &self.inputs {
            let _ = writeln!(s, "input={}", p.display());
        }
        for p in &self.outputs {
            let _ = writeln!(s, "output={}", p.display());
            let _ = writeln!(s, "sha256.{}={}", file_name(p), sha256_file(p)?);
        }
        let _ = writeln!(s, "wall_time={:.3}", self.wall_time_secs);
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()?)?;
        Ok(())
    }
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

/// Manifest path for a single-file output: `<file>.manifest`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}
