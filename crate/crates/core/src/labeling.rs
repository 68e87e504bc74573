//! Multi-label pseudo-labels: each sample gets an ordered list of positive
//! classes drawn from its similarities to a frozen centroid set.
//!
//! Lists are sorted by descending similarity with ties broken by ascending
//! class id, so the top-1 entry always agrees with
//! [`kmeans_assign`](crate::clustering::kmeans_assign).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::clustering::{CentroidSet, HardAssignment};
use crate::error::{Error, Result};
use crate::tensor::{dot, FeatureMatrix};

/// Default number of positives per sample.
pub const DEFAULT_POSITIVE_COUNT: usize = 8;

pub const LBL_MAGIC: &[u8; 8] = b"MLCDLBL1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelMode {
    TopL(usize),
    Threshold(f64),
    Single,
    /// Loaded from a label file; the producing rule is not recorded.
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelAssignment {
    lists: Vec<Vec<u32>>,
    k: usize,
    mode: LabelMode,
}

impl LabelAssignment {
    /// Validates that every list is non-empty, duplicate-free and in range.
    pub fn new(lists: Vec<Vec<u32>>, k: usize, mode: LabelMode) -> Result<Self> {
        for list in &lists {
            if list.is_empty() {
                return Err(Error::EmptyPositives);
            }
            for (pos, &c) in list.iter().enumerate() {
                if c as usize >= k {
                    return Err(Error::BadLabel {
                        label: c as usize,
                        classes: k,
                    });
                }
                if list[..pos].contains(&c) {
                    return Err(Error::InvalidConfig(format!(
                        "class {c} repeated in a label list"
                    )));
                }
            }
        }
        Ok(Self { lists, k, mode })
    }

    pub fn from_hard(assignment: &HardAssignment, k: usize) -> Result<Self> {
        Self::new(
            assignment.labels.iter().map(|&l| vec![l]).collect(),
            k,
            LabelMode::Single,
        )
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> LabelMode {
        self.mode
    }

    pub fn positives(&self, i: usize) -> &[u32] {
        &self.lists[i]
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.lists
    }

    /// First (most similar) class of every sample.
    pub fn top1(&self) -> Vec<u32> {
        self.lists.iter().map(|l| l[0]).collect()
    }

    /// Common list length, if every list has the same length.
    pub fn uniform_len(&self) -> Option<usize> {
        let first = self.lists.first()?.len();
        self.lists.iter().all(|l| l.len() == first).then_some(first)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            lists: indices.iter().map(|&i| self.lists[i].clone()).collect(),
            k: self.k,
            mode: self.mode,
        }
    }
}

fn check_dims(features: &FeatureMatrix, centroids: &CentroidSet) -> Result<()> {
    if features.cols() != centroids.dim() {
        return Err(Error::DimensionMismatch {
            expected: centroids.dim(),
            actual: features.cols(),
        });
    }
    Ok(())
}

/// Class ids sorted by descending similarity, ascending id on ties.
fn ranked(e: &[f32], centers: &FeatureMatrix) -> Vec<(u32, f64)> {
    let mut sims: Vec<(u32, f64)> = centers
        .iter_rows()
        .enumerate()
        .map(|(j, w)| (j as u32, dot(e, w)))
        .collect();
    sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sims
}

/// The `l` most similar classes of every sample.
pub fn assign_top_l(
    features: &FeatureMatrix,
    centroids: &CentroidSet,
    l: usize,
) -> Result<LabelAssignment> {
    let k = centroids.k();
    if l < 1 || l > k {
        return Err(Error::BadPositiveCount { l, k });
    }
    check_dims(features, centroids)?;
    let lists = (0..features.rows())
        .into_par_iter()
        .map(|i| {
            ranked(features.row(i), &centroids.centroids)
                .into_iter()
                .take(l)
                .map(|(c, _)| c)
                .collect()
        })
        .collect();
    Ok(LabelAssignment {
        lists,
        k,
        mode: LabelMode::TopL(l),
    })
}

/// Every class with similarity at least `tau`; samples with none above the
/// threshold keep their single most similar class.
pub fn assign_threshold(
    features: &FeatureMatrix,
    centroids: &CentroidSet,
    tau: f64,
) -> Result<LabelAssignment> {
    if !(tau > -1.0 && tau < 1.0) {
        return Err(Error::BadThreshold(tau));
    }
    check_dims(features, centroids)?;
    let lists = (0..features.rows())
        .into_par_iter()
        .map(|i| {
            let r = ranked(features.row(i), &centroids.centroids);
            let above: Vec<u32> = r
                .iter()
                .take_while(|(_, s)| *s >= tau)
                .map(|(c, _)| *c)
                .collect();
            if above.is_empty() {
                vec![r[0].0]
            } else {
                above
            }
        })
        .collect();
    Ok(LabelAssignment {
        lists,
        k: centroids.k(),
        mode: LabelMode::Threshold(tau),
    })
}

/// Writes the `LBL` format: magic `MLCDLBL1`, u32 n, u32 k, then per sample
/// a u32 length followed by that many u32 ids (all little-endian).
pub fn write_lbl<W: Write>(mut w: W, labels: &LabelAssignment) -> io::Result<()> {
    let to_u32 = |v: usize| u32::try_from(v).map_err(|_| io::Error::other("value exceeds u32"));
    w.write_all(LBL_MAGIC)?;
    w.write_all(&to_u32(labels.len())?.to_le_bytes())?;
    w.write_all(&to_u32(labels.k)?.to_le_bytes())?;
    for list in &labels.lists {
        w.write_all(&to_u32(list.len())?.to_le_bytes())?;
        for c in list {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_lbl<R: Read>(r: R) -> std::result::Result<LabelAssignment, String> {
    let mut r = BufReader::new(r);
    let mut word = [0u8; 4];
    let mut next = |r: &mut BufReader<R>, what: &str| -> std::result::Result<u32, String> {
        r.read_exact(&mut word)
            .map_err(|_| format!("truncated while reading {what}"))?;
        Ok(u32::from_le_bytes(word))
    };
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| "truncated header".to_string())?;
    if &magic != LBL_MAGIC {
        return Err("bad magic bytes (expected MLCDLBL1)".into());
    }
    let n = next(&mut r, "sample count")? as usize;
    let k = next(&mut r, "class count")? as usize;
    let mut lists = Vec::with_capacity(n.min(1 << 20));
    for i in 0..n {
        let len = next(&mut r, "list length")? as usize;
        let mut list = Vec::with_capacity(len.min(1 << 16));
        for _ in 0..len {
            list.push(next(&mut r, &format!("labels of sample {i}"))?);
        }
        lists.push(list);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| e.to_string())?;
    if !rest.is_empty() {
        return Err(format!("{} trailing bytes", rest.len()));
    }
    LabelAssignment::new(lists, k, LabelMode::External).map_err(|e| e.to_string())
}

pub fn save_lbl(path: &Path, labels: &LabelAssignment) -> Result<()> {
    write_lbl(BufWriter::new(File::create(path)?), labels)?;
    Ok(())
}

pub fn load_lbl(path: &Path) -> Result<LabelAssignment> {
    let f = File::open(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    read_lbl(f).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}
