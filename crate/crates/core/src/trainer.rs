//! Desk-scale discrimination training.
//!
//! A single linear map followed by L2 normalization stands in for the image
//! encoder. Each step encodes a mini-batch, samples the active class set,
//! runs the configured loss and applies an optimizer step to the encoder and
//! the active center rows. Centers are projected back onto the unit sphere
//! after every update.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::labeling::LabelAssignment;
use crate::loss::{loss_forward_backward_f64, BatchLoss, LossConfig};
use crate::sampler::ClassSampler;
use crate::tensor::{l2_normalize_f64, normalize_backward_f64, FeatureMatrix};

/// Default warm-up length of the large-scale recipe. Toy runs override it.
pub const DEFAULT_WARMUP_STEPS: u64 = 2000;

const STREAM_ENCODER_INIT: u64 = 0;
const STREAM_BATCHES: u64 = 1;
const STREAM_SAMPLER: u64 = 2;
const STREAM_CENTER_INIT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    SgdMomentum,
    #[default]
    AdamW,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" | "sgd_momentum" => Ok(Self::SgdMomentum),
            "adamw" => Ok(Self::AdamW),
            other => Err(Error::InvalidConfig(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SgdMomentum => "sgd_momentum",
            Self::AdamW => "adamw",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CenterInit {
    /// Start from cluster prototypes mapped through the initial encoder.
    #[default]
    Warm,
    /// Independent random unit rows.
    Random,
}

impl FromStr for CenterInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "warm" => Ok(Self::Warm),
            "random" => Ok(Self::Random),
            other => Err(Error::InvalidConfig(format!(
                "unknown center init `{other}`"
            ))),
        }
    }
}

impl fmt::Display for CenterInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Warm => "warm",
            Self::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub batch_size: usize,
    pub steps: u64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Linear warm-up from `lr / warmup_steps` to `lr`; 0 disables it.
    pub warmup_steps: u64,
    pub log_interval: u64,
    pub seed: u64,
    pub embed_dim: usize,
    pub center_init: CenterInit,
    /// Number of leading samples used for the logged metrics.
    pub monitor_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            batch_size: 64,
            steps: 1000,
            learning_rate: 1e-3,
            weight_decay: 0.2,
            optimizer: OptimizerKind::AdamW,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: DEFAULT_WARMUP_STEPS,
            log_interval: 10,
            seed: 0,
            embed_dim: 16,
            center_init: CenterInit::Warm,
            monitor_size: 1024,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.steps < 1 {
            return bad("steps must be at least 1");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be a non-negative number");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return bad("momentum and betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.embed_dim < 1 {
            return bad("embed_dim must be at least 1");
        }
        if self.log_interval < 1 {
            return bad("log_interval must be at least 1");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            self.learning_rate
        } else {
            self.learning_rate * ((step + 1) as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

/// Parameters, optimizer moments, step counter and sampler stream.
#[derive(Debug, Clone)]
pub struct TrainState {
    /// `d_in x d_emb`, row-major.
    pub encoder: FeatureMatrix,
    /// `k x d_emb`, unit rows.
    pub centers: FeatureMatrix,
    encoder_m: Vec<f32>,
    encoder_v: Vec<f32>,
    centers_m: Vec<f32>,
    centers_v: Vec<f32>,
    pub step: u64,
    sampler: ClassSampler,
}

impl PartialEq for TrainState {
    fn eq(&self, other: &Self) -> bool {
        self.encoder == other.encoder
            && self.centers == other.centers
            && self.encoder_m == other.encoder_m
            && self.encoder_v == other.encoder_v
            && self.centers_m == other.centers_m
            && self.centers_v == other.centers_v
            && self.step == other.step
            && self.sampler.word_pos() == other.sampler.word_pos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub loss: f64,
    pub mean_si: f64,
    pub mean_sj: f64,
    pub grad_norm_encoder: f64,
    pub grad_norm_centers: f64,
    pub active_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub step: u64,
    /// Loss on the monitor subset against every class.
    pub loss: f64,
    pub mean_si: f64,
    pub mean_sj: f64,
    pub grad_norm_encoder: f64,
    pub grad_norm_centers: f64,
    /// Loss of the mini-batch that produced this step; `None` at step 0.
    pub batch_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricHistory {
    pub records: Vec<MetricRecord>,
}

impl MetricHistory {
    pub const CSV_HEADER: &'static str =
        "step,loss,mean_si,mean_sj,grad_norm_encoder,grad_norm_centers,batch_loss";

    pub fn last(&self) -> Option<&MetricRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.step,
                r.loss,
                r.mean_si,
                r.mean_sj,
                r.grad_norm_encoder,
                r.grad_norm_centers,
                r.batch_loss.map_or_else(String::new, |v| v.to_string())
            ));
        }
        out
    }
}

/// Gradients of the full-class loss at the current state.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: BatchLoss,
    /// `d_in x d_emb`.
    pub encoder: Vec<f64>,
    /// `k x d_emb`; rows of inactive classes are zero.
    pub centers: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Semi-orthogonal `d_in x d_emb` matrix from the QR factorization of a
/// seeded Gaussian matrix.
fn orthogonal_init(d_in: usize, d_emb: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let tall = d_in >= d_emb;
    let (r, c) = if tall { (d_in, d_emb) } else { (d_emb, d_in) };
    let g = DMatrix::<f64>::from_fn(r, c, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    // fix the sign ambiguity of Householder QR so the result is a function of
    // the Gaussian draw alone
    let rdiag = qr.r().diagonal();
    for (j, d) in rdiag.iter().enumerate() {
        if *d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = vec![0.0; d_in * d_emb];
    for i in 0..d_in {
        for j in 0..d_emb {
            out[i * d_emb + j] = if tall { q[(i, j)] } else { q[(j, i)] };
        }
    }
    out
}

fn random_unit_rows(k: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(k * d);
    for _ in 0..k {
        let row: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        out.extend(l2_normalize_f64(&row)?);
    }
    Ok(out)
}

/// Normalized mean input feature of every class under the top-1 labels;
/// classes with no members get `None`.
pub fn class_prototypes(
    features: &FeatureMatrix,
    labels: &LabelAssignment,
) -> Vec<Option<Vec<f64>>> {
    let d = features.cols();
    let mut sums = vec![vec![0.0f64; d]; labels.k()];
    let mut counts = vec![0usize; labels.k()];
    for (i, &l) in labels.top1().iter().enumerate() {
        let f = features.row(i);
        let norm = f.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        for (s, &v) in sums[l as usize].iter_mut().zip(f) {
            *s += v as f64 / norm;
        }
        counts[l as usize] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| {
            if c == 0 {
                None
            } else {
                l2_normalize_f64(&s).ok()
            }
        })
        .collect()
}

impl TrainState {
    /// Fresh state for `k` classes on `d_in`-dimensional inputs.
    ///
    /// `prototypes` (input space, one per class) seeds the warm start: each
    /// center becomes the normalized image of its prototype under the initial
    /// encoder. Missing prototypes, or [`CenterInit::Random`], give random
    /// unit rows.
    pub fn new(
        d_in: usize,
        k: usize,
        config: &TrainConfig,
        prototypes: Option<&[Option<Vec<f64>>]>,
    ) -> Result<Self> {
        config.validate()?;
        if d_in == 0 || k == 0 {
            return Err(Error::InvalidConfig(
                "input dimension and class count must be positive".into(),
            ));
        }
        let d = config.embed_dim;
        let mut enc_rng = ChaCha8Rng::seed_from_u64(config.seed);
        enc_rng.set_stream(STREAM_ENCODER_INIT);
        let encoder = orthogonal_init(d_in, d, &mut enc_rng);

        let mut center_rng = ChaCha8Rng::seed_from_u64(config.seed);
        center_rng.set_stream(STREAM_CENTER_INIT);
        let mut centers = random_unit_rows(k, d, &mut center_rng)?;
        if config.center_init == CenterInit::Warm {
            if let Some(protos) = prototypes {
                if protos.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        actual: protos.len(),
                    });
                }
                for (j, p) in protos.iter().enumerate() {
                    let Some(p) = p else { continue };
                    if p.len() != d_in {
                        return Err(Error::DimensionMismatch {
                            expected: d_in,
                            actual: p.len(),
                        });
                    }
                    let mut z = vec![0.0; d];
                    for (a, &pa) in p.iter().enumerate() {
                        for (zb, w) in z.iter_mut().zip(&encoder[a * d..(a + 1) * d]) {
                            *zb += pa * w;
                        }
                    }
                    if let Ok(u) = l2_normalize_f64(&z) {
                        centers[j * d..(j + 1) * d].copy_from_slice(&u);
                    }
                }
            }
        }

        let encoder = FeatureMatrix::from_f64(d_in, d, &encoder)?;
        let mut centers = FeatureMatrix::from_f64(k, d, &centers)?;
        centers.set_normalized()?;
        Ok(Self {
            encoder_m: vec![0.0; d_in * d],
            encoder_v: vec![0.0; d_in * d],
            centers_m: vec![0.0; k * d],
            centers_v: vec![0.0; k * d],
            encoder,
            centers,
            step: 0,
            sampler: ClassSampler::with_stream(config.seed, STREAM_SAMPLER),
        })
    }

    /// Restores a state from checkpointed parameters with zeroed moments.
    pub fn from_parameters(
        encoder: FeatureMatrix,
        centers: FeatureMatrix,
        step: u64,
        seed: u64,
    ) -> Result<Self> {
        if encoder.cols() != centers.cols() {
            return Err(Error::DimensionMismatch {
                expected: encoder.cols(),
                actual: centers.cols(),
            });
        }
        let centers = if centers.is_normalized() {
            centers
        } else {
            centers.normalize_rows()?
        };
        let (de, dc) = (encoder.as_slice().len(), centers.as_slice().len());
        Ok(Self {
            encoder,
            centers,
            encoder_m: vec![0.0; de],
            encoder_v: vec![0.0; de],
            centers_m: vec![0.0; dc],
            centers_v: vec![0.0; dc],
            step,
            sampler: ClassSampler::with_stream(seed, STREAM_SAMPLER),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.centers.rows()
    }

    /// Pre-normalization encoder outputs, `b x d_emb`.
    fn project(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.cols(),
            });
        }
        let d = self.embed_dim();
        let w = self.encoder.as_slice();
        let mut z = vec![0.0f64; x.rows() * d];
        for (i, row) in x.iter_rows().enumerate() {
            let out = &mut z[i * d..(i + 1) * d];
            for (a, &xa) in row.iter().enumerate() {
                let xa = xa as f64;
                for (o, &wv) in out.iter_mut().zip(&w[a * d..(a + 1) * d]) {
                    *o += xa * wv as f64;
                }
            }
        }
        Ok(z)
    }

    /// Normalized embeddings of raw inputs.
    pub fn embed(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        let d = self.embed_dim();
        let z = self.project(x)?;
        let mut e = Vec::with_capacity(z.len());
        for row in z.chunks_exact(d) {
            e.extend(l2_normalize_f64(row)?);
        }
        let mut m = FeatureMatrix::from_f64(x.rows(), d, &e)?;
        m.set_normalized()?;
        Ok(m)
    }

    /// Loss and parameter gradients on `x` with the given active classes.
    fn gradients_on(
        &self,
        x: &FeatureMatrix,
        labels: &[&[u32]],
        active: &[u32],
        loss: &LossConfig,
    ) -> Result<Gradients> {
        let d = self.embed_dim();
        let k = self.num_classes();
        if labels.len() != x.rows() {
            return Err(Error::DimensionMismatch {
                expected: x.rows(),
                actual: labels.len(),
            });
        }
        let z = self.project(x)?;
        let mut e = Vec::with_capacity(z.len());
        for row in z.chunks_exact(d) {
            e.extend(l2_normalize_f64(row)?);
        }
        let mut w = Vec::with_capacity(active.len() * d);
        for &c in active {
            w.extend(self.centers.row(c as usize).iter().map(|&v| v as f64));
        }
        let targets = labels
            .iter()
            .map(|list| {
                list.iter()
                    .map(|&c| {
                        if c as usize >= k {
                            return Err(Error::BadLabel {
                                label: c as usize,
                                classes: k,
                            });
                        }
                        active.binary_search(&c).map_err(|_| {
                            Error::InvalidConfig(format!(
                                "positive class {c} missing from active set"
                            ))
                        })
                    })
                    .collect::<Result<Vec<usize>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let out = loss_forward_backward_f64(&e, &w, d, &targets, loss)?;

        // back through normalization and the linear map
        let d_in = self.input_dim();
        let mut grad_encoder = vec![0.0f64; d_in * d];
        for (i, row) in x.iter_rows().enumerate() {
            let gz = normalize_backward_f64(
                &z[i * d..(i + 1) * d],
                &out.grad_embeddings[i * d..(i + 1) * d],
            )?;
            for (a, &xa) in row.iter().enumerate() {
                let xa = xa as f64;
                for (g, gzb) in grad_encoder[a * d..(a + 1) * d].iter_mut().zip(&gz) {
                    *g += xa * gzb;
                }
            }
        }
        let mut grad_centers = vec![0.0f64; k * d];
        for (col, &c) in active.iter().enumerate() {
            grad_centers[c as usize * d..(c as usize + 1) * d]
                .copy_from_slice(&out.grad_centers[col * d..(col + 1) * d]);
        }
        Ok(Gradients {
            loss: out,
            encoder: grad_encoder,
            centers: grad_centers,
        })
    }

    /// Full-class loss and gradients on a batch, without updating anything.
    pub fn evaluate(
        &self,
        x: &FeatureMatrix,
        labels: &[&[u32]],
        loss: &LossConfig,
    ) -> Result<Gradients> {
        let all: Vec<u32> = (0..self.num_classes() as u32).collect();
        let cfg = LossConfig {
            ratio: 1.0,
            ..*loss
        };
        self.gradients_on(x, labels, &all, &cfg)
    }

    /// One optimization step on a mini-batch of raw inputs and their
    /// positive class lists.
    pub fn train_step(
        &mut self,
        x: &FeatureMatrix,
        labels: &[&[u32]],
        config: &TrainConfig,
    ) -> Result<StepMetrics> {
        let k = self.num_classes();
        let d = self.embed_dim();
        let batch_positives: Vec<u32> = labels.iter().flat_map(|l| l.iter().copied()).collect();
        let sampled = self
            .sampler
            .sample_classes(k, &batch_positives, config.loss.ratio)?;
        let grads = self.gradients_on(x, labels, &sampled.class_ids, &config.loss)?;
        let step_id = self.step + 1;
        let finite = grads.loss.value.is_finite()
            && grads.encoder.iter().all(|g| g.is_finite())
            && grads.centers.iter().all(|g| g.is_finite());
        if !finite {
            return Err(Error::NonFiniteLoss { step: step_id });
        }

        let lr = config.learning_rate_at(self.step);
        let t = step_id as i32;
        let wd = config.weight_decay;

        let encoder_params: Vec<usize> = (0..self.encoder.as_slice().len()).collect();
        let mut encoder_data = self.encoder.as_slice().to_vec();
        update_params(
            &mut encoder_data,
            &grads.encoder,
            &encoder_params,
            &mut self.encoder_m,
            &mut self.encoder_v,
            config,
            lr,
            wd,
            t,
        );
        self.encoder = FeatureMatrix::new(self.input_dim(), d, encoder_data)?;

        let center_params: Vec<usize> = sampled
            .class_ids
            .iter()
            .flat_map(|&c| (c as usize * d)..(c as usize + 1) * d)
            .collect();
        let mut center_data = self.centers.as_slice().to_vec();
        let before = center_data.clone();
        update_params(
            &mut center_data,
            &grads.centers,
            &center_params,
            &mut self.centers_m,
            &mut self.centers_v,
            config,
            lr,
            0.0,
            t,
        );
        // project changed rows back onto the sphere
        for &c in &sampled.class_ids {
            let r = c as usize * d..(c as usize + 1) * d;
            if center_data[r.clone()] != before[r.clone()] {
                let row: Vec<f64> = center_data[r.clone()].iter().map(|&v| v as f64).collect();
                let unit =
                    l2_normalize_f64(&row).map_err(|_| Error::NonFiniteLoss { step: step_id })?;
                for (dst, u) in center_data[r].iter_mut().zip(unit) {
                    *dst = u as f32;
                }
            }
        }
        let mut centers = FeatureMatrix::new(k, d, center_data)?;
        centers.set_normalized()?;
        self.centers = centers;
        self.step = step_id;

        Ok(StepMetrics {
            step: step_id,
            loss: grads.loss.value,
            mean_si: grads.loss.mean_si,
            mean_sj: grads.loss.mean_sj,
            grad_norm_encoder: norm(&grads.encoder),
            grad_norm_centers: norm(&grads.centers),
            active_classes: sampled.class_ids.len(),
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn update_params(
    params: &mut [f32],
    grads: &[f64],
    indices: &[usize],
    m: &mut [f32],
    v: &mut [f32],
    config: &TrainConfig,
    lr: f64,
    weight_decay: f64,
    t: i32,
) {
    match config.optimizer {
        OptimizerKind::AdamW => {
            let (b1, b2) = (config.beta1, config.beta2);
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            for &i in indices {
                let g = grads[i];
                let mi = b1 * m[i] as f64 + (1.0 - b1) * g;
                let vi = b2 * v[i] as f64 + (1.0 - b2) * g * g;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let p = params[i] as f64;
                let step = (mi / c1) / ((vi / c2).sqrt() + config.eps) + weight_decay * p;
                params[i] = (p - lr * step) as f32;
            }
        }
        OptimizerKind::SgdMomentum => {
            for &i in indices {
                let vel = config.momentum * m[i] as f64 + grads[i];
                m[i] = vel as f32;
                let p = params[i] as f64;
                params[i] = (p - lr * (vel + weight_decay * p)) as f32;
            }
        }
    }
}

fn monitor_record(
    state: &TrainState,
    x: &FeatureMatrix,
    labels: &[&[u32]],
    config: &TrainConfig,
    batch_loss: Option<f64>,
) -> Result<MetricRecord> {
    let g = state.evaluate(x, labels, &config.loss)?;
    if !g.loss.value.is_finite() {
        return Err(Error::NonFiniteLoss { step: state.step });
    }
    Ok(MetricRecord {
        step: state.step,
        loss: g.loss.value,
        mean_si: g.loss.mean_si,
        mean_sj: g.loss.mean_sj,
        grad_norm_encoder: norm(&g.encoder),
        grad_norm_centers: norm(&g.centers),
        batch_loss,
    })
}

/// Runs `config.steps` steps over seeded shuffled mini-batches.
///
/// `prototypes` seeds warm-started centers (see [`TrainState::new`]); when
/// `None` and the config asks for a warm start, the normalized per-class
/// means of `features` under the top-1 labels are used.
pub fn train(
    features: &FeatureMatrix,
    labels: &LabelAssignment,
    config: &TrainConfig,
    prototypes: Option<&[Option<Vec<f64>>]>,
) -> Result<(TrainState, MetricHistory)> {
    config.validate()?;
    let n = features.rows();
    if n == 0 {
        return Err(Error::InvalidConfig("dataset is empty".into()));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    let own;
    let prototypes = match prototypes {
        Some(p) => Some(p),
        None if config.center_init == CenterInit::Warm => {
            own = class_prototypes(features, labels);
            Some(own.as_slice())
        }
        None => None,
    };
    let mut state = TrainState::new(features.cols(), labels.k(), config, prototypes)?;

    let monitor_idx: Vec<usize> = (0..n.min(config.monitor_size.max(1))).collect();
    let monitor_x = features.select_rows(&monitor_idx);
    let monitor_labels: Vec<&[u32]> = monitor_idx.iter().map(|&i| labels.positives(i)).collect();

    let mut history = MetricHistory::default();
    history.records.push(monitor_record(
        &state,
        &monitor_x,
        &monitor_labels,
        config,
        None,
    )?);

    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order_rng.set_stream(STREAM_BATCHES);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut order_rng);
    let mut cursor = 0;
    let b = config.batch_size.min(n);

    for step in 1..=config.steps {
        let mut idx = Vec::with_capacity(b);
        while idx.len() < b {
            if cursor == n {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let x = features.select_rows(&idx);
        let batch_labels: Vec<&[u32]> = idx.iter().map(|&i| labels.positives(i)).collect();
        let metrics = state.train_step(&x, &batch_labels, config)?;
        if step % config.log_interval == 0 || step == config.steps {
            history.records.push(monitor_record(
                &state,
                &monitor_x,
                &monitor_labels,
                config,
                Some(metrics.loss),
            )?);
        }
    }
    Ok((state, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::LabelMode;
    use crate::loss::LossVariant;

    fn toy() -> (FeatureMatrix, LabelAssignment) {
        let rows: Vec<Vec<f32>> = (0..16)
            .map(|i| {
                let t = i as f32 * 0.37;
                vec![t.cos(), t.sin(), (2.0 * t).cos(), 0.5]
            })
            .collect();
        let labels = (0..16)
            .map(|i| vec![(i % 4) as u32, ((i + 1) % 4) as u32])
            .collect();
        (
            FeatureMatrix::from_rows(&rows).unwrap(),
            LabelAssignment::new(labels, 4, LabelMode::External).unwrap(),
        )
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            loss: LossConfig {
                variant: LossVariant::Mlcd,
                margin: 0.3,
                scale: 8.0,
                ratio: 0.5,
            },
            batch_size: 4,
            steps: 5,
            learning_rate: 1e-2,
            warmup_steps: 0,
            embed_dim: 3,
            log_interval: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn orthogonal_init_has_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = orthogonal_init(6, 4, &mut rng);
        for a in 0..4 {
            for b in 0..4 {
                let d: f64 = (0..6).map(|i| w[i * 4 + a] * w[i * 4 + b]).sum();
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (x, labels) = toy();
        let mut c = cfg();
        c.learning_rate = 0.0;
        let mut state = TrainState::new(4, 4, &c, None).unwrap();
        let before = (state.encoder.clone(), state.centers.clone());
        let lists: Vec<&[u32]> = (0..4).map(|i| labels.positives(i)).collect();
        state
            .train_step(&x.select_rows(&[0, 1, 2, 3]), &lists, &c)
            .unwrap();
        assert_eq!(state.encoder, before.0);
        assert_eq!(state.centers, before.1);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn history_bookkeeping() {
        let (x, labels) = toy();
        let mut c = cfg();
        c.steps = 1;
        let (_, h) = train(&x, &labels, &c, None).unwrap();
        assert_eq!(h.records.len(), 2);
        assert_eq!(h.records[0].batch_loss, None);
        c.steps = 5;
        let (_, h) = train(&x, &labels, &c, None).unwrap();
        let steps: Vec<u64> = h.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 2, 4, 5]);
        assert!(h.to_csv().lines().count() == 5);
    }

    #[test]
    fn only_active_centers_move_and_stay_unit() {
        let (x, labels) = toy();
        let mut c = cfg();
        c.loss.ratio = 0.01;
        let mut state = TrainState::new(4, 4, &c, None).unwrap();
        let before = state.centers.clone();
        let lists: Vec<&[u32]> = vec![labels.positives(0), labels.positives(4)];
        state
            .train_step(&x.select_rows(&[0, 4]), &lists, &c)
            .unwrap();
        // positives {0, 1} plus exactly one sampled negative out of {2, 3}
        let moved: Vec<usize> = (0..4)
            .filter(|&j| state.centers.row(j) != before.row(j))
            .collect();
        assert!(moved.len() <= 3 && moved.contains(&0) && moved.contains(&1));
        assert!(state.centers.max_norm_deviation() < 1e-5);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        c.batch_size = 1;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.steps = 0;
        assert!(c.validate().is_err());
        assert!("sgd".parse::<OptimizerKind>().is_ok());
        assert!("rmsprop".parse::<OptimizerKind>().is_err());
    }

    #[test]
    fn warmup_schedule() {
        let mut c = cfg();
        c.warmup_steps = 4;
        c.learning_rate = 1.0;
        let lrs: Vec<f64> = (0..6).map(|s| c.learning_rate_at(s)).collect();
        assert_eq!(lrs, vec![0.25, 0.5, 0.75, 1.0, 1.0, 1.0]);
    }
}
