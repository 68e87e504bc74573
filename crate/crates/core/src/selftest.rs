//! Built-in numerical self-checks run by the `selftest` command.
//!
//! Each suite compares the library against a naive reference on seeded
//! random instances and reports the largest error seen.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::loss::{
    loss_cd, loss_forward_backward_f64, loss_mlc, loss_mlcd, margin_value, LossConfig, LossOutput,
    LossVariant,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// Suite-specific failures beyond the error bound.
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_error < self.tolerance && self.failures.is_empty()
    }
}

fn random_mask(rng: &mut ChaCha8Rng, max_pos: usize, max_neg: usize) -> Vec<bool> {
    let p = rng.random_range(1..=max_pos);
    let n = rng.random_range(1..=max_neg);
    let mut mask: Vec<bool> = (0..p + n).map(|i| i < p).collect();
    for i in (1..mask.len()).rev() {
        mask.swap(i, rng.random_range(0..=i));
    }
    mask
}

/// Two-term disambiguated loss against the expanded single-log form
/// `log(1 + Σ_jΣ_i e^{s_j - s_i} + Σ_j e^{s_j} + Σ_i e^{-s_i})`.
pub fn factorization_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error = 0.0f64;
    for _ in 0..cases {
        let mask = random_mask(&mut rng, 8, 64);
        let s: Vec<f64> = mask.iter().map(|_| rng.random_range(-5.0..5.0)).collect();
        let pos: Vec<f64> = s.iter().zip(&mask).filter(|p| *p.1).map(|p| *p.0).collect();
        let neg: Vec<f64> = s
            .iter()
            .zip(&mask)
            .filter(|p| !*p.1)
            .map(|p| *p.0)
            .collect();
        let mut total = 1.0;
        for &sj in &neg {
            for &si in &pos {
                total += (sj - si).exp();
            }
            total += sj.exp();
        }
        for &si in &pos {
            total += (-si).exp();
        }
        let expanded = total.ln();
        max_error = max_error.max((expanded - loss_mlcd(&s, &mask)?.value).abs());
    }
    Ok(SuiteReport {
        name: "factorization",
        cases,
        max_error,
        tolerance: 1e-9,
        failures: Vec::new(),
    })
}

/// MLC must not change when every score is shifted by the same constant;
/// MLCD must change on a fixed witness.
pub fn shift_invariance_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error = 0.0f64;
    for _ in 0..cases {
        let mask = random_mask(&mut rng, 8, 32);
        let s: Vec<f64> = mask.iter().map(|_| rng.random_range(-5.0..5.0)).collect();
        let c: f64 = rng.random_range(-10.0..10.0);
        let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
        max_error =
            max_error.max((loss_mlc(&s, &mask)?.value - loss_mlc(&shifted, &mask)?.value).abs());
    }
    let mut failures = Vec::new();
    let mask = [true, false];
    let base = loss_mlcd(&[0.4, 0.1], &mask)?.value;
    let moved = loss_mlcd(&[1.4, 1.1], &mask)?.value;
    if (moved - base).abs() <= 0.1 {
        failures.push(format!(
            "MLCD shift witness changed by only {}",
            (moved - base).abs()
        ));
    }
    Ok(SuiteReport {
        name: "shift-invariance",
        cases,
        max_error,
        tolerance: 1e-6,
        failures,
    })
}

fn scalar_loss(
    variant: LossVariant,
    logits: &[f64],
    mask: &[bool],
    primary: usize,
) -> Result<LossOutput> {
    match variant {
        LossVariant::Cd => loss_cd(logits, primary),
        LossVariant::Mlc => loss_mlc(logits, mask),
        LossVariant::Mlcd => loss_mlcd(logits, mask),
    }
}

/// Mean loss as a function of the raw cosine matrix (`b x c`).
fn loss_from_cosines(
    cos: &[f64],
    c: usize,
    targets: &[Vec<usize>],
    cfg: &LossConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (i, t) in targets.iter().enumerate() {
        let row = &cos[i * c..(i + 1) * c];
        let pos_cols: &[usize] = if cfg.variant == LossVariant::Cd {
            &t[..1]
        } else {
            t
        };
        let mask: Vec<bool> = (0..c).map(|j| pos_cols.contains(&j)).collect();
        let logits: Vec<f64> = row
            .iter()
            .zip(&mask)
            .map(|(&s, &p)| cfg.scale * if p { margin_value(s, cfg.margin) } else { s })
            .collect();
        total += scalar_loss(cfg.variant, &logits, &mask, t[0])?.value;
    }
    Ok(total / targets.len() as f64)
}

fn unit_rows(rng: &mut ChaCha8Rng, rows: usize, d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * d);
    for _ in 0..rows {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        out.extend(v.iter().map(|x| x / n));
    }
    out
}

pub const FD_STEP: f64 = 1e-4;
/// Denominator floor of the relative error.
pub const FD_REL_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_REL_FLOOR)
}

/// One random finite-difference instance.
#[derive(Debug, Clone)]
pub struct GradCase {
    pub embeddings: Vec<f64>,
    pub centers: Vec<f64>,
    pub dim: usize,
    pub targets: Vec<Vec<usize>>,
}

/// Draws `b <= 4`, `c <= 16`, `d <= 8` unit-row instances, rejecting any
/// whose positive cosines come within 0.05 of ±1 (the margin has a kink and
/// an infinite slope there).
pub fn random_grad_case(rng: &mut ChaCha8Rng) -> GradCase {
    loop {
        let b = rng.random_range(1..=4);
        let c = rng.random_range(2..=16);
        let d = rng.random_range(2..=8);
        let e = unit_rows(rng, b, d);
        let w = unit_rows(rng, c, d);
        let targets: Vec<Vec<usize>> = (0..b)
            .map(|_| {
                let l = rng.random_range(1..=(c - 1).min(3));
                let mut cols: Vec<usize> = (0..c).collect();
                for i in (1..c).rev() {
                    cols.swap(i, rng.random_range(0..=i));
                }
                cols.truncate(l);
                cols
            })
            .collect();
        let near_pole = targets.iter().enumerate().any(|(i, t)| {
            t.iter().any(|&j| {
                let s: f64 = (0..d).map(|a| e[i * d + a] * w[j * d + a]).sum();
                1.0 - s.abs() < 0.05
            })
        });
        if !near_pole {
            return GradCase {
                embeddings: e,
                centers: w,
                dim: d,
                targets,
            };
        }
    }
}

/// Largest relative error between analytic and central-difference gradients
/// for embeddings, centers and raw cosines.
pub fn gradient_errors(case: &GradCase, cfg: &LossConfig) -> Result<[f64; 3]> {
    let d = case.dim;
    let c = case.centers.len() / d;
    let b = case.embeddings.len() / d;
    let out = loss_forward_backward_f64(&case.embeddings, &case.centers, d, &case.targets, cfg)?;
    let value = |e: &[f64], w: &[f64]| -> Result<f64> {
        Ok(loss_forward_backward_f64(e, w, d, &case.targets, cfg)?.value)
    };
    let h = FD_STEP;

    let mut err_e = 0.0f64;
    let mut e = case.embeddings.clone();
    for idx in 0..e.len() {
        let orig = e[idx];
        e[idx] = orig + h;
        let up = value(&e, &case.centers)?;
        e[idx] = orig - h;
        let down = value(&e, &case.centers)?;
        e[idx] = orig;
        err_e = err_e.max(relative_error(
            out.grad_embeddings[idx],
            (up - down) / (2.0 * h),
        ));
    }

    let mut err_w = 0.0f64;
    let mut w = case.centers.clone();
    for idx in 0..w.len() {
        let orig = w[idx];
        w[idx] = orig + h;
        let up = value(&case.embeddings, &w)?;
        w[idx] = orig - h;
        let down = value(&case.embeddings, &w)?;
        w[idx] = orig;
        err_w = err_w.max(relative_error(
            out.grad_centers[idx],
            (up - down) / (2.0 * h),
        ));
    }

    let mut cos = vec![0.0f64; b * c];
    for i in 0..b {
        for j in 0..c {
            cos[i * c + j] = (0..d)
                .map(|a| case.embeddings[i * d + a] * case.centers[j * d + a])
                .sum();
        }
    }
    let mut err_s = 0.0f64;
    for idx in 0..cos.len() {
        let orig = cos[idx];
        cos[idx] = orig + h;
        let up = loss_from_cosines(&cos, c, &case.targets, cfg)?;
        cos[idx] = orig - h;
        let down = loss_from_cosines(&cos, c, &case.targets, cfg)?;
        cos[idx] = orig;
        err_s = err_s.max(relative_error(
            out.grad_scores[idx],
            (up - down) / (2.0 * h),
        ));
    }
    Ok([err_e, err_w, err_s])
}

/// Scale used by the gradient suite. The central-difference truncation error
/// grows like `h^2 * scale^3`, which at scale 32 is already ~1e-4.
pub const FD_SCALE: f64 = 4.0;

pub fn gradient_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error = 0.0f64;
    let mut total = 0;
    for _ in 0..cases {
        let case = random_grad_case(&mut rng);
        for variant in [LossVariant::Cd, LossVariant::Mlc, LossVariant::Mlcd] {
            for margin in [0.0, 0.3] {
                let cfg = LossConfig {
                    variant,
                    margin,
                    scale: FD_SCALE,
                    ratio: 1.0,
                };
                for err in gradient_errors(&case, &cfg)? {
                    max_error = max_error.max(err);
                }
                total += 1;
            }
        }
    }
    Ok(SuiteReport {
        name: "finite-difference",
        cases: total,
        max_error,
        tolerance: 1e-4,
        failures: Vec::new(),
    })
}

pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        factorization_suite(10_000, seed)?,
        shift_invariance_suite(1_000, seed.wrapping_add(1))?,
        gradient_suite(100, seed.wrapping_add(2))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_small_runs() {
        for r in [
            factorization_suite(200, 1).unwrap(),
            shift_invariance_suite(200, 2).unwrap(),
            gradient_suite(5, 3).unwrap(),
        ] {
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-6, 2e-6) - 1e-3).abs() < 1e-12);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
    }
}
