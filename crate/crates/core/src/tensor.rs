//! Dense row-major matrices and unit-vector algebra.
//!
//! Storage is `f32`; every reduction (dot products, norms, sums) accumulates
//! in `f64` and rounds once at the end.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Norms below this are treated as the zero vector.
pub const ZERO_NORM_CUTOFF: f64 = 1e-12;

/// Allowed deviation of a row norm from 1 for matrices flagged normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

/// `n x d` row-major embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl FeatureMatrix {
    /// Builds an unnormalized matrix, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                rows,
                cols,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            rows,
            cols,
            data,
            normalized: false,
        })
    }

    /// Builds a matrix that claims unit-norm rows; the claim is checked.
    pub fn new_normalized(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        let mut m = Self::new(rows, cols, data)?;
        m.check_unit_rows()?;
        m.normalized = true;
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            normalized: false,
        }
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Converts from `f64` storage, rounding each entry once.
    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&v| v as f32).collect())
    }

    /// Returns a copy with every row scaled to unit length.
    pub fn normalize_rows(&self) -> Result<Self> {
        if self.normalized {
            return Ok(self.clone());
        }
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.iter_rows() {
            data.extend(l2_normalize(row)?);
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
            normalized: true,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Mutable row access. Clears the normalized flag, since the caller may
    /// move the row off the sphere; use [`FeatureMatrix::set_normalized`] to
    /// reassert it.
    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        self.normalized = false;
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        // chunks_exact(0) panics, and a zero-width matrix still has rows
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Re-asserts the normalized flag after in-place edits; fails if any row
    /// is off the unit sphere.
    pub fn set_normalized(&mut self) -> Result<()> {
        self.check_unit_rows()?;
        self.normalized = true;
        Ok(())
    }

    /// Copies the selected rows, preserving the normalized flag.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
            normalized: self.normalized,
        }
    }

    /// Largest `| ||row|| - 1 |` over all rows.
    pub fn max_norm_deviation(&self) -> f64 {
        self.iter_rows()
            .map(|r| (norm(r) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    fn check_unit_rows(&self) -> Result<()> {
        for (row, r) in self.iter_rows().enumerate() {
            let n = norm(r);
            if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::NotNormalized { row, norm: n });
            }
        }
        Ok(())
    }
}

/// Dense `n x c` block of similarity scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl ScoreMatrix {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[inline]
pub fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(v: &[f32]) -> f64 {
    dot(v, v).sqrt()
}

/// Scales `v` to unit L2 length.
pub fn l2_normalize(v: &[f32]) -> Result<Vec<f32>> {
    let n = norm(v);
    if n < ZERO_NORM_CUTOFF {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok(v.iter().map(|&x| (x as f64 / n) as f32).collect())
}

/// `f64` version of [`l2_normalize`], used on the training path.
pub fn l2_normalize_f64(v: &[f64]) -> Result<Vec<f64>> {
    let n = dot_f64(v, v).sqrt();
    if n < ZERO_NORM_CUTOFF {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Cosine similarities between every row of `embeddings` and every row of
/// `centers`. Both operands must be flagged normalized.
pub fn cosine_scores(embeddings: &FeatureMatrix, centers: &FeatureMatrix) -> Result<ScoreMatrix> {
    if embeddings.cols() != centers.cols() {
        return Err(Error::DimensionMismatch {
            expected: centers.cols(),
            actual: embeddings.cols(),
        });
    }
    for m in [embeddings, centers] {
        if !m.is_normalized() {
            m.check_unit_rows()?;
        }
    }
    let c = centers.rows();
    let mut data = vec![0.0f32; embeddings.rows() * c];
    if c > 0 {
        data.par_chunks_mut(c).enumerate().for_each(|(i, out)| {
            let e = embeddings.row(i);
            for (j, o) in out.iter_mut().enumerate() {
                *o = dot(e, centers.row(j)) as f32;
            }
        });
    }
    Ok(ScoreMatrix {
        rows: embeddings.rows(),
        cols: c,
        data,
    })
}

/// Backpropagates `grad` (taken w.r.t. `x / ||x||`) to `x`:
/// `(g - (y.g) y) / ||x||` with `y = x / ||x||`.
pub fn normalize_backward(x: &[f32], grad: &[f32]) -> Result<Vec<f32>> {
    if x.len() != grad.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: grad.len(),
        });
    }
    let x64: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let g64: Vec<f64> = grad.iter().map(|&v| v as f64).collect();
    Ok(normalize_backward_f64(&x64, &g64)?
        .into_iter()
        .map(|v| v as f32)
        .collect())
}

pub fn normalize_backward_f64(x: &[f64], grad: &[f64]) -> Result<Vec<f64>> {
    if x.len() != grad.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: grad.len(),
        });
    }
    let n = dot_f64(x, x).sqrt();
    if n < ZERO_NORM_CUTOFF {
        return Err(Error::ZeroVector { norm: n });
    }
    let radial: f64 = x.iter().zip(grad).map(|(xi, gi)| xi * gi).sum::<f64>() / n;
    Ok(x.iter()
        .zip(grad)
        .map(|(xi, gi)| (gi - radial * xi / n) / n)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalize_3_4_5() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-7 && (v[1] - 0.8).abs() < 1e-7);
        assert_eq!(l2_normalize(&[0.0, 0.0, 5.0]).unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn normalize_zero_vector_rejected() {
        assert!(matches!(
            l2_normalize(&[0.0, 0.0]),
            Err(Error::ZeroVector { .. })
        ));
    }

    #[test]
    fn cosine_basis() {
        let e = FeatureMatrix::new_normalized(1, 2, vec![1.0, 0.0]).unwrap();
        let w = FeatureMatrix::new_normalized(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(cosine_scores(&e, &w).unwrap().data, vec![1.0, 0.0]);

        let e = FeatureMatrix::new_normalized(1, 2, vec![0.6, 0.8]).unwrap();
        let w = FeatureMatrix::new_normalized(1, 2, vec![1.0, 0.0]).unwrap();
        assert!((cosine_scores(&e, &w).unwrap().data[0] - 0.6).abs() < 1e-7);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let e = FeatureMatrix::new_normalized(1, 2, vec![1.0, 0.0]).unwrap();
        let w = FeatureMatrix::new_normalized(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            cosine_scores(&e, &w),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn self_similarity_has_unit_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f32> = (0..40 * 7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = FeatureMatrix::new(40, 7, data)
            .unwrap()
            .normalize_rows()
            .unwrap();
        assert!(m.max_norm_deviation() < 1e-5);
        let s = cosine_scores(&m, &m).unwrap();
        for i in 0..40 {
            assert!((s.get(i, i) - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn backward_tangential_and_radial() {
        assert_eq!(
            normalize_backward(&[2.0, 0.0], &[0.0, 1.0]).unwrap(),
            vec![0.0, 0.5]
        );
        assert_eq!(
            normalize_backward(&[2.0, 0.0], &[1.0, 0.0]).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(normalize_backward(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        // Oracle: central differences of v -> a . (v / |v|) + 0.5 |v/|v| - b|^2
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let d = rng.random_range(2..9);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = |v: &[f64]| {
                let n = v.iter().map(|t| t * t).sum::<f64>().sqrt();
                let y: Vec<f64> = v.iter().map(|t| t / n).collect();
                let lin: f64 = y.iter().zip(&a).map(|(p, q)| p * q).sum();
                let quad: f64 = y.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum();
                lin + 0.5 * quad
            };
            let n = x.iter().map(|t| t * t).sum::<f64>().sqrt();
            let y: Vec<f64> = x.iter().map(|t| t / n).collect();
            let g: Vec<f64> = (0..d).map(|k| a[k] + (y[k] - b[k])).collect();
            let analytic = normalize_backward_f64(&x, &g).unwrap();
            let h = 1e-5;
            for k in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (f(&xp) - f(&xm)) / (2.0 * h);
                let denom = analytic[k].abs().max(fd.abs()).max(1e-3);
                assert!(
                    (analytic[k] - fd).abs() / denom < 1e-4,
                    "{} vs {}",
                    analytic[k],
                    fd
                );
            }
            let ortho: f64 = analytic.iter().zip(&x).map(|(p, q)| p * q).sum();
            let scale = analytic.iter().map(|t| t * t).sum::<f64>().sqrt() * n;
            assert!(ortho.abs() <= 1e-6 * scale.max(1e-300));
        }
    }

    #[test]
    fn flagged_normalized_rejects_off_sphere_rows() {
        assert!(matches!(
            FeatureMatrix::new_normalized(1, 2, vec![1.0, 1.0]),
            Err(Error::NotNormalized { row: 0, .. })
        ));
        assert!(matches!(
            FeatureMatrix::new(1, 2, vec![1.0, f32::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
    }
}
