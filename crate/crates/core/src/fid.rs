//! Fréchet distance between Gaussian fits of feature sets, plus the
//! mean-realignment demonstration showing how far FID can be pushed down
//! without improving the images.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scene::ImageBuffer;

/// Tolerance for symmetry and for negative eigenvalues (clipped to zero).
pub const PSD_TOLERANCE: f64 = 1e-9;
/// Ridge added to covariances estimated from fewer samples than dimensions.
pub const RIDGE: f64 = 1e-6;
/// Side of the downsampled grayscale feature image.
pub const FEATURE_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl FeatureStats {
    /// Sample mean and unbiased covariance of row features. When there are
    /// fewer samples than dimensions the covariance gets `RIDGE · I`.
    pub fn from_features(features: &[Vec<f64>]) -> Result<Self> {
        let n = features.len();
        let d = features.first().map(Vec::len).ok_or(Error::EmptyMask)?;
        if features.iter().any(|f| f.len() != d) {
            return Err(Error::Dimension("features differ in length".into()));
        }
        let mut mean = DVector::zeros(d);
        for f in features {
            mean += DVector::from_column_slice(f);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for f in features {
            let c = DVector::from_column_slice(f) - &mean;
            cov.ger(1.0, &c, &c, 1.0);
        }
        if n > 1 {
            cov /= (n - 1) as f64;
        }
        if n < d {
            warn!("{n} samples for {d} feature dimensions; regularizing the covariance");
            for i in 0..d {
                cov[(i, i)] += RIDGE;
            }
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The same statistics with the mean replaced.
    pub fn with_mean(&self, mean: DVector<f64>) -> Self {
        Self {
            mean,
            cov: self.cov.clone(),
        }
    }

    fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.cov[(i, j)] == 0.0))
    }
}

fn check(s: &FeatureStats) -> Result<()> {
    let d = s.dim();
    if s.cov.nrows() != d || s.cov.ncols() != d {
        return Err(Error::Dimension(format!("covariance is not {d}×{d}")));
    }
    for i in 0..d {
        for j in 0..i {
            if (s.cov[(i, j)] - s.cov[(j, i)]).abs() > PSD_TOLERANCE {
                return Err(Error::Dimension("covariance is not symmetric".into()));
            }
        }
    }
    Ok(())
}

/// Eigen-decomposition with negative eigenvalues beyond the tolerance rejected
/// and the rest clipped to zero.
fn psd_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for v in eig.eigenvalues.iter_mut() {
        if *v < -PSD_TOLERANCE * scale {
            return Err(Error::NotPsd(*v));
        }
        *v = v.max(0.0);
    }
    Ok(eig)
}

fn mean_term(s1: &FeatureStats, s2: &FeatureStats) -> f64 {
    (&s1.mean - &s2.mean).norm_squared()
}

/// Trace term via the symmetric route `√(√Σ1 Σ2 √Σ1)`.
pub fn fid_eigen(s1: &FeatureStats, s2: &FeatureStats) -> Result<f64> {
    if s1.dim() != s2.dim() {
        return Err(Error::Dimension(format!("{} vs {}", s1.dim(), s2.dim())));
    }
    check(s1)?;
    check(s2)?;
    let e1 = psd_eigen(&s1.cov)?;
    psd_eigen(&s2.cov)?;
    let sqrt1 = &e1.eigenvectors
        * DMatrix::from_diagonal(&e1.eigenvalues.map(f64::sqrt))
        * e1.eigenvectors.transpose();
    let inner = &sqrt1 * &s2.cov * &sqrt1;
    let cross: f64 = psd_eigen(&inner)?.eigenvalues.iter().map(|v| v.sqrt()).sum();
    let value = mean_term(s1, s2) + s1.cov.trace() + s2.cov.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

/// Elementwise route for diagonal covariances.
pub fn fid_diagonal(s1: &FeatureStats, s2: &FeatureStats) -> Result<f64> {
    if s1.dim() != s2.dim() {
        return Err(Error::Dimension(format!("{} vs {}", s1.dim(), s2.dim())));
    }
    let mut trace = 0.0;
    for i in 0..s1.dim() {
        let (a, b) = (s1.cov[(i, i)], s2.cov[(i, i)]);
        if a < -PSD_TOLERANCE || b < -PSD_TOLERANCE {
            return Err(Error::NotPsd(a.min(b)));
        }
        let (a, b) = (a.max(0.0), b.max(0.0));
        trace += a + b - 2.0 * (a * b).sqrt();
    }
    Ok((mean_term(s1, s2) + trace).max(0.0))
}

/// Squared mean distance plus `Tr(Σ1 + Σ2 − 2 √(√Σ1 Σ2 √Σ1))`.
pub fn fid(s1: &FeatureStats, s2: &FeatureStats) -> Result<f64> {
    if s1.dim() == s2.dim() && s1.is_diagonal() && s2.is_diagonal() {
        fid_diagonal(s1, s2)
    } else {
        fid_eigen(s1, s2)
    }
}

/// Area-downsampled grayscale image, `FEATURE_SIDE²` values.
pub fn image_features(img: &ImageBuffer) -> Vec<f64> {
    let gray = img.grayscale();
    let (w, h) = (img.width as usize, img.height as usize);
    let mut out = vec![0.0; FEATURE_SIDE * FEATURE_SIDE];
    for (k, o) in out.iter_mut().enumerate() {
        let (by, bx) = (k / FEATURE_SIDE, k % FEATURE_SIDE);
        let (y0, y1) = (by * h / FEATURE_SIDE, ((by + 1) * h / FEATURE_SIDE).max(by * h / FEATURE_SIDE + 1));
        let (x0, x1) = (bx * w / FEATURE_SIDE, ((bx + 1) * w / FEATURE_SIDE).max(bx * w / FEATURE_SIDE + 1));
        let mut sum = 0.0;
        let mut n = 0;
        for y in y0..y1.min(h) {
            for x in x0..x1.min(w) {
                sum += gray[y * w + x];
                n += 1;
            }
        }
        *o = if n > 0 { sum / n as f64 } else { 0.0 };
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanShiftReport {
    /// FID between GT split A and the shifted views.
    pub fid_shifted: f64,
    /// Same, after moving the shifted views' mean onto split A's mean.
    pub fid_realigned: f64,
    /// FID between the two GT splits.
    pub fid_gt_split: f64,
    /// Realigned shifted views score better than real GT views.
    pub passed: bool,
}

/// Compares FID of shifted views before and after mean realignment with the
/// FID between two splits of ground-truth views.
pub fn fid_mean_shift_demo(
    gt_a: &[Vec<f64>],
    gt_b: &[Vec<f64>],
    shifted: &[Vec<f64>],
) -> Result<MeanShiftReport> {
    let a = FeatureStats::from_features(gt_a)?;
    let b = FeatureStats::from_features(gt_b)?;
    let s = FeatureStats::from_features(shifted)?;
    let fid_shifted = fid(&a, &s)?;
    let fid_realigned = fid(&a, &s.with_mean(a.mean.clone()))?;
    let fid_gt_split = fid(&a, &b)?;
    Ok(MeanShiftReport {
        fid_shifted,
        fid_realigned,
        fid_gt_split,
        passed: fid_realigned < fid_gt_split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats(mean: &[f64], cov: DMatrix<f64>) -> FeatureStats {
        FeatureStats { mean: DVector::from_column_slice(mean), cov }
    }

    #[test]
    fn hand_cases() {
        let s = stats(&[0.0, 0.0], DMatrix::identity(2, 2));
        assert!(fid(&s, &s).unwrap().abs() < 1e-12);
        let t = stats(&[1.0, 0.0], DMatrix::identity(2, 2));
        assert!((fid(&s, &t).unwrap() - 1.0).abs() < 1e-12);
        let a = stats(&[0.0, 0.0], DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])));
        let b = stats(&[0.0, 0.0], DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])));
        assert!((fid_diagonal(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        assert!((fid_eigen(&a, &b).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = stats(&[0.0, 0.0], DMatrix::identity(2, 2));
        let b = stats(&[0.0], DMatrix::identity(1, 1));
        assert!(matches!(fid(&a, &b), Err(Error::Dimension(_))));
        let neg = stats(&[0.0, 0.0], DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(matches!(fid(&a, &neg), Err(Error::NotPsd(_))));
    }

    #[test]
    fn mean_offset_only_realigns_to_zero() {
        let gt: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), i as f64 * 0.01]).collect();
        let split: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.41 + 1.0).sin(), (i as f64 * 0.13).cos(), i as f64 * 0.011]).collect();
        let shifted: Vec<Vec<f64>> = gt.iter().map(|f| f.iter().map(|v| v + 0.5).collect()).collect();
        let r = fid_mean_shift_demo(&gt, &split, &shifted).unwrap();
        assert!(r.fid_realigned.abs() < 1e-9);
        assert!(r.fid_shifted > 0.7);
        assert!(r.passed);
    }

    fn random_stats(d: usize, seed: &[f64]) -> FeatureStats {
        let a = DMatrix::from_fn(d, d, |i, j| seed[(i * d + j) % seed.len()] * ((i + 2 * j) as f64).cos());
        let mean = DVector::from_fn(d, |i, _| seed[i % seed.len()]);
        stats(mean.as_slice(), &a * a.transpose() + DMatrix::identity(d, d) * 0.1)
    }

    proptest! {
        #[test]
        fn fid_is_a_symmetric_nonnegative_distance(
            x in proptest::collection::vec(-2.0f64..2.0, 9),
            y in proptest::collection::vec(-2.0f64..2.0, 9),
            shift in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let a = random_stats(3, &x);
            let b = random_stats(3, &y);
            let ab = fid(&a, &b).unwrap();
            let ba = fid(&b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-6 * ab.max(1.0));
            prop_assert!(fid(&a, &a).unwrap().abs() < 1e-6);
            let t = DVector::from_column_slice(&shift);
            let a2 = a.with_mean(&a.mean + &t);
            let b2 = b.with_mean(&b.mean + &t);
            prop_assert!((fid(&a2, &b2).unwrap() - ab).abs() < 1e-6 * ab.max(1.0));
        }
    }
}
