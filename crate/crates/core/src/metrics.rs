//! Image quality metrics.

use crate::error::{Error, Result};
use crate::losses::ssim_with_grad;
use crate::scene::{ImageBuffer, Mask};

/// Reported in place of +∞ for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// PSNR in dB over valid pixels, for images with values in [0, 1].
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&Mask>) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Dimension("images differ in size".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..a.len() {
        if mask.is_some_and(|m| !m.valid[i]) {
            continue;
        }
        for c in 0..3 {
            let d = a.pixels[i][c] - b.pixels[i][c];
            sum += d * d;
        }
        n += 3;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let mse = sum / n as f64;
    Ok(if mse <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP)
    })
}

/// Mean windowed SSIM over valid pixels (11×11 Gaussian window, σ = 1.5).
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&Mask>) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Dimension("images differ in size".into()));
    }
    if mask.is_some_and(|m| m.count() == 0) {
        return Err(Error::EmptyMask);
    }
    Ok(ssim_with_grad(a, b, mask).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_cases() {
        let a = ImageBuffer::filled(4, 4, [0.5; 3]);
        assert_eq!(psnr(&a, &a, None).unwrap(), PSNR_CAP);
        let b = ImageBuffer::filled(4, 4, [0.6; 3]);
        assert!((psnr(&a, &b, None).unwrap() - 20.0).abs() < 1e-9);
        assert!(matches!(psnr(&a, &b, Some(&Mask::empty(4, 4))), Err(Error::EmptyMask)));
    }

    #[test]
    fn ssim_cases() {
        let mut a = ImageBuffer::filled(16, 16, [0.25; 3]);
        for i in 0..a.len() / 2 {
            a.pixels[i] = [0.75; 3];
        }
        let neg = ImageBuffer {
            pixels: a.pixels.iter().map(|p| [1.0 - p[0], 1.0 - p[1], 1.0 - p[2]]).collect(),
            ..a.clone()
        };
        assert!((ssim(&a, &a, None).unwrap() - 1.0).abs() < 1e-12);
        let s = ssim(&a, &neg, None).unwrap();
        assert!(s < 1.0);
        assert!((s - ssim(&neg, &a, None).unwrap()).abs() < 1e-12);
    }
}
