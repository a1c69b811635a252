//! Training losses with their gradients w.r.t. the rendered quantity.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{DepthMap, ImageBuffer, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Weight of the RGB term.
    pub rgb: f64,
    /// Weight of the near (metric) depth term.
    pub depth_near: f64,
    /// Weight of the far (ranking) depth term.
    pub depth_far: f64,
    /// Weight of `1 − SSIM` inside the RGB term.
    pub ssim: f64,
    /// Stabilizer of the relative depth error (m).
    pub epsilon: f64,
    /// Ranking hinge margin (m).
    pub margin: f64,
    /// LiDAR range separating near and far supervision (m).
    pub max_depth: f64,
    /// Pixel pairs drawn per ranking-loss evaluation.
    pub ranking_pairs: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            rgb: 1.0,
            depth_near: 0.1,
            depth_far: 0.05,
            ssim: 0.2,
            epsilon: 1e-3,
            margin: 1e-4,
            max_depth: 40.0,
            ranking_pairs: 1024,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.rgb, self.depth_near, self.depth_far, self.ssim, self.epsilon, self.margin];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if !(self.max_depth > 0.0) {
            return Err(Error::Config("max_depth must be positive".into()));
        }
        Ok(())
    }
}

/// A scalar loss and its gradient w.r.t. each pixel of the first argument.
#[derive(Debug, Clone)]
pub struct ImageLoss {
    pub value: f64,
    pub grad: Vec<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct DepthLoss {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn is_valid(mask: Option<&Mask>, i: usize) -> bool {
    mask.map_or(true, |m| m.valid[i])
}

/// Mean absolute error over valid pixels and all channels.
pub fn l1(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&Mask>) -> ImageLoss {
    assert!(a.same_shape(b));
    let n = (0..a.len()).filter(|&i| is_valid(mask, i)).count();
    let mut grad = vec![[0.0; 3]; a.len()];
    if n == 0 {
        return ImageLoss { value: 0.0, grad };
    }
    let scale = 1.0 / (3 * n) as f64;
    let mut sum = 0.0;
    for i in 0..a.len() {
        if !is_valid(mask, i) {
            continue;
        }
        for c in 0..3 {
            let d = a.pixels[i][c] - b.pixels[i][c];
            sum += d.abs();
            grad[i][c] = if d > 0.0 {
                scale
            } else if d < 0.0 {
                -scale
            } else {
                0.0
            };
        }
    }
    ImageLoss {
        value: sum * scale,
        grad,
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with zero padding. The operator is self-adjoint.
fn blur(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let xx = x as isize + j as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += kv * src[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let yy = y as isize + j as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    acc += kv * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Mean windowed SSIM over valid pixels and channels, and its gradient w.r.t. `a`.
///
/// Pixels outside `mask` are zeroed in both images before the local statistics
/// are taken, so they neither contribute nor receive gradient.
pub fn ssim_with_grad(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&Mask>) -> (f64, Vec<[f64; 3]>) {
    assert!(a.same_shape(b));
    let (w, h) = (a.width as usize, a.height as usize);
    let n = (0..a.len()).filter(|&i| is_valid(mask, i)).count();
    let mut grad = vec![[0.0; 3]; a.len()];
    if n == 0 {
        return (0.0, grad);
    }
    let k = gaussian_kernel();
    let weight = 1.0 / (3 * n) as f64;
    let mut total = 0.0;
    for c in 0..3 {
        let x: Vec<f64> = (0..a.len())
            .map(|i| if is_valid(mask, i) { a.pixels[i][c] } else { 0.0 })
            .collect();
        let y: Vec<f64> = (0..a.len())
            .map(|i| if is_valid(mask, i) { b.pixels[i][c] } else { 0.0 })
            .collect();
        let sq = |v: &[f64]| v.iter().map(|t| t * t).collect::<Vec<_>>();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let ex = blur(&x, w, h, &k);
        let ey = blur(&y, w, h, &k);
        let exx = blur(&sq(&x), w, h, &k);
        let eyy = blur(&sq(&y), w, h, &k);
        let exy = blur(&xy, w, h, &k);
        let mut g_ex = vec![0.0; a.len()];
        let mut g_exx = vec![0.0; a.len()];
        let mut g_exy = vec![0.0; a.len()];
        for i in 0..a.len() {
            if !is_valid(mask, i) {
                continue;
            }
            let a1 = 2.0 * ex[i] * ey[i] + SSIM_C1;
            let a2 = 2.0 * (exy[i] - ex[i] * ey[i]) + SSIM_C2;
            let b1 = ex[i] * ex[i] + ey[i] * ey[i] + SSIM_C1;
            let b2 = (exx[i] - ex[i] * ex[i]) + (eyy[i] - ey[i] * ey[i]) + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            total += s * weight;
            g_ex[i] = weight
                * s
                * (2.0 * ey[i] / a1 - 2.0 * ey[i] / a2 - 2.0 * ex[i] / b1 + 2.0 * ex[i] / b2);
            g_exx[i] = -weight * s / b2;
            g_exy[i] = weight * 2.0 * s / a2;
        }
        let bx = blur(&g_ex, w, h, &k);
        let bxx = blur(&g_exx, w, h, &k);
        let bxy = blur(&g_exy, w, h, &k);
        for i in 0..a.len() {
            if is_valid(mask, i) {
                grad[i][c] = bx[i] + 2.0 * x[i] * bxx[i] + y[i] * bxy[i];
            }
        }
    }
    (total, grad)
}

/// `L1 + α (1 − SSIM)` of one image pair, with gradient w.r.t. `render`.
/// An empty mask contributes nothing.
pub fn rgb_term(render: &ImageBuffer, target: &ImageBuffer, mask: Option<&Mask>, alpha_ssim: f64) -> ImageLoss {
    if mask.is_some_and(|m| m.count() == 0) {
        return ImageLoss {
            value: 0.0,
            grad: vec![[0.0; 3]; render.len()],
        };
    }
    let mut out = l1(render, target, mask);
    if alpha_ssim > 0.0 {
        let (s, g) = ssim_with_grad(render, target, mask);
        out.value += alpha_ssim * (1.0 - s);
        for (o, gi) in out.grad.iter_mut().zip(g) {
            for c in 0..3 {
                o[c] -= alpha_ssim * gi[c];
            }
        }
    }
    out
}

/// In-path plus optional out-of-path RGB loss.
pub fn rgb_loss(
    render_in: &ImageBuffer,
    gt_in: &ImageBuffer,
    out_path: Option<(&ImageBuffer, &ImageBuffer, &Mask)>,
    alpha_ssim: f64,
) -> f64 {
    let mut v = rgb_term(render_in, gt_in, None, alpha_ssim).value;
    if let Some((r, g, m)) = out_path {
        v += rgb_term(r, g, Some(m), alpha_ssim).value;
    }
    v
}

/// Mean relative depth error over pixels valid in both maps and nearer than
/// `max_depth` in both.
pub fn depth_near_loss(d: &DepthMap, target: &DepthMap, epsilon: f64, max_depth: f64) -> DepthLoss {
    let mut grad = vec![0.0; d.len()];
    let near: Vec<usize> = (0..d.len())
        .filter(|&i| {
            d.valid[i] && target.valid[i] && d.depth[i] < max_depth && target.depth[i] < max_depth
        })
        .collect();
    if near.is_empty() {
        warn!("near depth loss has no supervised pixels");
        return DepthLoss { value: 0.0, grad };
    }
    let n = near.len() as f64;
    let mut sum = 0.0;
    for &i in &near {
        let denom = target.depth[i] + epsilon;
        let r = (d.depth[i] - target.depth[i]) / denom;
        sum += r.abs();
        grad[i] = r.signum() * (r != 0.0) as u8 as f64 / (denom * n);
    }
    DepthLoss {
        value: sum / n,
        grad,
    }
}

/// Hinge ranking loss over random pixel pairs of the far region (target at or
/// beyond `max_depth`): pairs ordered by target depth are penalized by
/// `max(0, d_near − d_far + margin)`.
pub fn depth_far_ranking_loss(
    d: &DepthMap,
    target: &DepthMap,
    max_depth: f64,
    margin: f64,
    n_pairs: usize,
    rng: &mut impl Rng,
) -> DepthLoss {
    let mut grad = vec![0.0; d.len()];
    let far: Vec<usize> = (0..d.len())
        .filter(|&i| d.valid[i] && target.valid[i] && target.depth[i] >= max_depth)
        .collect();
    if far.len() < 2 {
        return DepthLoss { value: 0.0, grad };
    }
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let i = far[rng.gen_range(0..far.len())];
        let j = far[rng.gen_range(0..far.len())];
        if target.depth[i] < target.depth[j] {
            pairs.push((i, j));
        } else if target.depth[j] < target.depth[i] {
            pairs.push((j, i));
        }
    }
    if pairs.is_empty() {
        return DepthLoss { value: 0.0, grad };
    }
    let n = pairs.len() as f64;
    let mut sum = 0.0;
    for (i, j) in pairs {
        let h = d.depth[i] - d.depth[j] + margin;
        if h > 0.0 {
            sum += h;
            grad[i] += 1.0 / n;
            grad[j] -= 1.0 / n;
        }
    }
    DepthLoss {
        value: sum / n,
        grad,
    }
}

/// Unweighted loss terms of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossParts {
    pub rgb: f64,
    pub depth_near: f64,
    pub depth_far: f64,
}

pub fn total_loss(parts: &LossParts, weights: &LossWeights) -> Result<f64> {
    for (name, v) in [("rgb", parts.rgb), ("depth_near", parts.depth_near), ("depth_far", parts.depth_far)] {
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss(name));
        }
    }
    Ok(weights.rgb * parts.rgb + weights.depth_near * parts.depth_near + weights.depth_far * parts.depth_far)
}
