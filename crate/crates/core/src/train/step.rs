//! Loss evaluation and analytic gradients for one training step.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ivw::{build_warp_map, render_pseudo_gt_traced, PseudoGt};
use crate::losses::{depth_far_ranking_loss, depth_near_loss, rgb_term, total_loss, LossParts, LossWeights};
use crate::render::{accumulate, render_traced, screen_gradient_norms, GradientSet, RenderOutput};
use crate::scene::{CameraView, DepthMap, ImageBuffer, SceneGraph};

/// One supervised view: what to render and what to compare against.
#[derive(Debug, Clone, Copy)]
pub struct ViewTarget<'a> {
    /// Label used in error messages.
    pub name: &'a str,
    pub view: &'a CameraView,
    pub image: &'a ImageBuffer,
    /// Depth supervision: near pixels get the relative loss, pixels at or
    /// beyond `max_depth` the ranking loss.
    pub depth: Option<&'a DepthMap>,
}

#[derive(Debug, Clone)]
pub struct ViewStep {
    pub parts: LossParts,
    /// Weighted total of `parts`.
    pub loss: f64,
    pub grads: GradientSet,
    /// Screen-space positional gradient norm per visible primitive.
    pub screen_norms: Vec<(usize, f64)>,
    pub render: RenderOutput,
}

fn check_finite(grads: &GradientSet, view: &str) -> Result<()> {
    match grads.first_non_finite() {
        None => Ok(()),
        Some(primitive) => Err(Error::NonFiniteGradient {
            primitive,
            view: view.to_string(),
        }),
    }
}

/// Forward and backward of the in-path losses of one view.
pub fn view_backward(
    scene: &SceneGraph,
    target: &ViewTarget,
    weights: &LossWeights,
    rng: &mut impl Rng,
) -> Result<ViewStep> {
    let t = target.view.timestamp;
    let (render, (resolved, raster)) = render_traced(scene, target.view, t, true);
    let rgb = rgb_term(&render.color, target.image, None, weights.ssim);
    let mut parts = LossParts {
        rgb: rgb.value,
        ..LossParts::default()
    };
    let grad_color: Vec<[f64; 3]> = rgb
        .grad
        .iter()
        .map(|g| [g[0] * weights.rgb, g[1] * weights.rgb, g[2] * weights.rgb])
        .collect();
    let mut grad_depth = None;
    if let Some(d) = target.depth {
        let near = depth_near_loss(&render.depth, d, weights.epsilon, weights.max_depth);
        let far = depth_far_ranking_loss(
            &render.depth,
            d,
            weights.max_depth,
            weights.margin,
            weights.ranking_pairs,
            rng,
        );
        parts.depth_near = near.value;
        parts.depth_far = far.value;
        grad_depth = Some(
            near.grad
                .iter()
                .zip(&far.grad)
                .map(|(n, f)| weights.depth_near * n + weights.depth_far * f)
                .collect::<Vec<f64>>(),
        );
    }
    let loss = total_loss(&parts, weights)?;
    let splat_grads = raster.backward(&grad_color, grad_depth.as_deref());
    let mut grads = GradientSet::zeros(scene);
    accumulate(scene, &resolved, target.view, &raster, &splat_grads, &mut grads);
    check_finite(&grads, target.name)?;
    let screen_norms = screen_gradient_norms(&raster, &splat_grads);
    Ok(ViewStep {
        parts,
        loss,
        grads,
        screen_norms,
        render,
    })
}

/// Sum of [`view_backward`] over several views.
pub fn backward(
    scene: &SceneGraph,
    targets: &[ViewTarget],
    weights: &LossWeights,
    rng: &mut impl Rng,
) -> Result<(f64, GradientSet)> {
    let mut grads = GradientSet::zeros(scene);
    let mut loss = 0.0;
    for t in targets {
        let step = view_backward(scene, t, weights, rng)?;
        loss += step.loss;
        grads.add_assign(&step.grads);
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone)]
pub struct WarpStep {
    /// Weighted RGB loss of the rearranged out-of-path render against the
    /// in-path image, over the supervision mask.
    pub loss: f64,
    pub grads: GradientSet,
    pub pseudo_gt: PseudoGt,
}

/// Out-of-path supervision: warp `source` pixels into `target` using `depth`,
/// render the rays occlusion-aware with `beta`, rearrange to the source grid
/// and compare with the source image.
#[allow(clippy::too_many_arguments)]
pub fn warp_backward(
    scene: &SceneGraph,
    source: &CameraView,
    target: &CameraView,
    depth: &DepthMap,
    image: &ImageBuffer,
    beta: f64,
    weights: &LossWeights,
    name: &str,
) -> Result<WarpStep> {
    let warp = build_warp_map(source, target, depth);
    let (pseudo_gt, resolved, raster) = render_pseudo_gt_traced(scene, &warp, source.timestamp, beta, true);
    let mut grads = GradientSet::zeros(scene);
    if pseudo_gt.mask.count() == 0 {
        return Ok(WarpStep { loss: 0.0, grads, pseudo_gt });
    }
    let term = rgb_term(&pseudo_gt.image, image, Some(&pseudo_gt.mask), weights.ssim);
    let loss = weights.rgb * term.value;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss("out_of_path_rgb"));
    }
    let grad_color: Vec<[f64; 3]> = term
        .grad
        .iter()
        .map(|g| [g[0] * weights.rgb, g[1] * weights.rgb, g[2] * weights.rgb])
        .collect();
    let splat_grads = raster.backward(&grad_color, None);
    accumulate(scene, &resolved, target, &raster, &splat_grads, &mut grads);
    check_finite(&grads, name)?;
    Ok(WarpStep { loss, grads, pseudo_gt })
}
