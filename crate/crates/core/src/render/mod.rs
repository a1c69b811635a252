//! CPU Gaussian splatting: projection, tile compositing, depth, occlusion-limited rays
//! and the analytic backward pass.

pub mod backward;
mod project;
mod raster;

pub use backward::{accumulate, screen_gradient_norms, GradientSet};
pub use project::{
    project, project_resolved, resolve_primitive, resolve_scene, Domain, ObjectLink,
    ProjectedGaussian, Resolved, COV_DILATION, CUTOFF_POWER, NEAR_PLANE,
};
pub use raster::{
    rasterize, Rasterized, SampleOut, Samples, SplatGrad, ALPHA_MAX, TAPER_START, TILE_SIZE,
    TRANSMITTANCE_MIN, WEIGHT_MIN,
};

use crate::math::Vec3;
use crate::scene::{CameraView, DepthMap, ImageBuffer, SceneGraph};

/// Color, normalized depth and accumulated weight of a full view.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub color: ImageBuffer,
    pub depth: DepthMap,
    /// `Σ αᵢTᵢ` per pixel.
    pub weight: Vec<f64>,
}

impl RenderOutput {
    fn from_samples(view: &CameraView, outputs: &[SampleOut]) -> Self {
        let mut color = ImageBuffer::new(view.width, view.height);
        let mut depth = DepthMap::invalid(view.width, view.height);
        let mut weight = Vec::with_capacity(outputs.len());
        for (i, o) in outputs.iter().enumerate() {
            color.pixels[i] = o.color;
            if let Some(d) = o.depth() {
                depth.set_index(i, d);
            }
            weight.push(o.weight);
        }
        Self {
            color,
            depth,
            weight,
        }
    }
}

/// Renders color and depth of `view` at time `t`.
pub fn render(scene: &SceneGraph, view: &CameraView, t: f64) -> RenderOutput {
    let (out, _) = render_traced(scene, view, t, false);
    out
}

/// Like [`render`], also returning the rasterization (with a trace when
/// `trace` is set) and the resolved primitives for the backward pass.
pub fn render_traced(
    scene: &SceneGraph,
    view: &CameraView,
    t: f64,
    trace: bool,
) -> (RenderOutput, (Vec<Option<Resolved>>, Rasterized)) {
    let resolved = resolve_scene(scene, t);
    let raster = rasterize(
        &resolved,
        view,
        Samples::Grid {
            width: view.width,
            height: view.height,
        },
        scene.background,
        trace,
    );
    let out = RenderOutput::from_samples(view, &raster.outputs);
    (out, (resolved, raster))
}

pub fn render_color(scene: &SceneGraph, view: &CameraView, t: f64) -> ImageBuffer {
    render(scene, view, t).color
}

pub fn render_depth(scene: &SceneGraph, view: &CameraView, t: f64) -> DepthMap {
    render(scene, view, t).depth
}

/// A camera ray with an optional reference depth for occlusion filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySample {
    pub origin: Vec3,
    /// Unit direction in world coordinates.
    pub direction: Vec3,
    /// Camera-frame depth of the point the ray was aimed at.
    pub reference_depth: Option<f64>,
}

/// Rays whose image position falls further than this many image sizes outside
/// the view are treated as misses.
const RAY_MARGIN: f64 = 1.0;

/// Continuous image position of a ray cast from `view`'s centre. `None` when it
/// points backwards or lands far outside the image.
pub fn ray_position(view: &CameraView, ray: &RaySample) -> Option<[f64; 2]> {
    let dir_cam = view.rotation * ray.direction;
    if !(dir_cam.z > 1e-9) {
        return None;
    }
    let k = &view.intrinsics;
    let x = k.fx * dir_cam.x / dir_cam.z + k.cx;
    let y = k.fy * dir_cam.y / dir_cam.z + k.cy;
    let (w, h) = (view.width as f64, view.height as f64);
    let inside = x > -RAY_MARGIN * w - 0.5
        && x < (1.0 + RAY_MARGIN) * w - 0.5
        && y > -RAY_MARGIN * h - 0.5
        && y < (1.0 + RAY_MARGIN) * h - 0.5;
    inside.then_some([x, y])
}

/// Samples for a batch of rays cast from `view`. Only splats deeper than
/// `beta · reference_depth` contribute to a ray; transmittance is accumulated
/// over those splats alone.
pub fn ray_samples(view: &CameraView, rays: &[RaySample], beta: f64) -> Samples {
    let mut positions = Vec::with_capacity(rays.len());
    let mut thresholds = Vec::with_capacity(rays.len());
    for ray in rays {
        positions.push(ray_position(view, ray).unwrap_or([f64::NAN, f64::NAN]));
        thresholds.push(match ray.reference_depth {
            Some(d0) => beta * d0,
            None => f64::NEG_INFINITY,
        });
    }
    Samples::Points {
        positions,
        thresholds,
    }
}

/// Occlusion-limited colors of many rays cast from `view` at time `t`.
pub fn render_rays(
    scene: &SceneGraph,
    view: &CameraView,
    rays: &[RaySample],
    t: f64,
    beta: f64,
) -> Vec<SampleOut> {
    let resolved = resolve_scene(scene, t);
    rasterize(&resolved, view, ray_samples(view, rays, beta), scene.background, false).outputs
}

/// Color and hit flag of one occlusion-limited ray. The ray must start at
/// `view`'s centre; `view` supplies the projection model.
pub fn render_ray_limited(
    scene: &SceneGraph,
    view: &CameraView,
    ray: &RaySample,
    t: f64,
    beta: f64,
) -> ([f64; 3], bool) {
    debug_assert!((ray.origin - view.center()).norm() < 1e-6);
    let out = render_rays(scene, view, std::slice::from_ref(ray), t, beta)[0];
    (out.color, out.hit())
}

/// Ray from `view`'s centre through the continuous pixel position `(u, v)`.
pub fn pixel_ray(view: &CameraView, u: f64, v: f64) -> RaySample {
    let p = view.unproject(u, v, 1.0);
    let origin = view.center();
    RaySample {
        origin,
        direction: (p - origin).normalize(),
        reference_depth: None,
    }
}
