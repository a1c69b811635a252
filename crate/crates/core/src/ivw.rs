//! Inverse view warping: render the content of an in-path view from a displaced
//! camera through lifted-pixel rays, then index the results by source pixel.

use crate::math::Vec3;
use crate::render::{
    rasterize, ray_samples, resolve_scene, RaySample, Rasterized, Resolved, NEAR_PLANE,
};
use crate::scene::{CameraView, DepthMap, ImageBuffer, Mask, SceneGraph};

/// One source pixel of a [`WarpMap`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpEntry {
    /// Lifted world point (zero when the source depth is invalid).
    pub world_point: Vec3,
    /// Ray from the target camera towards the lifted point; `reference_depth`
    /// is the point's camera-frame depth in the target view.
    pub ray: RaySample,
    /// The point lies beyond the target view's near plane.
    pub in_frustum: bool,
    pub source_valid: bool,
}

impl WarpEntry {
    pub fn usable(&self) -> bool {
        self.source_valid && self.in_frustum
    }
}

/// Per-source-pixel rays from an in-path view into an out-of-path view.
#[derive(Debug, Clone)]
pub struct WarpMap {
    pub source: CameraView,
    pub target: CameraView,
    /// Row-major over the source image.
    pub entries: Vec<WarpEntry>,
}

/// Lifts every valid pixel of `depth` (rendered at `source`) into the world
/// and aims a ray at it from `target`. Points outside the target image keep
/// their rays; only points behind the near plane are flagged.
pub fn build_warp_map(source: &CameraView, target: &CameraView, depth: &DepthMap) -> WarpMap {
    assert_eq!(
        (depth.width, depth.height),
        (source.width, source.height),
        "depth map must match the source view"
    );
    let origin = target.center();
    let entries = (0..depth.len())
        .map(|i| {
            let u = (i % depth.width as usize) as f64;
            let v = (i / depth.width as usize) as f64;
            let miss = WarpEntry {
                world_point: Vec3::zeros(),
                ray: RaySample {
                    origin,
                    direction: target.forward(),
                    reference_depth: None,
                },
                in_frustum: false,
                source_valid: false,
            };
            if !depth.valid[i] {
                return miss;
            }
            let p = source.unproject(u, v, depth.depth[i]);
            let d0 = target.world_to_camera(&p).z;
            let offset = p - origin;
            let norm = offset.norm();
            let in_frustum = d0 > NEAR_PLANE && norm > 0.0;
            WarpEntry {
                world_point: p,
                ray: RaySample {
                    origin,
                    direction: if norm > 0.0 { offset / norm } else { target.forward() },
                    reference_depth: in_frustum.then_some(d0),
                },
                in_frustum,
                source_valid: true,
            }
        })
        .collect();
    WarpMap {
        source: source.clone(),
        target: target.clone(),
        entries,
    }
}

impl WarpMap {
    pub fn width(&self) -> u32 {
        self.source.width
    }

    pub fn height(&self) -> u32 {
        self.source.height
    }

    /// Target-frame reference depth of every usable entry, on the source grid.
    pub fn reference_depth(&self) -> DepthMap {
        let mut d = DepthMap::invalid(self.width(), self.height());
        for (i, e) in self.entries.iter().enumerate() {
            if let Some(d0) = e.ray.reference_depth {
                d.set_index(i, d0);
            }
        }
        d
    }

    pub fn usable_mask(&self) -> Mask {
        Mask {
            width: self.width(),
            height: self.height(),
            valid: self.entries.iter().map(WarpEntry::usable).collect(),
        }
    }

    fn rays(&self) -> Vec<RaySample> {
        self.entries
            .iter()
            .map(|e| {
                if e.usable() {
                    e.ray
                } else {
                    // pointing backwards: never binned, always a miss
                    RaySample {
                        direction: -self.target.forward(),
                        ..e.ray
                    }
                }
            })
            .collect()
    }
}

/// Invalidates pixels on depth discontinuities. Inverse depth is affine in
/// pixel coordinates over any plane, so its second difference along rows or
/// columns, relative to the pixel's own inverse depth, flags silhouettes where
/// the blended depth lifts to empty space. A pixel with exactly one valid
/// in-image neighbour along an axis counts as an edge too. An infinite
/// tolerance keeps everything.
pub fn drop_depth_edges(depth: &DepthMap, tolerance: f64) -> DepthMap {
    let mut out = depth.clone();
    if tolerance.is_infinite() {
        return out;
    }
    let (w, h) = (depth.width as i64, depth.height as i64);
    // outer None: outside the image, which says nothing about edges
    let inv = |x: i64, y: i64| {
        if x < 0 || y < 0 || x >= w || y >= h {
            return None;
        }
        let i = (y * w + x) as usize;
        Some(depth.valid[i].then(|| 1.0 / depth.depth[i]))
    };
    for y in 0..h {
        for x in 0..w {
            let Some(Some(c)) = inv(x, y) else { continue };
            let edge = [(1, 0), (0, 1)].iter().any(|&(dx, dy)| {
                match (inv(x - dx, y - dy), inv(x + dx, y + dy)) {
                    (Some(Some(a)), Some(Some(b))) => (a - 2.0 * c + b).abs() > tolerance * c,
                    (Some(None), Some(Some(_))) | (Some(Some(_)), Some(None)) => true,
                    _ => false,
                }
            });
            if edge {
                out.set_index((y * w + x) as usize, f64::NAN);
            }
        }
    }
    out
}

/// Rearranged out-of-path render, indexed by source pixel, with its supervision mask.
#[derive(Debug, Clone)]
pub struct PseudoGt {
    pub image: ImageBuffer,
    pub mask: Mask,
}

/// Renders every usable warp ray with occlusion limit `beta` at `t_out` and
/// stores the result at the ray's source pixel.
pub fn render_pseudo_gt(scene: &SceneGraph, warp: &WarpMap, t_out: f64, beta: f64) -> PseudoGt {
    render_pseudo_gt_traced(scene, warp, t_out, beta, false).0
}

/// [`render_pseudo_gt`] that also returns what the backward pass needs: the
/// resolved primitives and the rasterization over the warp rays (samples are
/// ordered by source pixel).
pub fn render_pseudo_gt_traced(
    scene: &SceneGraph,
    warp: &WarpMap,
    t_out: f64,
    beta: f64,
    trace: bool,
) -> (PseudoGt, Vec<Option<Resolved>>, Rasterized) {
    let resolved = resolve_scene(scene, t_out);
    let samples = ray_samples(&warp.target, &warp.rays(), beta);
    let raster = rasterize(&resolved, &warp.target, samples, scene.background, trace);
    let mut image = ImageBuffer::new(warp.width(), warp.height());
    let mut mask = Mask::empty(warp.width(), warp.height());
    for (i, (e, o)) in warp.entries.iter().zip(&raster.outputs).enumerate() {
        if e.usable() && o.hit() {
            image.pixels[i] = o.color;
            mask.valid[i] = true;
        }
    }
    (PseudoGt { image, mask }, resolved, raster)
}
