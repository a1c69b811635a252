//! LiDAR depth bootstrapping: accumulate multi-frame LiDAR, select reliable
//! sparse depth against the rendered depth, fit a global affine map from
//! rendered to LiDAR depth and apply it to the dense render.

use std::io::Write;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::render::{render_depth, NEAR_PLANE};
use crate::scene::{CameraView, DepthMap, SceneGraph};

/// A LiDAR return moved into the world frame at the accumulation reference time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccumulatedPoint {
    pub position: Vec3,
    /// Capture time of the frame the point came from.
    pub timestamp: f64,
    pub object: Option<usize>,
}

/// LiDAR frame closest in time to `t`.
pub fn frame_for_time(scene: &SceneGraph, t: f64) -> Option<usize> {
    scene
        .lidar
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.timestamp - t).abs().total_cmp(&(b.1.timestamp - t).abs()))
        .map(|(i, _)| i)
}

/// Accumulates frames `[frame, frame + n_frames)` in the world frame. Points on
/// dynamic objects are carried by the object's motion to the time of `frame`.
/// Errors when the window runs past the recorded frames.
pub fn accumulate_lidar(
    scene: &SceneGraph,
    frame: usize,
    n_frames: usize,
) -> Result<Vec<AccumulatedPoint>> {
    let end = frame + n_frames;
    if n_frames == 0 || end > scene.lidar.len() {
        return Err(Error::FrameWindow {
            start: frame,
            end,
            available: scene.lidar.len(),
        });
    }
    let reference = scene.lidar[frame].timestamp;
    let mut out = Vec::new();
    for f in &scene.lidar[frame..end] {
        for p in &f.points {
            let world = f.to_world(&p.position);
            let position = match p.object {
                None => world,
                Some(k) => {
                    let obj = &scene.objects[k];
                    let (Ok(then), Ok(now)) = (obj.pose_at(f.timestamp), obj.pose_at(reference))
                    else {
                        continue;
                    };
                    let local = then.rotation.transpose() * (world - then.translation);
                    now.rotation * local + now.translation
                }
            };
            out.push(AccumulatedPoint {
                position,
                timestamp: f.timestamp,
                object: p.object,
            });
        }
    }
    Ok(out)
}

/// [`accumulate_lidar`] with the window truncated at the last recorded frame.
pub fn accumulate_lidar_clamped(
    scene: &SceneGraph,
    frame: usize,
    n_frames: usize,
) -> Result<Vec<AccumulatedPoint>> {
    let n = n_frames.min(scene.lidar.len().saturating_sub(frame));
    accumulate_lidar(scene, frame, n)
}

/// One LiDAR depth sample on the image grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseSample {
    pub u: u32,
    pub v: u32,
    /// Camera-frame depth (m).
    pub depth: f64,
    pub timestamp: f64,
    pub world: Vec3,
}

/// Pixel-indexed sparse depth, at most one sample per pixel, sorted row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDepthMap {
    pub width: u32,
    pub height: u32,
    pub samples: Vec<SparseSample>,
}

impl SparseDepthMap {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_depth_map(&self) -> DepthMap {
        let mut m = DepthMap::invalid(self.width, self.height);
        for s in &self.samples {
            m.set(s.u, s.v, s.depth);
        }
        m
    }

    pub fn points(&self) -> Vec<AccumulatedPoint> {
        self.samples
            .iter()
            .map(|s| AccumulatedPoint {
                position: s.world,
                timestamp: s.timestamp,
                object: None,
            })
            .collect()
    }

    /// `u,v,depth,timestamp` rows with a header line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("u,v,depth,timestamp\n");
        for s in &self.samples {
            text.push_str(&format!("{},{},{},{}\n", s.u, s.v, s.depth, s.timestamp));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(text.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Projects points into `view`, keeping those in front of the camera, inside
/// the image and no deeper than `max_depth`.
pub fn project_points(
    points: &[AccumulatedPoint],
    view: &CameraView,
    max_depth: f64,
) -> Vec<SparseSample> {
    points
        .iter()
        .filter_map(|p| {
            let ((u, v), depth) = view.pixel_of(&p.position, NEAR_PLANE)?;
            (depth <= max_depth).then_some(SparseSample {
                u,
                v,
                depth,
                timestamp: p.timestamp,
                world: p.position,
            })
        })
        .collect()
}

/// Applies the three selection rules in order:
/// drop samples deviating from the rendered depth by more than
/// `dev_threshold` (relative; skipped where the render is invalid or absent),
/// then per pixel keep the earliest timestamp, then the smallest depth.
pub fn apply_selection_rules(
    mut candidates: Vec<SparseSample>,
    width: u32,
    height: u32,
    rendered: Option<&DepthMap>,
    dev_threshold: f64,
) -> SparseDepthMap {
    if let Some(r) = rendered {
        candidates.retain(|s| match r.get(s.u, s.v) {
            Some(d) => ((s.depth - d) / d).abs() <= dev_threshold,
            None => true,
        });
    }
    candidates.sort_by(|a, b| {
        (a.v, a.u)
            .cmp(&(b.v, b.u))
            .then(a.timestamp.total_cmp(&b.timestamp))
            .then(a.depth.total_cmp(&b.depth))
    });
    candidates.dedup_by(|later, first| later.u == first.u && later.v == first.v);
    SparseDepthMap {
        width,
        height,
        samples: candidates,
    }
}

/// Projects accumulated points into `view` and applies the selection rules.
pub fn select_sparse_depth(
    points: &[AccumulatedPoint],
    view: &CameraView,
    rendered: Option<&DepthMap>,
    dev_threshold: f64,
    max_depth: f64,
) -> SparseDepthMap {
    apply_selection_rules(
        project_points(points, view, max_depth),
        view.width,
        view.height,
        rendered,
        dev_threshold,
    )
}

/// Affine map `a · rendered + b` towards LiDAR depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearRectifier {
    pub a: f64,
    pub b: f64,
    pub samples: usize,
    /// Mean of `|a·r + b − s| / s` over the fitted pairs.
    pub mean_relative_residual: f64,
}

impl LinearRectifier {
    pub fn identity() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            samples: 0,
            mean_relative_residual: 0.0,
        }
    }

    /// Weighted squared objective `Σ ((a r + b − s) / s)²` of arbitrary (a, b).
    pub fn objective(a: f64, b: f64, pairs: &[(f64, f64)]) -> f64 {
        pairs
            .iter()
            .map(|&(r, s)| ((a * r + b - s) / s).powi(2))
            .sum()
    }
}

/// (rendered, sparse) depth pairs at pixels where both exist.
pub fn depth_pairs(sparse: &SparseDepthMap, rendered: &DepthMap) -> Vec<(f64, f64)> {
    sparse
        .samples
        .iter()
        .filter_map(|s| rendered.get(s.u, s.v).map(|r| (r, s.depth)))
        .collect()
}

/// Weighted least squares on the pairs with weights `1 / s²`.
pub fn fit_pairs(pairs: &[(f64, f64)]) -> Result<LinearRectifier> {
    if pairs.len() < 2 {
        return Err(Error::DegenerateFit(format!("{} sample(s)", pairs.len())));
    }
    let mut sw = 0.0;
    let mut sr = 0.0;
    let mut ss = 0.0;
    for &(r, s) in pairs {
        let w = 1.0 / (s * s);
        sw += w;
        sr += w * r;
        ss += w * s;
    }
    let (mr, ms) = (sr / sw, ss / sw);
    let mut srr = 0.0;
    let mut srs = 0.0;
    for &(r, s) in pairs {
        let w = 1.0 / (s * s);
        srr += w * (r - mr) * (r - mr);
        srs += w * (r - mr) * (s - ms);
    }
    if !(srr > 1e-12 * sw * mr.abs().max(1.0).powi(2)) {
        return Err(Error::DegenerateFit("rendered depths have no spread".into()));
    }
    let a = srs / srr;
    let b = ms - a * mr;
    if !(a > 0.0) || !b.is_finite() {
        return Err(Error::DegenerateFit(format!("non-positive scale {a}")));
    }
    let residual =
        pairs.iter().map(|&(r, s)| ((a * r + b - s) / s).abs()).sum::<f64>() / pairs.len() as f64;
    Ok(LinearRectifier {
        a,
        b,
        samples: pairs.len(),
        mean_relative_residual: residual,
    })
}

pub fn fit_rectifier(sparse: &SparseDepthMap, rendered: &DepthMap) -> Result<LinearRectifier> {
    fit_pairs(&depth_pairs(sparse, rendered))
}

/// Applies the rectifier to valid pixels; non-positive results become invalid.
pub fn rectify(rendered: &DepthMap, r: &LinearRectifier) -> DepthMap {
    let mut out = DepthMap::invalid(rendered.width, rendered.height);
    for i in 0..rendered.len() {
        if rendered.valid[i] {
            out.set_index(i, r.a * rendered.depth[i] + r.b);
        }
    }
    out
}

/// Pearson correlation of the pairs.
pub fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    /// LiDAR frames accumulated per view.
    pub accumulation_frames: usize,
    /// Relative deviation from the rendered depth above which a return is dropped.
    pub deviation_threshold: f64,
    /// Epochs between recomputations of the targets.
    pub interval_epochs: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            accumulation_frames: 30,
            deviation_threshold: 0.05,
            interval_epochs: 2,
        }
    }
}

/// Everything one bootstrap update produced for one view.
#[derive(Debug, Clone)]
pub struct BootstrapResult {
    pub rendered: DepthMap,
    pub sparse: SparseDepthMap,
    pub rectifier: LinearRectifier,
    pub rectified: DepthMap,
}

/// Accumulate, select, fit and rectify for one view, given its rendered depth.
pub fn bootstrap_view(
    scene: &SceneGraph,
    view: &CameraView,
    rendered: DepthMap,
    config: &BootstrapConfig,
) -> Result<BootstrapResult> {
    let frame = frame_for_time(scene, view.timestamp)
        .ok_or_else(|| Error::Dataset("scene has no LiDAR frames".into()))?;
    let points = accumulate_lidar_clamped(scene, frame, config.accumulation_frames)?;
    let candidates = project_points(&points, view, scene.lidar_max_range);
    // The deviation rule is meant to catch occluded and stale returns, not a
    // global scale error of the field, so it compares against the render after
    // a preliminary affine alignment on all candidates.
    let reference = match fit_rectifier(
        &apply_selection_rules(candidates.clone(), view.width, view.height, None, 0.0),
        &rendered,
    ) {
        Ok(pre) => rectify(&rendered, &pre),
        Err(_) => rendered.clone(),
    };
    let sparse = apply_selection_rules(
        candidates,
        view.width,
        view.height,
        Some(&reference),
        config.deviation_threshold,
    );
    let rectifier = fit_rectifier(&sparse, &rendered)?;
    let rectified = rectify(&rendered, &rectifier);
    Ok(BootstrapResult {
        rendered,
        sparse,
        rectifier,
        rectified,
    })
}

/// Cached rectified depth targets, one slot per training view.
#[derive(Debug, Clone, Default)]
pub struct BootstrapCache {
    pub targets: Vec<Option<DepthMap>>,
    pub rectifiers: Vec<Option<LinearRectifier>>,
    pub last_epoch: Option<usize>,
    pub updates: usize,
}

impl BootstrapCache {
    pub fn new(views: usize) -> Self {
        Self {
            targets: vec![None; views],
            rectifiers: vec![None; views],
            last_epoch: None,
            updates: 0,
        }
    }

    /// Whether the targets are due for recomputation at `epoch`.
    pub fn due(&self, epoch: usize, interval: usize) -> bool {
        match self.last_epoch {
            None => true,
            Some(last) => epoch >= last + interval.max(1),
        }
    }
}

/// Recomputes the rectified targets of every view from the current field.
/// A degenerate fit keeps that view's previous target.
pub fn bootstrap_step(
    scene: &SceneGraph,
    views: &[CameraView],
    config: &BootstrapConfig,
    cache: &mut BootstrapCache,
    epoch: usize,
) {
    if cache.targets.len() != views.len() {
        *cache = BootstrapCache::new(views.len());
    }
    let results: Vec<Result<BootstrapResult>> = views
        .par_iter()
        .map(|v| bootstrap_view(scene, v, render_depth(scene, v, v.timestamp), config))
        .collect();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => {
                cache.targets[i] = Some(r.rectified);
                cache.rectifiers[i] = Some(r.rectifier);
            }
            Err(e) => warn!("bootstrap view {i}: {e}; keeping the previous target"),
        }
    }
    cache.last_epoch = Some(epoch);
    cache.updates += 1;
}
