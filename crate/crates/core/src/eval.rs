//! Held-out evaluation: PSNR, SSIM and FID on the evaluation cameras.

use serde::Serialize;

use crate::error::Result;
use crate::fid::{fid, image_features, FeatureStats};
use crate::metrics::{psnr, ssim};
use crate::render::render_color;
use crate::scene::{CameraRole, CameraView, ImageBuffer, SceneGraph};
use crate::synth::{Benchmark, Dataset};

/// A held-out view and its ground-truth image.
#[derive(Debug, Clone)]
pub struct EvalView {
    pub camera: String,
    pub frame: usize,
    pub view: CameraView,
    pub image: ImageBuffer,
}

pub fn eval_views_from_dataset(dataset: &Dataset) -> Result<Vec<EvalView>> {
    let split = dataset.eval_split();
    let mut out = Vec::new();
    for cam in split.cameras() {
        for f in 0..cam.views.len() {
            out.push(EvalView {
                camera: cam.name.clone(),
                frame: f,
                view: split.view(&cam.name, f)?,
                image: split.load_image(&cam.name, f)?,
            });
        }
    }
    Ok(out)
}

pub fn eval_views_from_benchmark(bench: &Benchmark) -> Vec<EvalView> {
    let mut out = Vec::new();
    for track in bench.scene.cameras.iter().filter(|c| c.role == CameraRole::Eval) {
        for (f, v) in track.views.iter().enumerate() {
            out.push(EvalView {
                camera: track.name.clone(),
                frame: f,
                view: v.clone(),
                image: bench.image(v),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CameraScore {
    pub camera: String,
    pub psnr: f64,
    pub ssim: f64,
    pub views: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Mean per-view PSNR.
    pub psnr: f64,
    /// Mean per-view SSIM.
    pub ssim: f64,
    /// FID between rendered and ground-truth image features.
    pub fid: f64,
    pub views: usize,
    pub cameras: Vec<CameraScore>,
}

/// Renders every evaluation view and scores it against its image.
pub fn evaluate(scene: &SceneGraph, views: &[EvalView]) -> Result<EvalReport> {
    let mut per_view = Vec::with_capacity(views.len());
    let mut rendered_features = Vec::new();
    let mut gt_features = Vec::new();
    for v in views {
        let img = render_color(scene, &v.view, v.view.timestamp);
        per_view.push((v.camera.as_str(), psnr(&img, &v.image, None)?, ssim(&img, &v.image, None)?));
        rendered_features.push(image_features(&img));
        gt_features.push(image_features(&v.image));
    }
    let mut cameras: Vec<CameraScore> = Vec::new();
    for &(cam, p, s) in &per_view {
        match cameras.iter_mut().find(|c| c.camera == cam) {
            Some(c) => {
                c.psnr += p;
                c.ssim += s;
                c.views += 1;
            }
            None => cameras.push(CameraScore { camera: cam.to_string(), psnr: p, ssim: s, views: 1 }),
        }
    }
    for c in &mut cameras {
        c.psnr /= c.views as f64;
        c.ssim /= c.views as f64;
    }
    let n = per_view.len().max(1) as f64;
    let fid_value = if views.len() >= 2 {
        fid(&FeatureStats::from_features(&rendered_features)?, &FeatureStats::from_features(&gt_features)?)?
    } else {
        f64::NAN
    };
    Ok(EvalReport {
        psnr: per_view.iter().map(|v| v.1).sum::<f64>() / n,
        ssim: per_view.iter().map(|v| v.2).sum::<f64>() / n,
        fid: fid_value,
        views: views.len(),
        cameras,
    })
}
