#![allow(dead_code)]

use fxd::dynamics::{DynamicObject, ObjectPose};
use fxd::math::{logit, normalize_quat, quat_from_wxyz, Vec3};
use fxd::render::{accumulate, render, render_traced, GradientSet};
use fxd::scene::{CameraView, GaussianPrimitive, Intrinsics, SceneGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn forward_view(width: u32, height: u32) -> CameraView {
    let f = width as f64;
    CameraView::look_along(
        Intrinsics { fx: f, fy: f, cx: width as f64 / 2.0, cy: height as f64 / 2.0 },
        width,
        height,
        Vec3::zeros(),
        Vec3::x(),
        Vec3::z(),
        0.0,
    )
}

/// Random anisotropic primitives in front of [`forward_view`]; the first
/// `dynamic` of them belong to a moving box.
pub fn random_scene(n: usize, dynamic: usize, seed: u64) -> SceneGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut primitives = Vec::new();
    for _ in 0..n {
        let mean = Vec3::new(rng.gen_range(2.5..6.0), rng.gen_range(-1.5..1.5), rng.gen_range(-1.2..1.2));
        let scale = Vec3::from_fn(|_, _| rng.gen_range(0.06..0.35));
        let color = Vec3::from_fn(|_, _| rng.gen_range(0.1..0.9));
        let q = quat_from_wxyz([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let mut p = GaussianPrimitive::new(mean, scale, 0.5, color, 2).with_rotation(normalize_quat(&q));
        p.opacity_logit = logit(rng.gen_range(0.2..0.8));
        p.color_taylor = vec![Vec3::from_fn(|_, _| rng.gen_range(-0.3..0.3)), Vec3::from_fn(|_, _| rng.gen_range(-0.2..0.2))];
        primitives.push(p);
    }
    let mut objects = Vec::new();
    if dynamic > 0 {
        let mut car = DynamicObject {
            id: "car".into(),
            dims: Vec3::new(3.0, 2.0, 1.5),
            poses: vec![
                ObjectPose { timestamp: 0.0, rotation: quat_from_wxyz([0.99, 0.0, 0.0, 0.1]), translation: Vec3::new(4.0, 0.2, 0.1) },
                ObjectPose { timestamp: 1.0, rotation: quat_from_wxyz([0.98, 0.0, 0.05, 0.2]), translation: Vec3::new(4.5, 0.0, 0.0) },
            ],
        };
        car.renormalize();
        objects.push(car);
        for p in primitives.iter_mut().take(dynamic) {
            p.object = Some(0);
            p.mean = Vec3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
        }
    }
    SceneGraph { primitives, objects, taylor_order: 2, color_reference_time: 0.0, ..SceneGraph::default() }
}

/// Smooth probe loss `Σ wc·color + Σ wd·depth`.
pub struct Probe {
    pub color: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
}

impl Probe {
    /// Random weights; depth weights vanish where the base render is nearly
    /// transparent, since depth validity switches on there.
    pub fn new(scene: &SceneGraph, view: &CameraView, t: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = view.pixel_count();
        let base = render(scene, view, t);
        let color = (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let depth = (0..n)
            .map(|i| if base.weight[i] < 1e-2 { 0.0 } else { rng.gen_range(-0.1..0.1) })
            .collect();
        Self { color, depth }
    }

    pub fn value(&self, scene: &SceneGraph, view: &CameraView, t: f64) -> f64 {
        let out = render(scene, view, t);
        let mut sum = 0.0;
        for i in 0..view.pixel_count() {
            let c = out.color.pixels[i];
            sum += (0..3).map(|k| c[k] * self.color[i][k]).sum::<f64>();
            if out.depth.valid[i] {
                sum += out.depth.depth[i] * self.depth[i];
            }
        }
        sum
    }

    pub fn gradient(&self, scene: &SceneGraph, view: &CameraView, t: f64) -> GradientSet {
        let (_, (resolved, raster)) = render_traced(scene, view, t, true);
        let splat = raster.backward(&self.color, Some(&self.depth));
        let mut grads = GradientSet::zeros(scene);
        accumulate(scene, &resolved, view, &raster, &splat, &mut grads);
        grads
    }
}

/// Relative analytic-vs-central-difference errors over `samples` random
/// parameters (primitives and poses), with step `1e-4 · max(1, |x|)`.
pub fn gradient_errors(scene: &SceneGraph, view: &CameraView, t: f64, samples: usize, seed: u64) -> Vec<f64> {
    let probe = Probe::new(scene, view, t, seed);
    let grads = probe.gradient(scene, view, t);
    let prims = scene.pack_primitives();
    let poses = scene.pack_poses();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut errors = Vec::with_capacity(samples);
    for _ in 0..samples {
        let k = rng.gen_range(0..prims.len() + poses.len());
        let (analytic, numeric) = if k < prims.len() {
            let h = 1e-4 * prims[k].abs().max(1.0);
            let eval = |delta: f64| {
                let mut s = scene.clone();
                let mut x = prims.clone();
                x[k] += delta;
                s.unpack_primitives(&x);
                probe.value(&s, view, t)
            };
            (grads.primitives[k], (eval(h) - eval(-h)) / (2.0 * h))
        } else {
            let j = k - prims.len();
            let h = 1e-4 * poses[j].abs().max(1.0);
            let eval = |delta: f64| {
                let mut s = scene.clone();
                let mut x = poses.clone();
                x[j] += delta;
                s.unpack_poses(&x);
                probe.value(&s, view, t)
            };
            (grads.poses[j], (eval(h) - eval(-h)) / (2.0 * h))
        };
        errors.push((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2));
    }
    errors
}
