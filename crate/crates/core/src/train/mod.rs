//! Three-stage optimization of a Gaussian field from in-path views and LiDAR:
//! warm-up with single-frame LiDAR depth, depth bootstrapping with
//! densification, then out-of-path supervision through inverse view warping.

pub mod densify;
pub mod init;
pub mod optim;
mod step;

use std::io::Write;
use std::path::Path;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use densify::{densify_and_prune, DensifyConfig, DensifyReport, GradStats};
pub use init::{init_from_lidar, InitConfig};
pub use optim::{Adam, AdamConfig};
pub use step::{backward, view_backward, warp_backward, ViewStep, ViewTarget, WarpStep};

use crate::bootstrap::{
    accumulate_lidar, bootstrap_step, frame_for_time, select_sparse_depth, BootstrapCache,
    BootstrapConfig,
};
use crate::dynamics::{clamp_logistic, DynamicObject};
use crate::error::{Error, Result};
use crate::ivw::drop_depth_edges;
use crate::losses::LossWeights;
use crate::math::Vec3;
use crate::metrics::psnr;
use crate::render::render_color;
use crate::scene::{
    layout, CameraRole, CameraTrack, CameraView, DepthMap, ImageBuffer, LidarFrame, SceneGraph,
    DEFAULT_TAYLOR_ORDER, POSE_PARAMS,
};
use crate::synth::{Benchmark, Dataset};

/// Learning-rate multipliers of each parameter block relative to the base rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrScale {
    pub mean: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub color: f64,
    pub taylor: f64,
    pub pose: f64,
}

impl Default for LrScale {
    fn default() -> Self {
        Self {
            mean: 0.4,
            rotation: 0.4,
            scale: 2.0,
            opacity: 20.0,
            color: 1.0,
            taylor: 0.2,
            pose: 0.1,
        }
    }
}

/// Half-extents of the box out-of-path views are drawn from, aligned with the
/// driving direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingBox {
    /// Sideways half-extent (m).
    pub lateral: f64,
    /// Vertical half-extent (m).
    pub vertical: f64,
}

impl Default for SamplingBox {
    fn default() -> Self {
        Self {
            lateral: 2.0,
            vertical: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Iterations of warm-up, bootstrapping and out-of-path stages.
    pub stage_iters: [usize; 3],
    pub learning_rate: f64,
    pub lr_scale: LrScale,
    pub adam: AdamConfig,
    /// Occlusion limit of the warped rays.
    pub beta: f64,
    /// Source pixels whose inverse-depth second difference exceeds this
    /// fraction are not warped; `inf` warps everything.
    pub edge_tolerance: f64,
    /// Lift warp sources with the rectified targets instead of the field's
    /// own rendered depth.
    pub warp_rectified: bool,
    pub sampling: SamplingBox,
    /// Out-of-path supervision in stage 3.
    pub use_ivw: bool,
    /// Rectified dense depth targets from stage 2 on; otherwise single-frame
    /// LiDAR depth throughout.
    pub use_bootstrap: bool,
    /// Keep single-frame LiDAR depth alongside the rectified targets.
    pub lidar_with_rectified: bool,
    pub seed: u64,
    /// Iterations between metrics records.
    pub eval_interval: usize,
    pub bootstrap: BootstrapConfig,
    pub densify: DensifyConfig,
    pub init: InitConfig,
    pub losses: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage_iters: [500, 1500, 1000],
            learning_rate: 2.5e-3,
            lr_scale: LrScale::default(),
            adam: AdamConfig::default(),
            beta: 0.95,
            edge_tolerance: 0.05,
            warp_rectified: true,
            sampling: SamplingBox::default(),
            use_ivw: true,
            use_bootstrap: true,
            lidar_with_rectified: false,
            seed: 0,
            eval_interval: 100,
            bootstrap: BootstrapConfig::default(),
            densify: DensifyConfig::default(),
            init: InitConfig::default(),
            losses: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta {} is outside [0, 1]", self.beta)));
        }
        if !(self.edge_tolerance > 0.0) {
            return Err(Error::Config("edge tolerance must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        if !(self.sampling.lateral >= 0.0) || !(self.sampling.vertical >= 0.0) {
            return Err(Error::Config("sampling box extents must be non-negative".into()));
        }
        if self.eval_interval == 0 || self.densify.interval == 0 {
            return Err(Error::Config("intervals must be positive".into()));
        }
        self.losses.validate()
    }

    pub fn total_iters(&self) -> usize {
        self.stage_iters.iter().sum()
    }

    /// Stage (1, 2 or 3) of a zero-based iteration.
    pub fn stage_of(&self, iteration: usize) -> u8 {
        let [a, b, _] = self.stage_iters;
        if iteration < a {
            1
        } else if iteration < a + b {
            2
        } else {
            3
        }
    }

    /// Per-column learning rates of a primitive row.
    fn primitive_rates(&self, stride: usize) -> Vec<f64> {
        let s = &self.lr_scale;
        let base = self.learning_rate;
        (0..stride)
            .map(|k| {
                base * match k {
                    k if k < layout::ROTATION => s.mean,
                    k if k < layout::LOG_SCALE => s.rotation,
                    k if k < layout::OPACITY => s.scale,
                    k if k < layout::COLOR0 => s.opacity,
                    k if k < layout::TAYLOR => s.color,
                    _ => s.taylor,
                }
            })
            .collect()
    }
}

/// One in-path training view with its image.
#[derive(Debug, Clone)]
pub struct TrainView {
    pub camera: String,
    pub frame: usize,
    pub view: CameraView,
    pub image: ImageBuffer,
    /// Horizontal driving direction at this view.
    pub heading: Vec3,
}

impl TrainView {
    pub fn label(&self) -> String {
        format!("{}/{:04}", self.camera, self.frame)
    }
}

/// Everything training may read: in-path views, LiDAR, tracked boxes.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub views: Vec<TrainView>,
    pub lidar: Vec<LidarFrame>,
    pub objects: Vec<DynamicObject>,
    pub background: [f64; 3],
    pub lidar_max_range: f64,
    pub taylor_order: usize,
}

/// Horizontal travel direction of each view of a track, from the neighbouring
/// camera centres; falls back to the optical axis for a single view.
fn track_headings(views: &[CameraView]) -> Vec<Vec3> {
    let flat = |v: Vec3| {
        let h = Vec3::new(v.x, v.y, 0.0);
        (h.norm() > 1e-9).then(|| h.normalize())
    };
    (0..views.len())
        .map(|i| {
            let a = views[i.saturating_sub(1)].center();
            let b = views[(i + 1).min(views.len() - 1)].center();
            flat(b - a)
                .or_else(|| flat(views[i].forward()))
                .unwrap_or_else(Vec3::x)
        })
        .collect()
}

impl TrainingData {
    /// Loads the in-path cameras of a dataset; evaluation cameras are never touched.
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        let mut views = Vec::new();
        for cam in dataset.in_path_cameras() {
            let cam_views: Vec<CameraView> = (0..cam.views.len())
                .map(|f| dataset.view(&cam.name, f))
                .collect::<Result<_>>()?;
            for (f, (view, heading)) in cam_views.iter().zip(track_headings(&cam_views)).enumerate() {
                views.push(TrainView {
                    camera: cam.name.clone(),
                    frame: f,
                    view: view.clone(),
                    image: dataset.load_image(&cam.name, f)?,
                    heading,
                });
            }
        }
        let m = dataset.manifest();
        Ok(Self {
            views,
            lidar: dataset.load_lidar()?,
            objects: dataset.objects(),
            background: m.background,
            lidar_max_range: m.lidar_max_range,
            taylor_order: DEFAULT_TAYLOR_ORDER,
        })
    }

    /// In-memory equivalent of [`Self::from_dataset`] for a generated benchmark.
    pub fn from_benchmark(bench: &Benchmark) -> Self {
        let mut views = Vec::new();
        for track in bench.scene.in_path_tracks() {
            for (f, (view, heading)) in track.views.iter().zip(track_headings(&track.views)).enumerate() {
                views.push(TrainView {
                    camera: track.name.clone(),
                    frame: f,
                    view: view.clone(),
                    image: bench.image(view),
                    heading,
                });
            }
        }
        Self {
            views,
            lidar: bench.scene.lidar.clone(),
            objects: bench.scene.objects.clone(),
            background: bench.scene.background,
            lidar_max_range: bench.scene.lidar_max_range,
            taylor_order: DEFAULT_TAYLOR_ORDER,
        }
    }

    /// Scene holding the data's cameras, LiDAR and boxes but no primitives.
    pub fn empty_scene(&self) -> SceneGraph {
        let mut cameras: Vec<CameraTrack> = Vec::new();
        for v in &self.views {
            match cameras.iter_mut().find(|c| c.name == v.camera) {
                Some(c) => c.views.push(v.view.clone()),
                None => cameras.push(CameraTrack {
                    name: v.camera.clone(),
                    role: CameraRole::InPath,
                    views: vec![v.view.clone()],
                }),
            }
        }
        SceneGraph {
            primitives: Vec::new(),
            objects: self.objects.clone(),
            cameras,
            lidar: self.lidar.clone(),
            taylor_order: self.taylor_order,
            color_reference_time: 0.0,
            background: self.background,
            lidar_max_range: self.lidar_max_range,
        }
    }

    /// Single-frame LiDAR depth of every view: the sweep closest in time,
    /// reduced by the timestamp and depth rules.
    pub fn lidar_depth(&self, scene: &SceneGraph) -> Result<Vec<DepthMap>> {
        self.views
            .iter()
            .map(|v| {
                let Some(frame) = frame_for_time(scene, v.view.timestamp) else {
                    return Ok(DepthMap::invalid(v.view.width, v.view.height));
                };
                let points = accumulate_lidar(scene, frame, 1)?;
                Ok(select_sparse_depth(&points, &v.view, None, 0.0, scene.lidar_max_range).to_depth_map())
            })
            .collect()
    }
}

/// Moves `view` by a uniform offset in the box spanned by the sideways
/// direction of `heading` and world up (+z). Orientation and time are kept.
pub fn sample_out_of_path(view: &CameraView, heading: &Vec3, bx: &SamplingBox, rng: &mut impl Rng) -> CameraView {
    let up = Vec3::z();
    let side = up.cross(heading);
    let side = if side.norm() > 1e-9 { side.normalize() } else { Vec3::y() };
    let a = if bx.lateral > 0.0 { rng.gen_range(-bx.lateral..=bx.lateral) } else { 0.0 };
    let b = if bx.vertical > 0.0 { rng.gen_range(-bx.vertical..=bx.vertical) } else { 0.0 };
    view.translated(&(side * a + up * b))
}

/// Mean per-view PSNR of the field over the training views.
pub fn in_path_psnr(scene: &SceneGraph, views: &[TrainView]) -> f64 {
    let sum: f64 = views
        .iter()
        .map(|v| psnr(&render_color(scene, &v.view, v.view.timestamp), &v.image, None).unwrap_or(0.0))
        .sum();
    sum / views.len().max(1) as f64
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub stage: u8,
    /// Mean weighted in-path loss since the previous record.
    pub loss: f64,
    pub rgb: f64,
    pub depth_near: f64,
    pub depth_far: f64,
    /// Mean out-of-path loss since the previous record (0 without IVW).
    pub out_of_path: f64,
    pub primitives: usize,
    /// Mean PSNR over a fixed subset of training views.
    pub psnr_in_path: f64,
    pub bootstrap_updates: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub scene: SceneGraph,
    pub log: Vec<MetricsRecord>,
    /// Weighted in-path loss of every iteration.
    pub losses: Vec<f64>,
}

impl TrainOutcome {
    /// Writes the log as JSON lines.
    pub fn write_log(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for r in &self.log {
            let line = serde_json::to_string(r).expect("record serializes");
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Window {
    n: usize,
    loss: f64,
    rgb: f64,
    depth_near: f64,
    depth_far: f64,
    n_out: usize,
    out: f64,
}

impl Window {
    fn mean(v: f64, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            v / n as f64
        }
    }
}

/// Views used for the in-path PSNR of the metrics log.
fn monitor_subset(views: &[TrainView]) -> Vec<TrainView> {
    let step = (views.len() / 6).max(1);
    views.iter().step_by(step).cloned().collect()
}

/// Trains a field on `data` from a LiDAR initialization.
pub fn train(data: &TrainingData, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut scene = data.empty_scene();
    scene.primitives = init_from_lidar(data, &config.init);
    info!("initialized {} primitives from LiDAR", scene.primitives.len());
    train_from(data, scene, config)
}

/// Trains starting from a given scene (its cameras and LiDAR are taken from `data`).
pub fn train_from(data: &TrainingData, mut scene: SceneGraph, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.views.is_empty() {
        return Err(Error::Dataset("no in-path views to train on".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let stride = scene.params_per_primitive();
    let prim_lr = config.primitive_rates(stride);
    let pose_lr = vec![config.learning_rate * config.lr_scale.pose; POSE_PARAMS];
    let keyframes: usize = scene.objects.iter().map(|o| o.poses.len()).sum();
    let mut prim_opt = Adam::new(config.adam, stride, scene.primitives.len());
    let mut pose_opt = Adam::new(config.adam, POSE_PARAMS, keyframes);

    let lidar_depth = data.lidar_depth(&scene)?;
    let views: Vec<CameraView> = data.views.iter().map(|v| v.view.clone()).collect();
    let monitor = monitor_subset(&data.views);
    let mut cache = BootstrapCache::new(views.len());
    let mut stats = GradStats::new(scene.primitives.len());
    let mut window = Window::default();
    let mut log = Vec::new();
    let mut losses = Vec::with_capacity(config.total_iters());
    let [s1, _, _] = config.stage_iters;

    for it in 0..config.total_iters() {
        let stage = config.stage_of(it);
        if stage >= 2 && config.use_bootstrap {
            let epoch = (it - s1) / views.len();
            if cache.due(epoch, config.bootstrap.interval_epochs) {
                bootstrap_step(&scene, &views, &config.bootstrap, &mut cache, epoch);
                debug!("bootstrap update {} at iteration {it}", cache.updates);
            }
        }

        let k = rng.gen_range(0..data.views.len());
        let tv = &data.views[k];
        let label = tv.label();
        let rectified = (stage >= 2 && config.use_bootstrap)
            .then(|| cache.targets[k].as_ref())
            .flatten();
        let depth_target = rectified.unwrap_or(&lidar_depth[k]);
        let target = ViewTarget {
            name: &label,
            view: &tv.view,
            image: &tv.image,
            depth: Some(depth_target),
        };
        let step = view_backward(&scene, &target, &config.losses, &mut rng)?;
        let mut grads = step.grads;
        let mut loss = step.loss;
        if rectified.is_some() && config.lidar_with_rectified {
            let extra = ViewTarget {
                depth: Some(&lidar_depth[k]),
                ..target
            };
            let lidar_step = view_backward(&scene, &extra, &LossWeights { rgb: 0.0, ssim: 0.0, ..config.losses }, &mut rng)?;
            grads.add_assign(&lidar_step.grads);
            loss += lidar_step.loss;
        }
        window.n += 1;
        window.loss += loss;
        window.rgb += step.parts.rgb;
        window.depth_near += step.parts.depth_near;
        window.depth_far += step.parts.depth_far;
        losses.push(loss);
        if stage == 2 {
            stats.add(&step.screen_norms);
        }

        if stage == 3 && config.use_ivw {
            let out_view = sample_out_of_path(&tv.view, &tv.heading, &config.sampling, &mut rng);
            let depth = drop_depth_edges(
                match rectified {
                    Some(r) if config.warp_rectified => r,
                    _ => &step.render.depth,
                },
                config.edge_tolerance,
            );
            let warp = warp_backward(&scene, &tv.view, &out_view, &depth, &tv.image, config.beta, &config.losses, &format!("{label} (out of path)"))?;
            grads.add_assign(&warp.grads);
            window.n_out += 1;
            window.out += warp.loss;
        }

        let mut params = scene.pack_primitives();
        prim_opt.step(&mut params, &grads.primitives, &prim_lr);
        scene.unpack_primitives(&params);
        if keyframes > 0 {
            let mut poses = scene.pack_poses();
            pose_opt.step(&mut poses, &grads.poses, &pose_lr);
            scene.unpack_poses(&poses);
        }
        scene.renormalize();
        for p in scene.primitives.iter_mut().filter(|p| p.object.is_some()) {
            p.mean = p.mean.map(clamp_logistic);
        }

        if stage == 2 && (it + 1 - s1) % config.densify.interval == 0 {
            let report = densify_and_prune(&mut scene, &stats, &config.densify, &mut rng);
            prim_opt.retain_and_grow(&report.kept, report.cloned);
            stats = GradStats::new(scene.primitives.len());
            debug!("densify at {it}: +{} −{} → {}", report.cloned, report.pruned, scene.primitives.len());
        }

        if (it + 1) % config.eval_interval == 0 || it + 1 == config.total_iters() {
            let record = MetricsRecord {
                iteration: it + 1,
                stage,
                loss: Window::mean(window.loss, window.n),
                rgb: Window::mean(window.rgb, window.n),
                depth_near: Window::mean(window.depth_near, window.n),
                depth_far: Window::mean(window.depth_far, window.n),
                out_of_path: Window::mean(window.out, window.n_out),
                primitives: scene.primitives.len(),
                psnr_in_path: in_path_psnr(&scene, &monitor),
                bootstrap_updates: cache.updates,
            };
            info!(
                "it {} stage {} loss {:.4} psnr {:.2} prims {}",
                record.iteration, record.stage, record.loss, record.psnr_in_path, record.primitives
            );
            log.push(record);
            window = Window::default();
        }
    }
    Ok(TrainOutcome { scene, log, losses })
}
