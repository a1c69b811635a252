//! Procedural driving benchmark: a street with buildings, poles and moving cars,
//! an ego rig of in-path cameras plus laterally displaced evaluation cameras,
//! and a spinning LiDAR. Ground truth images come from a dense Gaussian field
//! laid on the analytic surfaces; depth and LiDAR come from exact ray casts.

mod dataset;
pub mod geometry;

pub use dataset::{
    Dataset, EvalSplit, Manifest, ManifestCamera, ManifestLidar, DATASET_FORMAT, DATASET_VERSION,
};

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{logistic_from_local, DynamicObject, ObjectPose};
use crate::error::{Error, Result};
use crate::math::{logit, matrix_to_quat, yaw_matrix, Mat3, Vec3};
use crate::render::{render_color, render_depth};
use crate::scene::{
    CameraRole, CameraTrack, CameraView, DepthMap, GaussianPrimitive, Intrinsics, LidarFrame,
    LidarPoint, SceneGraph,
};
use geometry::{raycast, sample_surface, Material, Shape, ShapeKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Trajectory {
    Straight,
    /// Constant curvature (1/m); positive turns left.
    Arc { curvature: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarSpec {
    pub channels: usize,
    /// Lowest and highest beam elevation (degrees).
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
    /// Standard deviation of the range noise (m).
    pub range_noise: f64,
    /// Standard deviation of the recorded sensor position error (m).
    pub pose_jitter: f64,
    /// Mount height above the ground (m).
    pub height: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            channels: 32,
            elevation_min_deg: -25.0,
            elevation_max_deg: 10.0,
            azimuth_step_deg: 1.0,
            max_range: 40.0,
            range_noise: 0.02,
            pose_jitter: 0.0,
            height: 1.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutSpec {
    pub road_half_width: f64,
    /// Lateral distance of building fronts from the path.
    pub building_setback: f64,
    /// Mean spacing of roadside poles (m).
    pub pole_spacing: f64,
    pub pole_radius: f64,
    pub cars: usize,
    /// The first car cuts into the ego lane.
    pub lane_change: bool,
    /// Spacing of the ground-truth Gaussians on static surfaces (m).
    pub primitive_spacing: f64,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        Self {
            road_half_width: 6.0,
            building_setback: 10.0,
            pole_spacing: 9.0,
            pole_radius: 0.15,
            cars: 2,
            lane_change: false,
            primitive_spacing: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    /// Focal length in pixels (both axes).
    pub focal: f64,
    pub frames: usize,
    /// Frame rate (Hz).
    pub rate: f64,
    /// Ego speed (m/s).
    pub speed: f64,
    pub trajectory: Trajectory,
    pub camera_height: f64,
    /// Yaw of the two side in-path cameras (degrees, ±).
    pub side_camera_yaw_deg: f64,
    /// Lateral offset of the evaluation cameras (m, ±).
    pub eval_offset: f64,
    pub layout: LayoutSpec,
    pub lidar: LidarSpec,
    pub background: [f64; 3],
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 96,
            height: 64,
            focal: 60.0,
            frames: 30,
            rate: 10.0,
            speed: 10.0,
            trajectory: Trajectory::Straight,
            camera_height: 1.6,
            side_camera_yaw_deg: 45.0,
            eval_offset: 3.0,
            layout: LayoutSpec::default(),
            lidar: LidarSpec::default(),
            background: [0.62, 0.74, 0.88],
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("trajectory has zero frames".into()));
        }
        if self.width == 0 || self.height == 0 || !(self.focal > 0.0) || !(self.rate > 0.0) {
            return Err(Error::Config("image size, focal length and rate must be positive".into()));
        }
        if !(self.layout.primitive_spacing > 0.0) || !(self.lidar.max_range > 0.0) {
            return Err(Error::Config("primitive spacing and LiDAR range must be positive".into()));
        }
        Ok(())
    }

    pub fn timestamp(&self, frame: usize) -> f64 {
        frame as f64 / self.rate
    }

    pub fn path_length(&self) -> f64 {
        self.speed * self.timestamp(self.frames.saturating_sub(1))
    }

    /// Ego position (ground level) and heading at a frame.
    pub fn ego_pose(&self, frame: usize) -> (Vec3, f64) {
        let s = self.speed * self.timestamp(frame);
        match self.trajectory {
            Trajectory::Straight => (Vec3::new(s, 0.0, 0.0), 0.0),
            Trajectory::Arc { curvature } if curvature.abs() > 1e-12 => {
                let th = curvature * s;
                (Vec3::new(th.sin() / curvature, (1.0 - th.cos()) / curvature, 0.0), th)
            }
            Trajectory::Arc { .. } => (Vec3::new(s, 0.0, 0.0), 0.0),
        }
    }

    fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.focal,
            fy: self.focal,
            cx: self.width as f64 / 2.0,
            cy: self.height as f64 / 2.0,
        }
    }

    /// Camera at a frame: lateral offset (left positive) and yaw relative to the path.
    pub fn camera(&self, frame: usize, lateral: f64, yaw: f64) -> CameraView {
        let (pos, heading) = self.ego_pose(frame);
        let left = Vec3::new(-heading.sin(), heading.cos(), 0.0);
        let center = pos + left * lateral + Vec3::z() * self.camera_height;
        let forward = yaw_matrix(heading + yaw) * Vec3::x();
        CameraView::look_along(
            self.intrinsics(),
            self.width,
            self.height,
            center,
            forward,
            Vec3::z(),
            self.timestamp(frame),
        )
    }

    /// Camera names with their role, lateral offset and yaw.
    pub fn rig(&self) -> Vec<(&'static str, CameraRole, f64, f64)> {
        let side = self.side_camera_yaw_deg.to_radians();
        vec![
            ("front", CameraRole::InPath, 0.0, 0.0),
            ("front_left", CameraRole::InPath, 0.0, side),
            ("front_right", CameraRole::InPath, 0.0, -side),
            ("eval_left", CameraRole::Eval, self.eval_offset, 0.0),
            ("eval_right", CameraRole::Eval, -self.eval_offset, 0.0),
        ]
    }

    /// A denser scene with many roadside poles close to the path.
    pub fn occlusion_heavy(seed: u64) -> Self {
        let mut s = Self {
            seed,
            ..Self::default()
        };
        s.layout.pole_spacing = 3.0;
        s.layout.pole_radius = 0.25;
        s.layout.cars = 3;
        s
    }
}

/// Analytic street: static shapes plus moving cars.
#[derive(Debug, Clone)]
pub struct Street {
    pub shapes: Vec<Shape>,
    /// Index in `shapes` of each car (its pose is taken from `objects`).
    pub car_shapes: Vec<usize>,
    pub objects: Vec<DynamicObject>,
    pub car_size: Vec3,
}

const CAR_SIZE: [f64; 3] = [4.4, 1.9, 1.5];
/// Bounding boxes are this much larger than the car body on every axis.
const BOX_MARGIN: f64 = 0.2;

pub fn build_street(spec: &SceneSpec) -> Street {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_57ee7);
    let lay = &spec.layout;
    let x_lo = -15.0;
    let x_hi = spec.path_length() + spec.lidar.max_range + 10.0;
    let mut shapes = Vec::new();
    let hw = lay.road_half_width;
    let back = lay.building_setback;
    shapes.push(Shape {
        kind: ShapeKind::Ground { x0: x_lo, x1: x_hi, y0: -hw, y1: hw },
        material: Material::Road { half_width: hw, lane_offset: hw / 3.0 },
        object: None,
    });
    for side in [-1.0, 1.0] {
        let (y0, y1) = if side > 0.0 { (hw, back) } else { (-back, -hw) };
        shapes.push(Shape {
            kind: ShapeKind::Ground { x0: x_lo, x1: x_hi, y0, y1 },
            material: Material::Sidewalk,
            object: None,
        });
        // buildings
        let mut x = x_lo;
        while x < x_hi {
            let len = rng.gen_range(8.0..16.0);
            let height = rng.gen_range(6.0..13.0);
            let depth = 4.0;
            let base = [rng.gen_range(0.45..0.85), rng.gen_range(0.4..0.75), rng.gen_range(0.35..0.7)];
            let x1 = (x + len).min(x_hi);
            let yc = side * (back + depth / 2.0);
            let mut faces = [true, true, false, false, false, false];
            // face towards the road
            faces[if side > 0.0 { 2 } else { 3 }] = true;
            shapes.push(Shape {
                kind: ShapeKind::Box {
                    center: Vec3::new((x + x1) / 2.0, yc, height / 2.0),
                    half: Vec3::new((x1 - x) / 2.0, depth / 2.0, height / 2.0),
                    rotation: Mat3::identity(),
                    faces,
                },
                material: Material::Facade { base },
                object: None,
            });
            x = x1 + rng.gen_range(0.0..4.0);
        }
        // poles
        let mut x = x_lo + rng.gen_range(0.0..lay.pole_spacing);
        while x < x_hi {
            let band = [rng.gen_range(0.6..0.95), rng.gen_range(0.3..0.8), rng.gen_range(0.1..0.3)];
            shapes.push(Shape {
                kind: ShapeKind::Cylinder { x, y: side * (hw + 0.8), radius: lay.pole_radius, height: 4.5 },
                material: Material::Pole { band },
                object: None,
            });
            x += lay.pole_spacing * rng.gen_range(0.7..1.3);
        }
    }

    let car_size = Vec3::from(CAR_SIZE);
    let dims = car_size + Vec3::repeat(BOX_MARGIN);
    let lane = hw / 3.0 * 1.5;
    let palette = [[0.75, 0.12, 0.1], [0.12, 0.25, 0.7], [0.9, 0.85, 0.8], [0.15, 0.55, 0.25]];
    let mut objects = Vec::new();
    let mut car_shapes = Vec::new();
    for k in 0..lay.cars {
        let y0 = if k % 2 == 0 { lane } else { -lane };
        let x0 = 8.0 + 9.0 * k as f64 + rng.gen_range(0.0..3.0);
        let v = spec.speed + rng.gen_range(-3.0..3.0);
        let change = k == 0 && lay.lane_change;
        let t_end = spec.timestamp(spec.frames.saturating_sub(1)).max(1e-6);
        let poses = (0..spec.frames)
            .map(|f| {
                let t = spec.timestamp(f);
                let (y, dy) = if change {
                    let s = (t / t_end).clamp(0.0, 1.0);
                    let smooth = s * s * (3.0 - 2.0 * s);
                    let ds = 6.0 * s * (1.0 - s) / t_end;
                    (y0 + (0.8 - y0) * smooth, (0.8 - y0) * ds)
                } else {
                    (y0, 0.0)
                };
                let yaw = dy.atan2(v);
                ObjectPose {
                    timestamp: t,
                    rotation: matrix_to_quat(&yaw_matrix(yaw)),
                    translation: Vec3::new(x0 + v * t, y, car_size.z / 2.0),
                }
            })
            .collect();
        objects.push(DynamicObject { id: format!("car{k}"), dims, poses });
        car_shapes.push(shapes.len());
        shapes.push(Shape {
            kind: ShapeKind::Box {
                center: Vec3::zeros(),
                half: car_size / 2.0,
                rotation: Mat3::identity(),
                faces: [true, true, true, true, false, true],
            },
            material: Material::Car { body: palette[k % palette.len()] },
            object: Some(k),
        });
    }
    Street {
        shapes,
        car_shapes,
        objects,
        car_size,
    }
}

impl Street {
    /// Shapes with the cars placed at time `t`; cars without a pose are dropped.
    pub fn shapes_at(&self, t: f64) -> Vec<Shape> {
        let mut out = Vec::with_capacity(self.shapes.len());
        for (i, s) in self.shapes.iter().enumerate() {
            match s.object {
                None => out.push(*s),
                Some(k) => {
                    let Ok(pose) = self.objects[k].pose_at(t) else { continue };
                    if let ShapeKind::Box { half, faces, .. } = s.kind {
                        out.push(Shape {
                            kind: ShapeKind::Box { center: pose.translation, half, rotation: pose.rotation, faces },
                            ..self.shapes[i]
                        });
                    }
                }
            }
        }
        out
    }

    /// Exact camera-frame depth of every pixel; sky pixels are invalid.
    pub fn depth_map(&self, view: &CameraView) -> DepthMap {
        let shapes = self.shapes_at(view.timestamp);
        let origin = view.center();
        let fwd = view.forward();
        let mut m = DepthMap::invalid(view.width, view.height);
        for v in 0..view.height {
            for u in 0..view.width {
                let dir = (view.unproject(u as f64, v as f64, 1.0) - origin).normalize();
                if let Some(hit) = raycast(&shapes, &origin, &dir) {
                    m.set(u, v, hit.distance * dir.dot(&fwd));
                }
            }
        }
        m
    }
}

fn disc(sample: &geometry::SurfaceSample, spacing: f64, color: [f64; 3], taylor_order: usize) -> GaussianPrimitive {
    let r = Mat3::from_columns(&[sample.tangent, sample.bitangent, sample.normal]);
    let mut p = GaussianPrimitive::new(
        sample.point,
        Vec3::new(0.5 * spacing, 0.5 * spacing, 0.02),
        GT_OPACITY,
        Vec3::from(color),
        taylor_order,
    );
    p.rotation = matrix_to_quat(&r);
    p
}

const GT_OPACITY: f64 = 0.95;

/// Ground-truth Gaussian field of the street, without cameras or LiDAR.
pub fn gt_field(spec: &SceneSpec, street: &Street) -> SceneGraph {
    let spacing = spec.layout.primitive_spacing;
    let mut primitives = Vec::new();
    for s in street.shapes.iter().filter(|s| s.object.is_none()) {
        let sp = match s.kind {
            ShapeKind::Cylinder { .. } => spacing * 0.5,
            _ => spacing,
        };
        for sample in sample_surface(s, sp) {
            primitives.push(disc(&sample, sp, s.color(&sample.point), 2));
        }
    }
    let car_spacing = spacing * 0.8;
    for (k, &si) in street.car_shapes.iter().enumerate() {
        let shape = &street.shapes[si];
        let dims = street.objects[k].dims;
        for sample in sample_surface(shape, car_spacing) {
            let mut p = disc(&sample, car_spacing, shape.color(&sample.point), 2);
            p.mean = logistic_from_local(&sample.point, &dims);
            p.object = Some(k);
            primitives.push(p);
        }
    }
    SceneGraph {
        primitives,
        objects: street.objects.clone(),
        background: spec.background,
        lidar_max_range: spec.lidar.max_range,
        ..SceneGraph::default()
    }
}

/// Sensor pose (world→sensor rotation and translation) at a frame, exact.
fn lidar_pose(spec: &SceneSpec, frame: usize) -> (Mat3, Vec3) {
    let (pos, heading) = spec.ego_pose(frame);
    let r_world = yaw_matrix(heading);
    let center = pos + Vec3::z() * spec.lidar.height;
    let rot = r_world.transpose();
    (rot, -(rot * center))
}

/// One LiDAR sweep: exact ray casts with Gaussian range noise; the recorded
/// pose carries the configured jitter.
pub fn simulate_lidar(spec: &SceneSpec, street: &Street, frame: usize) -> LidarFrame {
    let l = &spec.lidar;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9e37_79b9).wrapping_add(frame as u64 + 1));
    let noise = Normal::new(0.0, l.range_noise.max(0.0)).expect("finite noise");
    let jitter = Normal::new(0.0, l.pose_jitter.max(0.0)).expect("finite jitter");
    let t = spec.timestamp(frame);
    let shapes = street.shapes_at(t);
    let (rot, trans) = lidar_pose(spec, frame);
    let center = -(rot.transpose() * trans);
    let n_az = (360.0 / l.azimuth_step_deg).round().max(1.0) as usize;
    let mut points = Vec::new();
    for c in 0..l.channels {
        let el = if l.channels > 1 {
            l.elevation_min_deg + (l.elevation_max_deg - l.elevation_min_deg) * c as f64 / (l.channels - 1) as f64
        } else {
            l.elevation_min_deg
        }
        .to_radians();
        for a in 0..n_az {
            let az = a as f64 * 2.0 * PI / n_az as f64;
            let dir_s = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let dir_w = rot.transpose() * dir_s;
            let Some(hit) = raycast(&shapes, &center, &dir_w) else { continue };
            if hit.distance > l.max_range {
                continue;
            }
            let range = if l.range_noise > 0.0 {
                (hit.distance + noise.sample(&mut rng)).clamp(1e-3, l.max_range)
            } else {
                hit.distance
            };
            points.push(LidarPoint {
                position: dir_s * range,
                object: shapes[hit.shape].object,
            });
        }
    }
    let recorded = if l.pose_jitter > 0.0 {
        let offset = Vec3::new(jitter.sample(&mut rng), jitter.sample(&mut rng), jitter.sample(&mut rng));
        trans - rot * offset
    } else {
        trans
    };
    LidarFrame {
        points,
        rotation: rot,
        translation: recorded,
        timestamp: t,
    }
}

/// In-memory benchmark: ground-truth scene (with all cameras and LiDAR),
/// exact depth per camera view, and rendered images.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub spec: SceneSpec,
    pub street: Street,
    pub scene: SceneGraph,
}

impl Benchmark {
    pub fn new(spec: &SceneSpec) -> Result<Self> {
        spec.validate()?;
        let street = build_street(spec);
        let mut scene = gt_field(spec, &street);
        scene.cameras = spec
            .rig()
            .into_iter()
            .map(|(name, role, lateral, yaw)| CameraTrack {
                name: name.into(),
                role,
                views: (0..spec.frames).map(|f| spec.camera(f, lateral, yaw)).collect(),
            })
            .collect();
        scene.lidar = (0..spec.frames)
            .into_par_iter()
            .map(|f| simulate_lidar(spec, &street, f))
            .collect();
        scene.validate()?;
        Ok(Self {
            spec: *spec,
            street,
            scene,
        })
    }

    pub fn view(&self, camera: &str, frame: usize) -> Option<&CameraView> {
        self.scene.track(camera)?.views.get(frame)
    }

    pub fn image(&self, view: &CameraView) -> crate::scene::ImageBuffer {
        render_color(&self.scene, view, view.timestamp)
    }

    /// Normalized depth of the ground-truth field, consistent with [`Self::image`].
    /// Differs from the analytic surface at silhouettes and grazing ground,
    /// where a pixel's footprint spans a range of depths.
    pub fn depth(&self, view: &CameraView) -> DepthMap {
        render_depth(&self.scene, view, view.timestamp)
    }

    /// Ray-cast surface depth of the analytic street.
    pub fn analytic_depth(&self, view: &CameraView) -> DepthMap {
        self.street.depth_map(view)
    }

    /// Writes the dataset directory (manifest, images, depth, LiDAR, ground-truth scene).
    pub fn write(&self, out: &Path) -> Result<()> {
        dataset::write_dataset(self, out)
    }
}

/// Generates the benchmark for `spec` and writes it to `out`.
pub fn generate(spec: &SceneSpec, out: &Path) -> Result<Benchmark> {
    let bench = Benchmark::new(spec)?;
    bench.write(out)?;
    Ok(bench)
}

/// Known-error modifications of a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Scale all geometry about the first view's centre by the magnitude.
    ScaleDepth,
    /// Add `magnitude` random floaters in front of the first view.
    AddFloaters,
    /// Add isotropic Gaussian noise of standard deviation `magnitude` to positions.
    JitterPositions,
}

/// Applies a perturbation; magnitude 0 leaves the field unchanged. The
/// reference view is the first view of the first camera.
pub fn perturb_field(scene: &SceneGraph, kind: Perturbation, magnitude: f64, seed: u64) -> Result<SceneGraph> {
    let mut out = scene.clone();
    if magnitude == 0.0 {
        return Ok(out);
    }
    let view = scene
        .cameras
        .first()
        .and_then(|c| c.views.first())
        .ok_or_else(|| Error::Config("perturbation needs a camera view".into()))?;
    let c = view.center();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        Perturbation::ScaleDepth => {
            if !(magnitude > 0.0) {
                return Err(Error::Config("depth scale must be positive".into()));
            }
            let ls = magnitude.ln();
            for p in &mut out.primitives {
                if p.object.is_none() {
                    p.mean = c + (p.mean - c) * magnitude;
                }
                p.log_scale.add_scalar_mut(ls);
            }
            for o in &mut out.objects {
                o.dims *= magnitude;
                for pose in &mut o.poses {
                    pose.translation = c + (pose.translation - c) * magnitude;
                }
            }
        }
        Perturbation::AddFloaters => {
            let n = magnitude.round().max(0.0) as usize;
            let intr = view.intrinsics;
            for _ in 0..n {
                let z = rng.gen_range(1.0..10.0);
                let u = rng.gen_range(0.0..view.width as f64);
                let v = rng.gen_range(0.0..view.height as f64);
                let mean = view.unproject(u, v, z);
                let s = rng.gen_range(0.05..0.3) * z / intr.fx * 10.0;
                let mut p = GaussianPrimitive::new(
                    mean,
                    Vec3::repeat(s),
                    0.5,
                    Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                    scene.taylor_order,
                );
                p.opacity_logit = logit(rng.gen_range(0.3..0.8));
                out.primitives.push(p);
            }
        }
        Perturbation::JitterPositions => {
            let noise = Normal::new(0.0, magnitude.abs()).expect("finite");
            for p in &mut out.primitives {
                let delta = Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
                match p.object {
                    None => p.mean += delta,
                    Some(k) => {
                        let dims = out.objects[k].dims;
                        let local = crate::dynamics::box_constrain(&p.mean, &dims) + delta;
                        p.mean = logistic_from_local(&local, &dims);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneSpec {
        let mut s = SceneSpec { frames: 3, width: 48, height: 32, focal: 30.0, ..SceneSpec::default() };
        s.layout.primitive_spacing = 0.6;
        s.lidar.channels = 8;
        s.lidar.azimuth_step_deg = 4.0;
        s
    }

    #[test]
    fn zero_frames_is_rejected() {
        let spec = SceneSpec { frames: 0, ..small() };
        assert!(Benchmark::new(&spec).is_err());
    }

    #[test]
    fn eval_cameras_are_offset_laterally() {
        let spec = small();
        let front = spec.camera(2, 0.0, 0.0);
        let left = spec.camera(2, spec.eval_offset, 0.0);
        assert!((left.center() - front.center() - Vec3::new(0.0, 3.0, 0.0)).norm() < 1e-12);
        assert_eq!(left.rotation, front.rotation);
    }

    #[test]
    fn noiseless_lidar_matches_exact_ray_casts() {
        let mut spec = small();
        spec.lidar.range_noise = 0.0;
        let street = build_street(&spec);
        let frame = simulate_lidar(&spec, &street, 1);
        let shapes = street.shapes_at(frame.timestamp);
        let center = frame.sensor_center();
        assert!(frame.points.len() > 100);
        for p in frame.points.iter().step_by(17) {
            let dir = frame.rotation.transpose() * p.position.normalize();
            let hit = raycast(&shapes, &center, &dir).unwrap();
            assert!((hit.distance - p.position.norm()).abs() < 1e-6);
        }
    }

    #[test]
    fn car_primitives_stay_inside_their_boxes() {
        let spec = small();
        let b = Benchmark::new(&spec).unwrap();
        let members: Vec<_> = b.scene.primitives.iter().filter(|p| p.object.is_some()).collect();
        assert!(!members.is_empty());
        for p in members {
            let o = &b.scene.objects[p.object.unwrap()];
            assert!(o.contains_local(&crate::dynamics::box_constrain(&p.mean, &o.dims)));
        }
    }

    #[test]
    fn perturbations() {
        let spec = small();
        let b = Benchmark::new(&spec).unwrap();
        let same = perturb_field(&b.scene, Perturbation::JitterPositions, 0.0, 1).unwrap();
        assert_eq!(same, b.scene);
        let more = perturb_field(&b.scene, Perturbation::AddFloaters, 7.0, 1).unwrap();
        assert_eq!(more.primitives.len(), b.scene.primitives.len() + 7);
        let scaled = perturb_field(&b.scene, Perturbation::ScaleDepth, 1.2, 1).unwrap();
        let view = &b.scene.cameras[0].views[0];
        for (p, q) in b.scene.primitives.iter().zip(&scaled.primitives).filter(|(p, _)| p.object.is_none()).take(500) {
            let d0 = view.world_to_camera(&p.mean).z;
            let d1 = view.world_to_camera(&q.mean).z;
            assert!((d1 - 1.2 * d0).abs() < 1e-9);
        }
    }
}
