use nalgebra::{Matrix2x3, Vector2};

use crate::dynamics::{box_constrain, PoseSample};
use crate::math::{quat_to_matrix, Mat3, Vec3};
use crate::scene::{CameraView, GaussianPrimitive, SceneGraph};

/// Points at or in front of this camera-frame depth are culled.
pub const NEAR_PLANE: f64 = 0.2;
/// Added to the screen covariance diagonal (px²); floors its eigenvalues.
pub const COV_DILATION: f64 = 0.3;
/// Mahalanobis power `½ΔᵀΣ⁻¹Δ` at the 3σ footprint boundary.
pub const CUTOFF_POWER: f64 = 4.5;

/// Object membership data needed to differentiate a member primitive.
#[derive(Debug, Clone, Copy)]
pub struct ObjectLink {
    pub object: usize,
    pub pose: PoseSample,
    /// Box-local position of the Gaussian centre.
    pub local: Vec3,
}

/// A primitive evaluated in world space at one timestamp.
#[derive(Debug, Clone, Copy)]
pub struct Resolved {
    pub mean: Vec3,
    /// World rotation of the Gaussian axes.
    pub rotation: Mat3,
    /// Rotation of the primitive's own quaternion (equals `rotation` for static primitives).
    pub own_rotation: Mat3,
    pub scale: Vec3,
    pub opacity: f64,
    pub color: [f64; 3],
    /// Channels that are not clamped (gradient passes through).
    pub color_active: [bool; 3],
    /// Time offset from the Taylor reference.
    pub dt: f64,
    pub link: Option<ObjectLink>,
}

/// Evaluates one primitive at time `t`. `None` when its object has no pose at `t`.
pub fn resolve_primitive(scene: &SceneGraph, p: &GaussianPrimitive, t: f64) -> Option<Resolved> {
    let own_rotation = quat_to_matrix(&p.rotation);
    let scale = p.scale();
    let dt = t - scene.reference_time(p);
    let raw = crate::dynamics::raw_color_at_time(p, dt);
    let color = [raw.x.clamp(0.0, 1.0), raw.y.clamp(0.0, 1.0), raw.z.clamp(0.0, 1.0)];
    let color_active = [
        raw.x > 0.0 && raw.x < 1.0,
        raw.y > 0.0 && raw.y < 1.0,
        raw.z > 0.0 && raw.z < 1.0,
    ];
    let (mean, rotation, link) = match p.object {
        None => (p.mean, own_rotation, None),
        Some(k) => {
            let obj = &scene.objects[k];
            let pose = obj.pose_at(t).ok()?;
            let local = box_constrain(&p.mean, &obj.dims);
            (
                pose.rotation * local + pose.translation,
                pose.rotation * own_rotation,
                Some(ObjectLink {
                    object: k,
                    pose,
                    local,
                }),
            )
        }
    };
    Some(Resolved {
        mean,
        rotation,
        own_rotation,
        scale,
        opacity: p.opacity(),
        color,
        color_active,
        dt,
        link,
    })
}

pub fn resolve_scene(scene: &SceneGraph, t: f64) -> Vec<Option<Resolved>> {
    scene
        .primitives
        .iter()
        .map(|p| resolve_primitive(scene, p, t))
        .collect()
}

/// A Gaussian splatted onto a view's image plane.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedGaussian {
    /// Index of the source primitive.
    pub index: usize,
    pub mean: Vector2<f64>,
    /// Screen covariance (xx, xy, yy) in px², dilated.
    pub cov: [f64; 3],
    /// Inverse covariance (a, b, c).
    pub conic: [f64; 3],
    /// Camera-frame depth of the centre.
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    /// Half-widths of the 3σ bounding box along x and y.
    pub extent: [f64; 2],
    /// Camera-frame centre.
    pub camera_point: Vec3,
}

/// Axis-aligned region of the image plane that must be covered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Domain {
    pub fn image(view: &CameraView) -> Self {
        Self {
            x0: -0.5,
            y0: -0.5,
            x1: view.width as f64 - 0.5,
            y1: view.height as f64 - 0.5,
        }
    }
}

/// Camera-frame covariance `W R S² Rᵀ Wᵀ` and the perspective Jacobian.
pub(crate) fn camera_covariance(r: &Resolved, view: &CameraView) -> (Mat3, Mat3) {
    let m = r.rotation * Mat3::from_diagonal(&r.scale);
    let sigma_world = m * m.transpose();
    let sigma_cam = view.rotation * sigma_world * view.rotation.transpose();
    (sigma_cam, m)
}

/// Guard band, relative to the half field of view, beyond which the
/// perspective Jacobian is evaluated at the clamped direction instead. Keeps
/// primitives just beside or below the camera from smearing across the image.
pub const JACOBIAN_GUARD: f64 = 1.3;

/// Camera-frame point at which the Jacobian is evaluated, plus whether x and y
/// were clamped (their Jacobian derivatives then vanish).
pub(crate) fn jacobian_point(view: &CameraView, pc: &Vec3) -> (Vec3, [bool; 2]) {
    let k = &view.intrinsics;
    let lim_x = JACOBIAN_GUARD * k.cx.max(view.width as f64 - k.cx) / k.fx;
    let lim_y = JACOBIAN_GUARD * k.cy.max(view.height as f64 - k.cy) / k.fy;
    let (tx, ty) = (pc.x / pc.z, pc.y / pc.z);
    let cx = tx.clamp(-lim_x, lim_x);
    let cy = ty.clamp(-lim_y, lim_y);
    (Vec3::new(cx * pc.z, cy * pc.z, pc.z), [cx != tx, cy != ty])
}

pub(crate) fn jacobian(view: &CameraView, pc: &Vec3) -> Matrix2x3<f64> {
    let k = &view.intrinsics;
    let (q, _) = jacobian_point(view, pc);
    let (x, y, z) = (q.x, q.y, q.z);
    let iz = 1.0 / z;
    Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * x * iz * iz,
        0.0,
        k.fy * iz,
        -k.fy * y * iz * iz,
    )
}

/// Projects a resolved primitive. `None` when culled: centre not beyond the
/// near plane, degenerate covariance, or footprint outside `domain`.
pub fn project_resolved(
    index: usize,
    r: &Resolved,
    view: &CameraView,
    domain: &Domain,
) -> Option<ProjectedGaussian> {
    let pc = view.world_to_camera(&r.mean);
    if !(pc.z > NEAR_PLANE) {
        return None;
    }
    let (sigma_cam, _) = camera_covariance(r, view);
    let j = jacobian(view, &pc);
    let s2 = j * sigma_cam * j.transpose();
    let (a, b, c) = (s2[(0, 0)] + COV_DILATION, s2[(0, 1)], s2[(1, 1)] + COV_DILATION);
    let det = a * c - b * b;
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let mean = view.project_camera(&pc);
    let extent = [3.0 * a.sqrt(), 3.0 * c.sqrt()];
    if mean.x + extent[0] < domain.x0
        || mean.x - extent[0] > domain.x1
        || mean.y + extent[1] < domain.y0
        || mean.y - extent[1] > domain.y1
    {
        return None;
    }
    Some(ProjectedGaussian {
        index,
        mean,
        cov: [a, b, c],
        conic: [c / det, -b / det, a / det],
        depth: pc.z,
        opacity: r.opacity,
        color: r.color,
        extent,
        camera_point: pc,
    })
}

/// Projects primitive `index` of `scene` into `view` at time `t` against the image bounds.
pub fn project(
    scene: &SceneGraph,
    index: usize,
    view: &CameraView,
    t: f64,
) -> Option<ProjectedGaussian> {
    let r = resolve_primitive(scene, &scene.primitives[index], t)?;
    project_resolved(index, &r, view, &Domain::image(view))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{GaussianPrimitive, Intrinsics};

    fn view() -> CameraView {
        CameraView::look_along(
            Intrinsics { fx: 100.0, fy: 100.0, cx: 50.0, cy: 50.0 },
            100,
            100,
            Vec3::zeros(),
            Vec3::x(),
            Vec3::z(),
            0.0,
        )
    }

    fn scene_with(p: GaussianPrimitive) -> SceneGraph {
        SceneGraph {
            primitives: vec![p],
            ..SceneGraph::default()
        }
    }

    #[test]
    fn on_axis_projection() {
        let p = GaussianPrimitive::new(Vec3::new(2.0, 0.0, 0.0), Vec3::repeat(0.05), 0.5, Vec3::repeat(1.0), 0);
        let g = project(&scene_with(p), 0, &view(), 0.0).unwrap();
        assert!((g.mean - Vector2::new(50.0, 50.0)).norm() < 1e-12);
        assert!((g.depth - 2.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_screen_covariance() {
        // (f s / d)² = (100 · 0.2 / 2)² = 100 px², plus the dilation
        let p = GaussianPrimitive::new(Vec3::new(2.0, 0.0, 0.0), Vec3::repeat(0.2), 0.5, Vec3::repeat(1.0), 0);
        let g = project(&scene_with(p), 0, &view(), 0.0).unwrap();
        let expected = (100.0f64 * 0.2 / 2.0).powi(2);
        assert!((g.cov[0] - expected - COV_DILATION).abs() < 1e-9);
        assert!((g.cov[2] - expected - COV_DILATION).abs() < 1e-9);
        assert!(g.cov[1].abs() < 1e-9);
        assert!((g.cov[0] / expected - 1.0).abs() < 0.01);
    }

    #[test]
    fn behind_camera_is_culled() {
        let p = GaussianPrimitive::new(Vec3::new(-1.0, 0.0, 0.0), Vec3::repeat(0.05), 0.5, Vec3::repeat(1.0), 0);
        assert!(project(&scene_with(p), 0, &view(), 0.0).is_none());
    }

    #[test]
    fn off_image_footprint_is_culled() {
        let p = GaussianPrimitive::new(Vec3::new(2.0, -30.0, 0.0), Vec3::repeat(0.05), 0.5, Vec3::repeat(1.0), 0);
        assert!(project(&scene_with(p), 0, &view(), 0.0).is_none());
    }
}
