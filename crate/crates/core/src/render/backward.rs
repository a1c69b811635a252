//! Chain rule from splat-space gradients to scene parameters.

use nalgebra::{Matrix2, Matrix2x3, Vector2};

use super::project::{camera_covariance, jacobian, jacobian_point, Resolved};
use super::raster::{Rasterized, SplatGrad};
use crate::dynamics::box_constrain_derivative;
use crate::math::{quat_matrix_backward, Mat3, Vec3};
use crate::scene::{layout, CameraView, SceneGraph, POSE_PARAMS};

/// Gradients of a scalar loss w.r.t. every trainable float of a scene, in the
/// layout of [`SceneGraph::pack_primitives`] and [`SceneGraph::pack_poses`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub stride: usize,
    pub primitives: Vec<f64>,
    pub poses: Vec<f64>,
}

impl GradientSet {
    pub fn zeros(scene: &SceneGraph) -> Self {
        let stride = scene.params_per_primitive();
        let keyframes: usize = scene.objects.iter().map(|o| o.poses.len()).sum();
        Self {
            stride,
            primitives: vec![0.0; stride * scene.primitives.len()],
            poses: vec![0.0; POSE_PARAMS * keyframes],
        }
    }

    pub fn primitive(&self, i: usize) -> &[f64] {
        &self.primitives[i * self.stride..(i + 1) * self.stride]
    }

    pub fn primitive_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.primitives[i * self.stride..(i + 1) * self.stride]
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.primitives.iter_mut().zip(&other.primitives) {
            *a += b;
        }
        for (a, b) in self.poses.iter_mut().zip(&other.poses) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.primitives.iter_mut().for_each(|v| *v *= s);
        self.poses.iter_mut().for_each(|v| *v *= s);
    }

    /// Index of the first primitive with a non-finite partial, or `usize::MAX`
    /// when only pose partials are bad.
    pub fn first_non_finite(&self) -> Option<usize> {
        if let Some(k) = self.primitives.iter().position(|v| !v.is_finite()) {
            return Some(k / self.stride.max(1));
        }
        self.poses.iter().any(|v| !v.is_finite()).then_some(usize::MAX)
    }
}

/// Adds the gradient contributed by one rasterization pass to `out`.
///
/// `resolved` must be what the pass was rendered from; `splat_grads` is the
/// output of [`Rasterized::backward`].
pub fn accumulate(
    scene: &SceneGraph,
    resolved: &[Option<Resolved>],
    view: &CameraView,
    raster: &Rasterized,
    splat_grads: &[SplatGrad],
    out: &mut GradientSet,
) {
    let pose_offsets = scene.pose_offsets();
    for (sp, g) in raster.splats.iter().zip(splat_grads) {
        let Some(r) = resolved[sp.index].as_ref() else {
            continue;
        };
        let p = &scene.primitives[sp.index];
        let pc = sp.camera_point;
        let intr = &view.intrinsics;
        let (x, y, z) = (pc.x, pc.y, pc.z);
        let iz = 1.0 / z;

        // screen mean and depth
        let mut g_pc = Vec3::new(
            g.mean[0] * intr.fx * iz,
            g.mean[1] * intr.fy * iz,
            -(g.mean[0] * intr.fx * x + g.mean[1] * intr.fy * y) * iz * iz + g.depth,
        );

        // conic -> screen covariance
        let q = Matrix2::new(sp.conic[0], sp.conic[1], sp.conic[1], sp.conic[2]);
        let gq = Matrix2::new(g.conic[0], 0.5 * g.conic[1], 0.5 * g.conic[1], g.conic[2]);
        let g_cov2 = -(q * gq * q);

        let (sigma_cam, m) = camera_covariance(r, view);
        let j: Matrix2x3<f64> = jacobian(view, &pc);
        let g_sigma_cam = j.transpose() * g_cov2 * j;
        let g_j = 2.0 * g_cov2 * j * sigma_cam;
        // J02 = -fx x'/z² with x' = x, or x' = c z when clamped to slope c
        let (jp, clamped) = jacobian_point(view, &pc);
        let mut g_jz = g_j[(0, 0)] * (-intr.fx * iz * iz) + g_j[(1, 1)] * (-intr.fy * iz * iz);
        if clamped[0] {
            g_jz += g_j[(0, 2)] * (intr.fx * jp.x * iz * iz * iz);
        } else {
            g_pc.x += g_j[(0, 2)] * (-intr.fx * iz * iz);
            g_jz += g_j[(0, 2)] * (2.0 * intr.fx * x * iz * iz * iz);
        }
        if clamped[1] {
            g_jz += g_j[(1, 2)] * (intr.fy * jp.y * iz * iz * iz);
        } else {
            g_pc.y += g_j[(1, 2)] * (-intr.fy * iz * iz);
            g_jz += g_j[(1, 2)] * (2.0 * intr.fy * y * iz * iz * iz);
        }
        g_pc.z += g_jz;

        let g_mean = view.rotation.transpose() * g_pc;
        let g_sigma_world = view.rotation.transpose() * g_sigma_cam * view.rotation;
        let g_m = 2.0 * g_sigma_world * m;
        let mut g_rot = Mat3::zeros();
        let mut g_log_scale = Vec3::zeros();
        for c in 0..3 {
            let mut ds = 0.0;
            for row in 0..3 {
                g_rot[(row, c)] = g_m[(row, c)] * r.scale[c];
                ds += g_m[(row, c)] * r.rotation[(row, c)];
            }
            g_log_scale[c] = ds * r.scale[c];
        }

        let row = out.primitive_mut(sp.index);
        for c in 0..3 {
            row[layout::LOG_SCALE + c] += g_log_scale[c];
        }
        let o = r.opacity;
        row[layout::OPACITY] += g.opacity * o * (1.0 - o);
        for c in 0..3 {
            if !r.color_active[c] {
                continue;
            }
            row[layout::COLOR0 + c] += g.color[c];
            let mut term = 1.0;
            for k in 0..p.color_taylor.len() {
                term *= r.dt / (k as f64 + 1.0);
                row[layout::TAYLOR + 3 * k + c] += g.color[c] * term;
            }
        }

        match &r.link {
            None => {
                let gq = quat_matrix_backward(&p.rotation, &g_rot);
                for c in 0..3 {
                    row[layout::MEAN + c] += g_mean[c];
                }
                for c in 0..4 {
                    row[layout::ROTATION + c] += gq[c];
                }
            }
            Some(link) => {
                let pose_rot = link.pose.rotation;
                let g_own = pose_rot.transpose() * g_rot;
                let gq = quat_matrix_backward(&p.rotation, &g_own);
                for c in 0..4 {
                    row[layout::ROTATION + c] += gq[c];
                }
                let g_local = pose_rot.transpose() * g_mean;
                let dims = &scene.objects[link.object].dims;
                let dbox = box_constrain_derivative(&p.mean, dims);
                for c in 0..3 {
                    row[layout::MEAN + c] += g_local[c] * dbox[c];
                }

                let g_pose_rot = g_rot * r.own_rotation.transpose() + g_mean * link.local.transpose();
                let obj = &scene.objects[link.object];
                let base = pose_offsets[link.object];
                let (k0, k1, w) = (link.pose.k0, link.pose.k1, link.pose.weight);
                if k0 == k1 {
                    let gq = quat_matrix_backward(&obj.poses[k0].rotation, &g_pose_rot);
                    let slot = &mut out.poses[base + k0 * POSE_PARAMS..base + (k0 + 1) * POSE_PARAMS];
                    for c in 0..4 {
                        slot[c] += gq[c];
                    }
                    for c in 0..3 {
                        slot[4 + c] += g_mean[c];
                    }
                } else {
                    // rotation split between keyframes by interpolation weight
                    let gq = quat_matrix_backward(&link.pose.quaternion, &g_pose_rot);
                    for (k, share) in [(k0, 1.0 - w), (k1, w)] {
                        let slot = &mut out.poses[base + k * POSE_PARAMS..base + (k + 1) * POSE_PARAMS];
                        for c in 0..4 {
                            slot[c] += share * gq[c];
                        }
                        for c in 0..3 {
                            slot[4 + c] += share * g_mean[c];
                        }
                    }
                }
            }
        }
    }
}

/// Norm of each splat's screen-space mean gradient, keyed by primitive index.
pub fn screen_gradient_norms(raster: &Rasterized, splat_grads: &[SplatGrad]) -> Vec<(usize, f64)> {
    raster
        .splats
        .iter()
        .zip(splat_grads)
        .map(|(sp, g)| (sp.index, Vector2::new(g.mean[0], g.mean[1]).norm()))
        .collect()
}
