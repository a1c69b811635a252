//! Scene representation: static Gaussian field, dynamic objects, camera and LiDAR trajectories.

mod buffers;
mod camera;
pub mod io;
mod lidar;
mod primitive;

pub use buffers::{DepthMap, ImageBuffer, Mask};
pub use camera::{CameraView, Intrinsics};
pub use lidar::{LidarFrame, LidarPoint};
pub use primitive::{
    layout, params_per_primitive, GaussianPrimitive, BASE_PARAMS, DEFAULT_TAYLOR_ORDER,
};

use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicObject;
use crate::error::{Error, Result};
use crate::math::{normalize_quat, Vec3};

/// Whether a camera supplies training data or is held out for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraRole {
    InPath,
    Eval,
}

/// All views recorded by one physical camera, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraTrack {
    pub name: String,
    pub role: CameraRole,
    pub views: Vec<CameraView>,
}

/// Trainable floats per pose keyframe: quaternion (4) + translation (3).
pub const POSE_PARAMS: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub primitives: Vec<GaussianPrimitive>,
    pub objects: Vec<DynamicObject>,
    pub cameras: Vec<CameraTrack>,
    pub lidar: Vec<LidarFrame>,
    pub taylor_order: usize,
    /// Taylor reference time of static primitives.
    pub color_reference_time: f64,
    pub background: [f64; 3],
    /// Maximum LiDAR range `d_max` in meters.
    pub lidar_max_range: f64,
}

impl Default for SceneGraph {
    fn default() -> Self {
        Self {
            primitives: Vec::new(),
            objects: Vec::new(),
            cameras: Vec::new(),
            lidar: Vec::new(),
            taylor_order: DEFAULT_TAYLOR_ORDER,
            color_reference_time: 0.0,
            background: [0.0; 3],
            lidar_max_range: 40.0,
        }
    }
}

impl SceneGraph {
    /// Checks every type invariant of the scene.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.primitives.iter().enumerate() {
            let entity = format!("primitive {i}");
            if p.color_taylor.len() != self.taylor_order {
                return Err(Error::invariant(entity, "Taylor order differs from the scene"));
            }
            let finite = p.mean.iter().all(|v| v.is_finite())
                && p.log_scale.iter().all(|v| v.is_finite())
                && p.opacity_logit.is_finite()
                && p.color0.iter().all(|v| v.is_finite())
                && p.rotation.coords.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::invariant(entity, "non-finite parameter"));
            }
            if (p.rotation.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::invariant(entity, "rotation is not a unit quaternion"));
            }
            if let Some(k) = p.object {
                if k >= self.objects.len() {
                    return Err(Error::UnknownObject(format!("#{k}")));
                }
            }
        }
        for o in &self.objects {
            o.validate()?;
        }
        for track in &self.cameras {
            for v in &track.views {
                v.validate().map_err(|e| match e {
                    Error::Invariant { message, .. } => {
                        Error::invariant(format!("camera `{}`", track.name), message)
                    }
                    other => other,
                })?;
            }
            if track
                .views
                .windows(2)
                .any(|w| w[1].timestamp <= w[0].timestamp)
            {
                return Err(Error::invariant(
                    format!("camera `{}`", track.name),
                    "timestamps must strictly increase",
                ));
            }
        }
        if self
            .lidar
            .windows(2)
            .any(|w| w[1].timestamp <= w[0].timestamp)
        {
            return Err(Error::invariant("lidar trajectory", "timestamps must strictly increase"));
        }
        if !(self.lidar_max_range > 0.0) {
            return Err(Error::invariant("scene", "lidar_max_range must be positive"));
        }
        for (f, frame) in self.lidar.iter().enumerate() {
            for p in &frame.points {
                if p.position.norm() > self.lidar_max_range * (1.0 + 1e-6) {
                    return Err(Error::invariant(
                        format!("lidar frame {f}"),
                        "return beyond the maximum range",
                    ));
                }
                if let Some(k) = p.object {
                    if k >= self.objects.len() {
                        return Err(Error::UnknownObject(format!("#{k}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn renormalize(&mut self) {
        for p in &mut self.primitives {
            p.rotation = normalize_quat(&p.rotation);
        }
        for o in &mut self.objects {
            o.renormalize();
        }
    }

    /// Taylor reference time of a primitive.
    pub fn reference_time(&self, primitive: &GaussianPrimitive) -> f64 {
        match primitive.object {
            Some(k) => self.objects[k].reference_time(),
            None => self.color_reference_time,
        }
    }

    pub fn params_per_primitive(&self) -> usize {
        params_per_primitive(self.taylor_order)
    }

    pub fn track(&self, name: &str) -> Option<&CameraTrack> {
        self.cameras.iter().find(|t| t.name == name)
    }

    pub fn in_path_tracks(&self) -> impl Iterator<Item = &CameraTrack> {
        self.cameras.iter().filter(|t| t.role == CameraRole::InPath)
    }

    /// Flat primitive parameters, `params_per_primitive()` floats per primitive.
    pub fn pack_primitives(&self) -> Vec<f64> {
        let stride = self.params_per_primitive();
        let mut out = vec![0.0; stride * self.primitives.len()];
        for (p, row) in self.primitives.iter().zip(out.chunks_exact_mut(stride)) {
            p.pack(row);
        }
        out
    }

    pub fn unpack_primitives(&mut self, flat: &[f64]) {
        let stride = self.params_per_primitive();
        for (p, row) in self.primitives.iter_mut().zip(flat.chunks_exact(stride)) {
            p.unpack(row);
        }
    }

    /// Flat object pose parameters, [`POSE_PARAMS`] floats per keyframe.
    pub fn pack_poses(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for o in &self.objects {
            for p in &o.poses {
                out.extend_from_slice(&[
                    p.rotation.w,
                    p.rotation.i,
                    p.rotation.j,
                    p.rotation.k,
                    p.translation.x,
                    p.translation.y,
                    p.translation.z,
                ]);
            }
        }
        out
    }

    pub fn unpack_poses(&mut self, flat: &[f64]) {
        let mut rows = flat.chunks_exact(POSE_PARAMS);
        for o in &mut self.objects {
            for p in &mut o.poses {
                if let Some(r) = rows.next() {
                    p.rotation = nalgebra::Quaternion::new(r[0], r[1], r[2], r[3]);
                    p.translation = Vec3::new(r[4], r[5], r[6]);
                }
            }
        }
    }

    /// Offset of each object's first keyframe in the packed pose vector.
    pub fn pose_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.objects.len());
        let mut acc = 0;
        for o in &self.objects {
            offsets.push(acc);
            acc += o.poses.len() * POSE_PARAMS;
        }
        offsets
    }
}
