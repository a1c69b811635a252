use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{is_rotation, Mat3, Vec3};

/// Pinhole intrinsics in pixels. Pixel `(u, v)` samples the continuous image
/// position `(u, v)`; the principal point is `(cx, cy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// A pinhole camera with a world→camera pose and a timestamp.
///
/// Camera frame: x right, y down, z forward; depth is camera-frame z.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub intrinsics: Intrinsics,
    pub width: u32,
    pub height: u32,
    /// World→camera rotation.
    pub rotation: Mat3,
    /// World→camera translation: `x_cam = R x_world + t`.
    pub translation: Vec3,
    pub timestamp: f64,
}

impl CameraView {
    /// Builds a view centred at `center` looking along `forward`, with `up`
    /// giving the (approximate) world up direction.
    pub fn look_along(
        intrinsics: Intrinsics,
        width: u32,
        height: u32,
        center: Vec3,
        forward: Vec3,
        up: Vec3,
        timestamp: f64,
    ) -> Self {
        let f = forward.normalize();
        let right = f.cross(&up).normalize();
        let down = f.cross(&right);
        let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), f.transpose()]);
        let translation = -(rotation * center);
        Self {
            intrinsics,
            width,
            height,
            rotation,
            translation,
            timestamp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        let entity = "camera view";
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(Error::invariant(entity, "focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invariant(entity, "resolution must be non-zero"));
        }
        if !(k.cx > 0.0 && k.cx < self.width as f64 && k.cy > 0.0 && k.cy < self.height as f64) {
            return Err(Error::invariant(entity, "principal point outside the image"));
        }
        if !is_rotation(&self.rotation, 1e-9) {
            return Err(Error::invariant(entity, "pose rotation is not orthonormal"));
        }
        if !self.translation.iter().all(|v| v.is_finite()) || !self.timestamp.is_finite() {
            return Err(Error::invariant(entity, "non-finite pose or timestamp"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn camera_to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Continuous image position of a camera-frame point (no bounds check).
    pub fn project_camera(&self, pc: &Vec3) -> Vector2<f64> {
        let k = &self.intrinsics;
        Vector2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy)
    }

    /// Projects a world point; `None` when it is not in front of `near`.
    /// Returns the continuous image position and the camera-frame depth.
    pub fn project(&self, p: &Vec3, near: f64) -> Option<(Vector2<f64>, f64)> {
        let pc = self.world_to_camera(p);
        (pc.z > near).then(|| (self.project_camera(&pc), pc.z))
    }

    /// Integer pixel hit by a world point, if it lies inside the image.
    pub fn pixel_of(&self, p: &Vec3, near: f64) -> Option<((u32, u32), f64)> {
        let (uv, z) = self.project(p, near)?;
        let (u, v) = (uv.x.round(), uv.y.round());
        if u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64 {
            Some(((u as u32, v as u32), z))
        } else {
            None
        }
    }

    /// Lifts pixel `(u, v)` at camera-frame depth `z` to a world point.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        let k = &self.intrinsics;
        let pc = Vec3::new((u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z);
        self.camera_to_world(&pc)
    }

    /// The same camera moved by a world-frame offset, orientation and time unchanged.
    pub fn translated(&self, offset: &Vec3) -> Self {
        let center = self.center() + offset;
        Self {
            translation: -(self.rotation * center),
            ..self.clone()
        }
    }

    /// Forward (optical axis) direction in world coordinates.
    pub fn forward(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraView {
        CameraView::look_along(
            Intrinsics { fx: 100.0, fy: 100.0, cx: 50.0, cy: 50.0 },
            100,
            100,
            Vec3::new(1.0, 2.0, 1.5),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::z(),
            0.0,
        )
    }

    #[test]
    fn axes_follow_z_up_convention() {
        let c = cam();
        // world +x is forward, world -y is right, world -z is down
        assert!((c.rotation.row(0).transpose() - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        assert!((c.rotation.row(1).transpose() - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!((c.center() - Vec3::new(1.0, 2.0, 1.5)).norm() < 1e-12);
        c.validate().unwrap();
    }

    #[test]
    fn unproject_inverts_project() {
        let c = cam();
        let p = Vec3::new(7.0, 1.0, 2.2);
        let (uv, z) = c.project(&p, 0.1).unwrap();
        assert!((c.unproject(uv.x, uv.y, z) - p).norm() < 1e-12);
        assert!(c.project(&Vec3::new(-3.0, 2.0, 1.5), 0.1).is_none());
    }

    #[test]
    fn rejects_bad_principal_point() {
        let mut c = cam();
        c.intrinsics.cx = 120.0;
        assert!(c.validate().is_err());
    }
}
