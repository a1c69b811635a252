//! Dynamic objects whose Gaussians live in a sigmoid-bounded box.
//!
//! A member primitive stores logistic coordinates `(x_o, y_o, z_o)`. They map
//! into the object's box as `(l(σ(x_o)−½), w(σ(y_o)−½), h(σ(z_o)−½))` and then
//! to the world through the object's pose at time `t`: `R_t · local + T_t`.
//! Every reachable local position is strictly inside the box, whatever value
//! the optimizer writes into the logistic coordinates.

use nalgebra::Quaternion;

use crate::error::{Error, Result};
use crate::math::{normalize_quat, quat_to_matrix, sigmoid, slerp, Mat3, Quat, Vec3};
use crate::scene::GaussianPrimitive;

/// Logistic coordinates are saturated at this magnitude. `tanh(30/2)` is still
/// strictly below one in f64, which keeps the box bound strict.
pub const LOGISTIC_LIMIT: f64 = 30.0;

/// Tolerance when matching a timestamp to a pose keyframe.
const TIME_EPS: f64 = 1e-9;

/// One keyframe of an object's trainable pose track.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectPose {
    pub timestamp: f64,
    /// Local→world rotation, (w, x, y, z).
    pub rotation: Quat,
    /// Local→world offset in meters.
    pub translation: Vec3,
}

/// A rigid object constrained to a box of size (l, w, h).
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicObject {
    pub id: String,
    /// (length, width, height) in meters.
    pub dims: Vec3,
    /// Keyframes with strictly increasing timestamps.
    pub poses: Vec<ObjectPose>,
}

/// Pose at a continuous time together with the keyframes it came from.
#[derive(Debug, Clone, Copy)]
pub struct PoseSample {
    pub rotation: Mat3,
    pub quaternion: Quat,
    pub translation: Vec3,
    /// Lower keyframe index.
    pub k0: usize,
    /// Upper keyframe index (equal to `k0` on a keyframe).
    pub k1: usize,
    /// Interpolation weight of `k1`.
    pub weight: f64,
}

impl DynamicObject {
    pub fn validate(&self) -> Result<()> {
        let entity = format!("object `{}`", self.id);
        if !self.dims.iter().all(|d| *d > 0.0 && d.is_finite()) {
            return Err(Error::invariant(entity, "box dimensions must be positive"));
        }
        if self.poses.is_empty() {
            return Err(Error::invariant(entity, "empty pose track"));
        }
        if self
            .poses
            .windows(2)
            .any(|w| w[1].timestamp <= w[0].timestamp)
        {
            return Err(Error::invariant(entity, "pose timestamps must strictly increase"));
        }
        Ok(())
    }

    /// Midpoint of the pose track, used as the Taylor reference time of members.
    pub fn reference_time(&self) -> f64 {
        let first = self.poses.first().map_or(0.0, |p| p.timestamp);
        let last = self.poses.last().map_or(0.0, |p| p.timestamp);
        0.5 * (first + last)
    }

    /// Pose at `t`: slerp/lerp between the bracketing keyframes.
    pub fn pose_at(&self, t: f64) -> Result<PoseSample> {
        let missing = || Error::MissingPose {
            object: self.id.clone(),
            time: t,
        };
        let first = self.poses.first().ok_or_else(missing)?;
        let last = self.poses.last().ok_or_else(missing)?;
        if t < first.timestamp - TIME_EPS || t > last.timestamp + TIME_EPS {
            return Err(missing());
        }
        let k = self
            .poses
            .partition_point(|p| p.timestamp <= t + TIME_EPS)
            .saturating_sub(1);
        let p0 = &self.poses[k];
        if (t - p0.timestamp).abs() <= TIME_EPS || k + 1 == self.poses.len() {
            let q = normalize_quat(&p0.rotation);
            return Ok(PoseSample {
                rotation: quat_to_matrix(&q),
                quaternion: q,
                translation: p0.translation,
                k0: k,
                k1: k,
                weight: 0.0,
            });
        }
        let p1 = &self.poses[k + 1];
        let w = (t - p0.timestamp) / (p1.timestamp - p0.timestamp);
        let q = slerp(&p0.rotation, &p1.rotation, w);
        Ok(PoseSample {
            rotation: quat_to_matrix(&q),
            quaternion: q,
            translation: p0.translation * (1.0 - w) + p1.translation * w,
            k0: k,
            k1: k + 1,
            weight: w,
        })
    }

    /// Local box coordinates of a world point under the pose at `t`.
    pub fn world_to_local(&self, p: &Vec3, t: f64) -> Result<Vec3> {
        let pose = self.pose_at(t)?;
        Ok(pose.rotation.transpose() * (p - pose.translation))
    }

    /// Whether a local point lies strictly inside the box.
    pub fn contains_local(&self, local: &Vec3) -> bool {
        (0..3).all(|i| local[i].abs() < 0.5 * self.dims[i])
    }

    pub fn renormalize(&mut self) {
        for p in &mut self.poses {
            p.rotation = normalize_quat(&p.rotation);
        }
    }
}

/// Saturated logistic coordinate.
#[inline]
pub fn clamp_logistic(x: f64) -> f64 {
    x.clamp(-LOGISTIC_LIMIT, LOGISTIC_LIMIT)
}

/// Maps logistic coordinates into the box `(−l/2, l/2)×(−w/2, w/2)×(−h/2, h/2)`.
pub fn box_constrain(logistic: &Vec3, dims: &Vec3) -> Vec3 {
    Vec3::from_fn(|i, _| dims[i] * (sigmoid(clamp_logistic(logistic[i])) - 0.5))
}

/// Derivative of [`box_constrain`] per axis (diagonal Jacobian).
pub fn box_constrain_derivative(logistic: &Vec3, dims: &Vec3) -> Vec3 {
    Vec3::from_fn(|i, _| {
        let x = logistic[i];
        if x.abs() >= LOGISTIC_LIMIT {
            0.0
        } else {
            let s = sigmoid(x);
            dims[i] * s * (1.0 - s)
        }
    })
}

/// Logistic coordinates that map to a local point (clamped just inside the box).
pub fn logistic_from_local(local: &Vec3, dims: &Vec3) -> Vec3 {
    Vec3::from_fn(|i, _| {
        let frac = (local[i] / dims[i] + 0.5).clamp(1e-4, 1.0 - 1e-4);
        crate::math::logit(frac)
    })
}

/// Rigid local→world transform `R local + T`.
pub fn to_world(local: &Vec3, rotation: &Quat, translation: &Vec3) -> Vec3 {
    quat_to_matrix(rotation) * local + translation
}

/// Color at `t` from the Taylor series around `t0`, clamped to [0, 1].
pub fn color_at_time(primitive: &GaussianPrimitive, t: f64, t0: f64) -> Vec3 {
    raw_color_at_time(primitive, t - t0).map(|c| c.clamp(0.0, 1.0))
}

/// Unclamped Taylor color for a time offset `dt = t − t0`.
pub fn raw_color_at_time(primitive: &GaussianPrimitive, dt: f64) -> Vec3 {
    let mut c = primitive.color0;
    let mut term = 1.0;
    for (k, coeff) in primitive.color_taylor.iter().enumerate() {
        term *= dt / (k as f64 + 1.0);
        c += coeff * term;
    }
    c
}

/// Identity pose keyframe at `t`.
pub fn identity_pose(timestamp: f64) -> ObjectPose {
    ObjectPose {
        timestamp,
        rotation: Quaternion::identity(),
        translation: Vec3::zeros(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::matrix_to_quat;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn car() -> DynamicObject {
        DynamicObject {
            id: "car".into(),
            dims: Vec3::new(4.0, 2.0, 1.5),
            poses: (0..5)
                .map(|k| ObjectPose {
                    timestamp: k as f64,
                    rotation: Quaternion::identity(),
                    translation: Vec3::new(k as f64, 0.0, 0.0),
                })
                .collect(),
        }
    }

    #[test]
    fn box_center_and_limits() {
        let dims = Vec3::new(4.0, 2.0, 1.0);
        assert_eq!(box_constrain(&Vec3::zeros(), &dims), Vec3::zeros());
        let x = box_constrain(&Vec3::new(3f64.ln(), 0.0, 0.0), &dims);
        assert!((x.x - 1.0).abs() < 1e-12);
        let far = box_constrain(&Vec3::new(1e6, -1e6, 50.0), &dims);
        assert!(far.x < 2.0 && far.x > 1.999);
        assert!(far.y > -1.0 && far.y < -0.999);
        assert!(far.z < 0.5);
    }

    #[test]
    fn to_world_examples() {
        let id = Quaternion::identity();
        let p = Vec3::new(0.3, -1.0, 2.0);
        assert_eq!(to_world(&p, &id, &Vec3::zeros()), p);
        assert_eq!(
            to_world(&Vec3::zeros(), &id, &Vec3::new(1.0, 2.0, 3.0)),
            Vec3::new(1.0, 2.0, 3.0)
        );
        let yaw = matrix_to_quat(&crate::math::yaw_matrix(FRAC_PI_2));
        let r = to_world(&Vec3::x(), &yaw, &Vec3::zeros());
        assert!((r - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn taylor_color() {
        let mut p = GaussianPrimitive::new(
            Vec3::zeros(),
            Vec3::repeat(0.1),
            0.5,
            Vec3::repeat(0.5),
            1,
        );
        assert_eq!(color_at_time(&p, 3.0, 1.0), Vec3::repeat(0.5));
        p.color_taylor[0] = Vec3::new(0.1, 0.0, 0.0);
        let c = color_at_time(&p, 2.0, 0.0);
        assert!((c - Vec3::new(0.7, 0.5, 0.5)).norm() < 1e-12);
        p.color_taylor[0] = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(color_at_time(&p, 5.0, 0.0).x, 1.0);
    }

    #[test]
    fn pose_interpolation_and_missing_frames() {
        let c = car();
        let mid = c.pose_at(1.5).unwrap();
        assert!((mid.translation.x - 1.5).abs() < 1e-12);
        assert_eq!((mid.k0, mid.k1), (1, 2));
        let key = c.pose_at(2.0).unwrap();
        assert_eq!((key.k0, key.k1, key.weight), (2, 2, 0.0));
        assert!(matches!(c.pose_at(7.0), Err(Error::MissingPose { .. })));
        assert!((c.reference_time() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn containment_for_any_logistic_values(
            x in -1e6f64..1e6, y in -1e6f64..1e6, z in -1e6f64..1e6,
            l in 0.1f64..10.0, w in 0.1f64..10.0, h in 0.1f64..10.0,
        ) {
            let dims = Vec3::new(l, w, h);
            let local = box_constrain(&Vec3::new(x, y, z), &dims);
            for i in 0..3 {
                prop_assert!(local[i].abs() < 0.5 * dims[i]);
            }
        }

        #[test]
        fn to_world_preserves_distances(
            a in proptest::array::uniform3(-5f64..5.0),
            b in proptest::array::uniform3(-5f64..5.0),
            q in proptest::array::uniform4(-1f64..1.0),
            t in proptest::array::uniform3(-10f64..10.0),
        ) {
            let q = Quaternion::new(q[0] + 1.5, q[1], q[2], q[3]);
            let (a, b, t) = (Vec3::from(a), Vec3::from(b), Vec3::from(t));
            let d = (to_world(&a, &q, &t) - to_world(&b, &q, &t)).norm();
            prop_assert!((d - (a - b).norm()).abs() < 1e-9);
        }

        #[test]
        fn color_at_reference_time_ignores_taylor(
            c in proptest::array::uniform3(-0.5f64..1.5),
            k in proptest::array::uniform3(-10f64..10.0),
        ) {
            let mut p = GaussianPrimitive::new(Vec3::zeros(), Vec3::repeat(0.1), 0.5, Vec3::from(c), 2);
            p.color_taylor[0] = Vec3::from(k);
            p.color_taylor[1] = Vec3::from(k) * 3.0;
            prop_assert_eq!(color_at_time(&p, 4.0, 4.0), Vec3::from(c).map(|v| v.clamp(0.0, 1.0)));
        }
    }
}
