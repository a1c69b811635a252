use nalgebra::Quaternion;

use crate::math::{normalize_quat, sigmoid, Quat, Vec3};

/// Default order of the per-primitive color Taylor series.
pub const DEFAULT_TAYLOR_ORDER: usize = 2;

/// Trainable floats per primitive before the Taylor block:
/// mean(3) rotation(4) log-scale(3) opacity(1) color0(3).
pub const BASE_PARAMS: usize = 14;

/// Offsets of each parameter block inside a packed primitive row.
pub mod layout {
    pub const MEAN: usize = 0;
    pub const ROTATION: usize = 3;
    pub const LOG_SCALE: usize = 7;
    pub const OPACITY: usize = 10;
    pub const COLOR0: usize = 11;
    pub const TAYLOR: usize = 14;
}

/// Number of trainable floats per primitive for a Taylor order.
pub const fn params_per_primitive(taylor_order: usize) -> usize {
    BASE_PARAMS + 3 * taylor_order
}

/// One anisotropic Gaussian of the scene.
///
/// Parameters are stored unconstrained: scales as logs, opacity before the
/// sigmoid. For members of a dynamic object, `mean` holds the logistic box
/// coordinates instead of a world position.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub mean: Vec3,
    /// (w, x, y, z); renormalized after every update.
    pub rotation: Quat,
    pub log_scale: Vec3,
    pub opacity_logit: f64,
    pub color0: Vec3,
    /// Row k holds the (k+1)-th time derivative of the color.
    pub color_taylor: Vec<Vec3>,
    /// Index into the scene's dynamic objects; `None` for static primitives.
    pub object: Option<usize>,
}

impl GaussianPrimitive {
    pub fn new(mean: Vec3, scale: Vec3, opacity: f64, color: Vec3, taylor_order: usize) -> Self {
        Self {
            mean,
            rotation: Quaternion::identity(),
            log_scale: scale.map(f64::ln),
            opacity_logit: crate::math::logit(opacity),
            color0: color,
            color_taylor: vec![Vec3::zeros(); taylor_order],
            object: None,
        }
    }

    pub fn with_rotation(mut self, q: Quat) -> Self {
        self.rotation = normalize_quat(&q);
        self
    }

    pub fn scale(&self) -> Vec3 {
        self.log_scale.map(f64::exp)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn is_static(&self) -> bool {
        self.object.is_none()
    }

    pub fn renormalize(&mut self) {
        self.rotation = normalize_quat(&self.rotation);
    }

    /// Writes the trainable parameters into `out` (length `params_per_primitive(K)`).
    pub fn pack(&self, out: &mut [f64]) {
        use layout::*;
        out[MEAN..MEAN + 3].copy_from_slice(self.mean.as_slice());
        out[ROTATION] = self.rotation.w;
        out[ROTATION + 1] = self.rotation.i;
        out[ROTATION + 2] = self.rotation.j;
        out[ROTATION + 3] = self.rotation.k;
        out[LOG_SCALE..LOG_SCALE + 3].copy_from_slice(self.log_scale.as_slice());
        out[OPACITY] = self.opacity_logit;
        out[COLOR0..COLOR0 + 3].copy_from_slice(self.color0.as_slice());
        for (k, c) in self.color_taylor.iter().enumerate() {
            out[TAYLOR + 3 * k..TAYLOR + 3 * k + 3].copy_from_slice(c.as_slice());
        }
    }

    /// Reads trainable parameters packed by [`pack`](Self::pack). No renormalization.
    pub fn unpack(&mut self, row: &[f64]) {
        use layout::*;
        self.mean = Vec3::from_column_slice(&row[MEAN..MEAN + 3]);
        self.rotation = Quaternion::new(
            row[ROTATION],
            row[ROTATION + 1],
            row[ROTATION + 2],
            row[ROTATION + 3],
        );
        self.log_scale = Vec3::from_column_slice(&row[LOG_SCALE..LOG_SCALE + 3]);
        self.opacity_logit = row[OPACITY];
        self.color0 = Vec3::from_column_slice(&row[COLOR0..COLOR0 + 3]);
        for (k, c) in self.color_taylor.iter_mut().enumerate() {
            *c = Vec3::from_column_slice(&row[TAYLOR + 3 * k..TAYLOR + 3 * k + 3]);
        }
    }
}
