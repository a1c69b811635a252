use crate::math::{Mat3, Vec3};

/// A single LiDAR return in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub position: Vec3,
    /// Dynamic object whose box contains the return, if any.
    pub object: Option<usize>,
}

/// One LiDAR sweep with its world→sensor pose.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarFrame {
    pub points: Vec<LidarPoint>,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub timestamp: f64,
}

impl LidarFrame {
    pub fn sensor_center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }

    pub fn max_range(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.position.norm())
            .fold(0.0, f64::max)
    }
}
