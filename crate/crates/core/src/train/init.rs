//! Primitive initialization from accumulated LiDAR returns.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::TrainingData;
use crate::dynamics::logistic_from_local;
use crate::math::Vec3;
use crate::render::NEAR_PLANE;
use crate::scene::GaussianPrimitive;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    /// Voxel edge for downsampling the accumulated returns (m).
    pub voxel: f64,
    pub opacity: f64,
    /// Use every n-th LiDAR frame.
    pub frame_stride: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            voxel: 0.25,
            opacity: 0.7,
            frame_stride: 1,
        }
    }
}

type Key = (i64, i64, i64, i64);

#[derive(Default)]
struct Cell {
    position: Vec3,
    n: usize,
    color: Vec3,
    n_color: usize,
}

fn voxel_key(p: &Vec3, voxel: f64, object: Option<usize>) -> Key {
    (
        object.map_or(-1, |k| k as i64),
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    )
}

/// Color of the first training view at the same time that sees `world`.
fn sample_color(data: &TrainingData, timestamp: f64, world: &Vec3) -> Option<Vec3> {
    data.views.iter().filter(|v| v.view.timestamp == timestamp).find_map(|v| {
        let ((u, row), _) = v.view.pixel_of(world, NEAR_PLANE)?;
        Some(Vec3::from(v.image.get(u, row)))
    })
}

/// One primitive per occupied voxel: mean position of its returns, color
/// sampled from the training images, isotropic scale from the spacing of
/// neighbouring voxels. Returns on dynamic objects become box members with
/// logistic coordinates, accumulated in the object's local frame.
pub fn init_from_lidar(data: &TrainingData, config: &InitConfig) -> Vec<GaussianPrimitive> {
    let voxel = config.voxel;
    let mut cells: BTreeMap<Key, Cell> = BTreeMap::new();
    for frame in data.lidar.iter().step_by(config.frame_stride.max(1)) {
        for p in &frame.points {
            let world = frame.to_world(&p.position);
            let (position, object) = match p.object {
                None => (world, None),
                Some(k) => {
                    let Some(obj) = data.objects.get(k) else { continue };
                    let Ok(local) = obj.world_to_local(&world, frame.timestamp) else { continue };
                    (local, Some(k))
                }
            };
            let cell = cells.entry(voxel_key(&position, voxel, object)).or_default();
            cell.position += position;
            cell.n += 1;
            if cell.n_color < 4 {
                if let Some(c) = sample_color(data, frame.timestamp, &world) {
                    cell.color += c;
                    cell.n_color += 1;
                }
            }
        }
    }

    let keys: Vec<Key> = cells.keys().copied().collect();
    let centers: Vec<Vec3> = cells.values().map(|c| c.position / c.n as f64).collect();
    let index: HashMap<Key, usize> = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();

    let mut out = Vec::with_capacity(keys.len());
    for (i, (key, cell)) in cells.iter().enumerate() {
        // mean distance to the three nearest neighbouring voxel centres
        let mut d: Vec<f64> = Vec::with_capacity(26);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    if let Some(&j) = index.get(&(key.0, key.1 + dx, key.2 + dy, key.3 + dz)) {
                        d.push((centers[j] - centers[i]).norm());
                    }
                }
            }
        }
        d.sort_by(f64::total_cmp);
        let spacing = if d.is_empty() {
            voxel
        } else {
            d.iter().take(3).sum::<f64>() / d.len().min(3) as f64
        };
        let sigma = (0.5 * spacing).clamp(0.1 * voxel, voxel);
        let color = if cell.n_color > 0 {
            cell.color / cell.n_color as f64
        } else {
            Vec3::repeat(0.5)
        };
        let object = (key.0 >= 0).then_some(key.0 as usize);
        let mean = match object {
            None => centers[i],
            Some(k) => logistic_from_local(&centers[i], &data.objects[k].dims),
        };
        let mut p = GaussianPrimitive::new(mean, Vec3::repeat(sigma), config.opacity, color, data.taylor_order);
        p.object = object;
        out.push(p);
    }
    out
}
