//! Scene files: a JSON descriptor plus a sidecar `FXSP` blob of primitive
//! parameters and one `.bin` file per LiDAR sweep.
//!
//! Every blob row holds the packed trainable parameters followed by one float
//! naming the owning object as an index into `object_refs` (−1 for static).
//! LiDAR object ids use the same table (id k + 1 ↦ `object_refs[k]`).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Quaternion;
use serde::{Deserialize, Serialize};

use super::{
    params_per_primitive, CameraRole, CameraTrack, CameraView, GaussianPrimitive, Intrinsics,
    LidarFrame, LidarPoint, SceneGraph,
};
use crate::dynamics::{DynamicObject, ObjectPose};
use crate::error::{Error, Result};
use crate::formats;
use crate::math::{normalize_quat, Mat3, Vec3};

pub const SCENE_FORMAT: &str = "fxd-scene";
pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    format: String,
    version: u32,
    taylor_order: usize,
    color_reference_time: f64,
    background: [f64; 3],
    lidar_max_range: f64,
    primitives: PrimitiveBlobRef,
    #[serde(default)]
    object_refs: Vec<String>,
    #[serde(default)]
    objects: Vec<ObjectEntry>,
    #[serde(default)]
    cameras: Vec<CameraEntry>,
    #[serde(default)]
    lidar: Vec<LidarEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrimitiveBlobRef {
    blob: String,
    count: usize,
    floats_per_primitive: usize,
}

/// Serialized dynamic object; shared with the dataset manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub id: String,
    pub dims: [f64; 3],
    pub poses: Vec<PoseEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseEntry {
    pub timestamp: f64,
    /// (w, x, y, z)
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl From<&DynamicObject> for ObjectEntry {
    fn from(o: &DynamicObject) -> Self {
        Self {
            id: o.id.clone(),
            dims: o.dims.into(),
            poses: o
                .poses
                .iter()
                .map(|p| PoseEntry {
                    timestamp: p.timestamp,
                    rotation: [p.rotation.w, p.rotation.i, p.rotation.j, p.rotation.k],
                    translation: p.translation.into(),
                })
                .collect(),
        }
    }
}

impl From<&ObjectEntry> for DynamicObject {
    /// Quaternions are renormalized.
    fn from(o: &ObjectEntry) -> Self {
        DynamicObject {
            id: o.id.clone(),
            dims: Vec3::from(o.dims),
            poses: o
                .poses
                .iter()
                .map(|p| ObjectPose {
                    timestamp: p.timestamp,
                    rotation: normalize_quat(&Quaternion::new(
                        p.rotation[0],
                        p.rotation[1],
                        p.rotation[2],
                        p.rotation[3],
                    )),
                    translation: Vec3::from(p.translation),
                })
                .collect(),
        }
    }
}

/// Serialized camera view; shared with the dataset manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub intrinsics: Intrinsics,
    pub width: u32,
    pub height: u32,
    /// World→camera rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub timestamp: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraEntry {
    name: String,
    role: CameraRole,
    views: Vec<ViewEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LidarEntry {
    timestamp: f64,
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    /// Path of the sweep file, relative to the scene JSON.
    points: String,
}

pub(crate) fn mat_to_rows(m: &Mat3) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

pub(crate) fn rows_to_mat(r: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::new(
        r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
    )
}

impl From<&CameraView> for ViewEntry {
    fn from(v: &CameraView) -> Self {
        Self {
            intrinsics: v.intrinsics,
            width: v.width,
            height: v.height,
            rotation: mat_to_rows(&v.rotation),
            translation: v.translation.into(),
            timestamp: v.timestamp,
        }
    }
}

impl From<&ViewEntry> for CameraView {
    fn from(e: &ViewEntry) -> Self {
        CameraView {
            intrinsics: e.intrinsics,
            width: e.width,
            height: e.height,
            rotation: rows_to_mat(&e.rotation),
            translation: Vec3::from(e.translation),
            timestamp: e.timestamp,
        }
    }
}

pub(crate) fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn relative_to(base_dir: &Path, target: &Path) -> String {
    target
        .strip_prefix(base_dir)
        .unwrap_or(target)
        .to_string_lossy()
        .replace('\\', "/")
}

/// Writes the scene JSON, the primitive blob (`<stem>.bin`) and LiDAR sweeps
/// (`<stem>_lidar/NNNN.bin`) next to `path`.
pub fn save_scene(scene: &SceneGraph, path: &Path) -> Result<()> {
    save_scene_with_lidar_dir(scene, path, &sidecar(path, "_lidar"))
}

/// Like [`save_scene`], writing LiDAR sweeps into `lidar_dir`.
pub fn save_scene_with_lidar_dir(scene: &SceneGraph, path: &Path, lidar_dir: &Path) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let blob_path = sidecar(path, ".bin");
    let stride = scene.params_per_primitive();
    let fpp = stride + 1;
    let mut rows = vec![0f32; fpp * scene.primitives.len()];
    let mut packed = vec![0.0; stride];
    for (p, row) in scene.primitives.iter().zip(rows.chunks_exact_mut(fpp)) {
        p.pack(&mut packed);
        for (dst, src) in row.iter_mut().zip(&packed) {
            *dst = *src as f32;
        }
        row[stride] = p.object.map_or(-1.0, |k| k as f32);
    }
    let blob = formats::encode_primitive_blob(&rows, fpp);
    if let Some(parent) = blob_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))?;

    let mut lidar = Vec::with_capacity(scene.lidar.len());
    for (i, frame) in scene.lidar.iter().enumerate() {
        let file = lidar_dir.join(format!("{i:04}.bin"));
        formats::write_lidar(&file, &frame.points, frame.timestamp)?;
        lidar.push(LidarEntry {
            timestamp: frame.timestamp,
            rotation: mat_to_rows(&frame.rotation),
            translation: frame.translation.into(),
            points: relative_to(&base, &file),
        });
    }

    let file = SceneFile {
        format: SCENE_FORMAT.into(),
        version: SCENE_VERSION,
        taylor_order: scene.taylor_order,
        color_reference_time: scene.color_reference_time,
        background: scene.background,
        lidar_max_range: scene.lidar_max_range,
        primitives: PrimitiveBlobRef {
            blob: relative_to(&base, &blob_path),
            count: scene.primitives.len(),
            floats_per_primitive: fpp,
        },
        object_refs: scene.objects.iter().map(|o| o.id.clone()).collect(),
        objects: scene.objects.iter().map(ObjectEntry::from).collect(),
        cameras: scene
            .cameras
            .iter()
            .map(|t| CameraEntry {
                name: t.name.clone(),
                role: t.role,
                views: t.views.iter().map(ViewEntry::from).collect(),
            })
            .collect(),
        lidar,
    };
    let text = serde_json::to_string_pretty(&file).expect("scene JSON serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads and validates a scene; quaternions are renormalized.
pub fn load_scene(path: &Path) -> Result<SceneGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SceneFile = parse_json(path, &text)?;
    if file.format != SCENE_FORMAT {
        return Err(Error::Format(format!("unexpected format tag `{}`", file.format)));
    }
    let base = path.parent().unwrap_or(Path::new(""));

    let objects: Vec<DynamicObject> = file.objects.iter().map(DynamicObject::from).collect();
    let by_id: HashMap<&str, usize> = objects
        .iter()
        .enumerate()
        .map(|(i, o)| (o.id.as_str(), i))
        .collect();
    let refs: Vec<usize> = file
        .object_refs
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownObject(id.clone()))
        })
        .collect::<Result<_>>()?;
    let resolve_ref = |raw: i64, entity: &str| -> Result<Option<usize>> {
        if raw < 0 {
            return Ok(None);
        }
        refs.get(raw as usize).copied().map(Some).ok_or_else(|| {
            Error::invariant(entity.to_string(), format!("object reference {raw} out of range"))
        })
    };

    let stride = params_per_primitive(file.taylor_order);
    let blob_path = base.join(&file.primitives.blob);
    let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    let (rows, fpp) = formats::decode_primitive_blob(&bytes)?;
    if fpp != stride + 1 || fpp != file.primitives.floats_per_primitive {
        return Err(Error::Format(format!(
            "blob has {fpp} floats per primitive, Taylor order {} needs {}",
            file.taylor_order,
            stride + 1
        )));
    }
    if rows.len() / fpp != file.primitives.count {
        return Err(Error::Format(format!(
            "blob holds {} primitives, descriptor announces {}",
            rows.len() / fpp,
            file.primitives.count
        )));
    }
    let mut primitives = Vec::with_capacity(file.primitives.count);
    let mut row64 = vec![0.0; stride];
    for (i, row) in rows.chunks_exact(fpp).enumerate() {
        for (d, s) in row64.iter_mut().zip(row) {
            *d = *s as f64;
        }
        let mut p = GaussianPrimitive::new(
            Vec3::zeros(),
            Vec3::repeat(1.0),
            0.5,
            Vec3::zeros(),
            file.taylor_order,
        );
        p.unpack(&row64);
        p.renormalize();
        p.object = resolve_ref(row[stride] as i64, &format!("primitive {i}"))?;
        primitives.push(p);
    }

    let cameras = file
        .cameras
        .iter()
        .map(|c| CameraTrack {
            name: c.name.clone(),
            role: c.role,
            views: c.views.iter().map(CameraView::from).collect(),
        })
        .collect();

    let mut lidar = Vec::with_capacity(file.lidar.len());
    for (f, entry) in file.lidar.iter().enumerate() {
        let (raw, _) = formats::read_lidar(&base.join(&entry.points))?;
        let points = raw
            .into_iter()
            .map(|p| {
                Ok(LidarPoint {
                    position: p.position,
                    object: match p.object {
                        Some(k) => resolve_ref(k as i64, &format!("lidar frame {f}"))?,
                        None => None,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        lidar.push(LidarFrame {
            points,
            rotation: rows_to_mat(&entry.rotation),
            translation: Vec3::from(entry.translation),
            timestamp: entry.timestamp,
        });
    }

    let scene = SceneGraph {
        primitives,
        objects,
        cameras,
        lidar,
        taylor_order: file.taylor_order,
        color_reference_time: file.color_reference_time,
        background: file.background,
        lidar_max_range: file.lidar_max_range,
    };
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Intrinsics;

    fn minimal() -> SceneGraph {
        let mut p = GaussianPrimitive::new(
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::new(0.5, 0.25, 0.125),
            0.5,
            Vec3::new(0.25, 0.5, 0.75),
            2,
        );
        p.color_taylor[0] = Vec3::new(0.5, -0.25, 0.0);
        // blob floats are f32; keep every parameter exactly representable
        p.log_scale = Vec3::new(-0.75, -1.5, -2.0);
        let view = CameraView::look_along(
            Intrinsics { fx: 50.0, fy: 50.0, cx: 32.0, cy: 24.0 },
            64,
            48,
            Vec3::new(-4.0, 0.0, 1.5),
            Vec3::x(),
            Vec3::z(),
            0.0,
        );
        SceneGraph {
            primitives: vec![p],
            cameras: vec![CameraTrack {
                name: "front".into(),
                role: CameraRole::InPath,
                views: vec![view],
            }],
            ..SceneGraph::default()
        }
    }

    #[test]
    fn minimal_scene_roundtrips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        let scene = minimal();
        save_scene(&scene, &path).unwrap();
        let back = load_scene(&path).unwrap();
        assert_eq!(back.primitives, scene.primitives);
        assert_eq!(back.cameras, scene.cameras);
    }

    #[test]
    fn empty_scene_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.json");
        save_scene(&SceneGraph::default(), &path).unwrap();
        assert_eq!(load_scene(&path).unwrap(), SceneGraph::default());
    }

    #[test]
    fn quaternion_is_renormalized_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        let mut scene = minimal();
        scene.primitives[0].rotation = Quaternion::new(2.0, 0.0, 0.0, 0.0);
        save_scene(&scene, &path).unwrap();
        let back = load_scene(&path).unwrap();
        assert_eq!(back.primitives[0].rotation, Quaternion::new(1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn unknown_object_reference_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        save_scene(&minimal(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let text = text.replace("\"object_refs\": []", "\"object_refs\": [\"car7\"]");
        fs::write(&path, text).unwrap();
        let err = load_scene(&path).unwrap_err();
        assert!(err.to_string().contains("car7"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{\n  \"format\": \"fxd-scene\",\n  \"version\": oops\n}").unwrap();
        match load_scene(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }
}
