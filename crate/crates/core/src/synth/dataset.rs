//! Dataset directory: manifest, per-camera images and depth, LiDAR sweeps and
//! the ground-truth scene.
//!
//! ```text
//! manifest.json
//! images/{camera}/{frame:04}.ppm
//! depth/{camera}/{frame:04}.fxdm
//! lidar/{frame:04}.bin
//! scene_gt.json + scene_gt.bin
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Benchmark, SceneSpec};
use crate::dynamics::DynamicObject;
use crate::error::{Error, Result};
use crate::formats;
use crate::scene::io::{mat_to_rows, parse_json, rows_to_mat, save_scene_with_lidar_dir, ObjectEntry, ViewEntry};
use crate::scene::{CameraRole, CameraView, DepthMap, ImageBuffer, LidarFrame, LidarPoint, SceneGraph};
use crate::math::Vec3;

pub const DATASET_FORMAT: &str = "fxd-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestCamera {
    pub name: String,
    pub role: CameraRole,
    pub views: Vec<ViewEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestLidar {
    pub frame: usize,
    pub timestamp: f64,
    /// World→sensor rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub spec: SceneSpec,
    pub frames: usize,
    pub background: [f64; 3],
    pub lidar_max_range: f64,
    pub cameras: Vec<ManifestCamera>,
    pub lidar: Vec<ManifestLidar>,
    /// Tracked object boxes; LiDAR object id `k + 1` refers to entry `k`.
    pub objects: Vec<ObjectEntry>,
    pub ground_truth: String,
}

fn frame_file(dir: &str, camera: &str, frame: usize, ext: &str) -> PathBuf {
    Path::new(dir).join(camera).join(format!("{frame:04}.{ext}"))
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub(super) fn write_dataset(bench: &Benchmark, out: &Path) -> Result<()> {
    create_dir(out)?;
    let scene = &bench.scene;
    let jobs: Vec<(&str, usize, &CameraView)> = scene
        .cameras
        .iter()
        .flat_map(|c| c.views.iter().enumerate().map(move |(f, v)| (c.name.as_str(), f, v)))
        .collect();
    for c in &scene.cameras {
        create_dir(&out.join("images").join(&c.name))?;
        create_dir(&out.join("depth").join(&c.name))?;
    }
    jobs.par_iter().try_for_each(|(cam, f, view)| -> Result<()> {
        formats::write_ppm(&out.join(frame_file("images", cam, *f, "ppm")), &bench.image(view))?;
        formats::write_depth(&out.join(frame_file("depth", cam, *f, "fxdm")), &bench.depth(view))
    })?;

    let lidar_dir = out.join("lidar");
    save_scene_with_lidar_dir(scene, &out.join("scene_gt.json"), &lidar_dir)?;

    let manifest = Manifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        seed: bench.spec.seed,
        spec: bench.spec,
        frames: bench.spec.frames,
        background: scene.background,
        lidar_max_range: scene.lidar_max_range,
        cameras: scene
            .cameras
            .iter()
            .map(|c| ManifestCamera {
                name: c.name.clone(),
                role: c.role,
                views: c.views.iter().map(ViewEntry::from).collect(),
            })
            .collect(),
        lidar: scene
            .lidar
            .iter()
            .enumerate()
            .map(|(i, f)| ManifestLidar {
                frame: i,
                timestamp: f.timestamp,
                rotation: mat_to_rows(&f.rotation),
                translation: f.translation.into(),
                path: format!("lidar/{i:04}.bin"),
            })
            .collect(),
        objects: scene.objects.iter().map(ObjectEntry::from).collect(),
        ground_truth: "scene_gt.json".into(),
    };
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Read access to a dataset for training. Evaluation cameras are refused; use
/// [`Dataset::eval_split`] for held-out views.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    manifest: Manifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = parse_json(&path, &text)?;
        if manifest.format != DATASET_FORMAT {
            return Err(Error::Format(format!("unexpected dataset format `{}`", manifest.format)));
        }
        if !manifest.cameras.iter().any(|c| c.role == CameraRole::InPath) {
            return Err(Error::Dataset("manifest marks no in-path camera".into()));
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn frames(&self) -> usize {
        self.manifest.frames
    }

    pub fn in_path_cameras(&self) -> impl Iterator<Item = &ManifestCamera> {
        self.manifest.cameras.iter().filter(|c| c.role == CameraRole::InPath)
    }

    fn training_camera(&self, name: &str) -> Result<&ManifestCamera> {
        let cam = self
            .manifest
            .cameras
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Dataset(format!("no camera `{name}`")))?;
        if cam.role == CameraRole::Eval {
            return Err(Error::EvalViewAccess(name.into()));
        }
        Ok(cam)
    }

    pub fn view(&self, camera: &str, frame: usize) -> Result<CameraView> {
        let cam = self.training_camera(camera)?;
        cam.views
            .get(frame)
            .map(CameraView::from)
            .ok_or_else(|| Error::Dataset(format!("camera `{camera}` has no frame {frame}")))
    }

    pub fn load_image(&self, camera: &str, frame: usize) -> Result<ImageBuffer> {
        self.training_camera(camera)?;
        formats::read_ppm(&self.root.join(frame_file("images", camera, frame, "ppm")))
    }

    /// Exact depth of an in-path view (diagnostics only; training uses LiDAR).
    pub fn load_depth(&self, camera: &str, frame: usize) -> Result<DepthMap> {
        self.training_camera(camera)?;
        formats::read_depth(&self.root.join(frame_file("depth", camera, frame, "fxdm")))
    }

    pub fn objects(&self) -> Vec<DynamicObject> {
        self.manifest.objects.iter().map(DynamicObject::from).collect()
    }

    pub fn load_lidar(&self) -> Result<Vec<LidarFrame>> {
        let n_objects = self.manifest.objects.len();
        self.manifest
            .lidar
            .iter()
            .map(|entry| {
                let (raw, _) = formats::read_lidar(&self.root.join(&entry.path))?;
                let points = raw
                    .into_iter()
                    .map(|p| match p.object {
                        Some(k) if k >= n_objects => Err(Error::UnknownObject(format!("#{k}"))),
                        _ => Ok(LidarPoint { ..p }),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LidarFrame {
                    points,
                    rotation: rows_to_mat(&entry.rotation),
                    translation: Vec3::from(entry.translation),
                    timestamp: entry.timestamp,
                })
            })
            .collect()
    }

    pub fn load_ground_truth(&self) -> Result<SceneGraph> {
        crate::scene::io::load_scene(&self.root.join(&self.manifest.ground_truth))
    }

    pub fn eval_split(&self) -> EvalSplit<'_> {
        EvalSplit { dataset: self }
    }
}

/// Held-out evaluation cameras of a dataset.
#[derive(Debug, Clone, Copy)]
pub struct EvalSplit<'a> {
    dataset: &'a Dataset,
}

impl EvalSplit<'_> {
    pub fn cameras(&self) -> impl Iterator<Item = &ManifestCamera> {
        self.dataset
            .manifest
            .cameras
            .iter()
            .filter(|c| c.role == CameraRole::Eval)
    }

    fn camera(&self, name: &str) -> Result<&ManifestCamera> {
        self.cameras()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Dataset(format!("no evaluation camera `{name}`")))
    }

    pub fn view(&self, camera: &str, frame: usize) -> Result<CameraView> {
        self.camera(camera)?
            .views
            .get(frame)
            .map(CameraView::from)
            .ok_or_else(|| Error::Dataset(format!("camera `{camera}` has no frame {frame}")))
    }

    pub fn load_image(&self, camera: &str, frame: usize) -> Result<ImageBuffer> {
        self.camera(camera)?;
        formats::read_ppm(&self.dataset.root.join(frame_file("images", camera, frame, "ppm")))
    }
}
