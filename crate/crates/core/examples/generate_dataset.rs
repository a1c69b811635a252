//! Writes the default procedural benchmark to a directory and reopens it.
//!
//! cargo run --release --example generate_dataset -- /tmp/fxd-data

use std::path::PathBuf;

use fxd::synth::{generate, Dataset, SceneSpec};

fn main() -> fxd::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("fxd-data"));
    let spec = SceneSpec { seed: 7, ..SceneSpec::default() };
    let bench = generate(&spec, &out)?;
    let ds = Dataset::open(&out)?;
    println!(
        "{}: {} frames, {} primitives in the ground-truth field, {} LiDAR sweeps",
        out.display(),
        ds.frames(),
        bench.scene.primitives.len(),
        ds.load_lidar()?.len()
    );
    for cam in &ds.manifest().cameras {
        println!("  {:<12} {:?}", cam.name, cam.role);
    }
    Ok(())
}
