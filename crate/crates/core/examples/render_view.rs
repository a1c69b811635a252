//! Renders a ground-truth view and a sideways-shifted copy as PPM files.
//!
//! cargo run --release --example render_view -- /tmp/fxd-render

use std::path::PathBuf;

use fxd::formats::{write_depth, write_ppm};
use fxd::render::render;
use fxd::synth::{Benchmark, SceneSpec};

fn main() -> fxd::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("fxd-render"));
    std::fs::create_dir_all(&out).expect("output directory");
    let bench = Benchmark::new(&SceneSpec::default())?;
    for (camera, frame) in [("front", 10), ("eval_left", 10)] {
        let view = bench.view(camera, frame).expect("camera exists");
        let r = render(&bench.scene, view, view.timestamp);
        write_ppm(&out.join(format!("{camera}.ppm")), &r.color)?;
        write_depth(&out.join(format!("{camera}.fxdm")), &r.depth)?;
        let covered = r.weight.iter().filter(|w| **w > 0.5).count();
        println!("{camera}: {covered}/{} pixels mostly covered", r.weight.len());
    }
    println!("wrote {}", out.display());
    Ok(())
}
