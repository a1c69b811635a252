//! Inverse view warping on the ground-truth field: the pseudo ground truth of
//! a displaced camera, re-indexed by source pixel, should reproduce the
//! in-path image wherever it is defined. Also shows the effect of the
//! occlusion limit on an occlusion-heavy street.

use fxd::ivw::{build_warp_map, render_pseudo_gt};
use fxd::math::Vec3;
use fxd::metrics::psnr;
use fxd::scene::CameraView;
use fxd::synth::{Benchmark, SceneSpec};

fn shifted(view: &CameraView, lateral: f64) -> CameraView {
    let mut v = view.clone();
    // Camera x points right; moving the centre left by `lateral`.
    v.translation += Vec3::new(lateral, 0.0, 0.0);
    v
}

fn main() -> fxd::Result<()> {
    for (name, spec) in [("default", SceneSpec::default()), ("occlusion-heavy", SceneSpec::occlusion_heavy(0))] {
        let bench = Benchmark::new(&spec)?;
        let source = bench.view("front", 12).expect("front camera").clone();
        let target = shifted(&source, 1.0);
        let warp = build_warp_map(&source, &target, &bench.depth(&source));
        let gt = bench.image(&source);
        println!("{name}:");
        for beta in [0.0, 0.5, 0.9, 0.95] {
            let pg = render_pseudo_gt(&bench.scene, &warp, target.timestamp, beta);
            let score = psnr(&pg.image, &gt, Some(&pg.mask))?;
            println!("  beta {beta:.2}: {score:6.2} dB over {} pixels", pg.mask.count());
        }
    }
    Ok(())
}
