//! Box-constrained dynamic objects: primitives of a car live in logistic box
//! coordinates, so no parameter value can move them outside the box, and the
//! whole object follows its interpolated pose track.

use fxd::dynamics::box_constrain;
use fxd::math::Vec3;
use fxd::synth::{Benchmark, SceneSpec};

fn main() -> fxd::Result<()> {
    let bench = Benchmark::new(&SceneSpec::default())?;
    for (k, obj) in bench.scene.objects.iter().enumerate() {
        let members = bench.scene.primitives.iter().filter(|p| p.object == Some(k)).count();
        let start = obj.pose_at(obj.poses[0].timestamp)?.translation;
        let end = obj.pose_at(obj.poses.last().expect("poses").timestamp)?.translation;
        println!(
            "{}: box {:.1}×{:.1}×{:.1} m, {members} primitives, travels {:.1} m",
            obj.id,
            obj.dims.x,
            obj.dims.y,
            obj.dims.z,
            (end - start).norm()
        );
    }
    let dims = Vec3::new(4.5, 1.8, 1.5);
    for raw in [0.0, 3.0, -40.0, 1e6] {
        let local = box_constrain(&Vec3::repeat(raw), &dims);
        println!("logistic {raw:>9} → local ({:.4}, {:.4}, {:.4})", local.x, local.y, local.z);
    }
    Ok(())
}
