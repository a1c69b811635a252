//! Trains the four ablation variants (with and without out-of-path warping
//! and depth bootstrapping) and scores them on the held-out shifted cameras.
//!
//! cargo run --release --example train_ablation -- [s1 s2 s3]

use std::time::Instant;

use fxd::eval::{eval_views_from_benchmark, evaluate};
use fxd::synth::{Benchmark, SceneSpec};
use fxd::train::{train, TrainConfig, TrainingData};

fn main() -> fxd::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("iteration count")).collect();
    let stage_iters = match args[..] {
        [a, b, c] => [a, b, c],
        _ => TrainConfig::default().stage_iters,
    };
    let bench = Benchmark::new(&SceneSpec::default())?;
    let data = TrainingData::from_benchmark(&bench);
    let held_out = eval_views_from_benchmark(&bench);
    for (name, ivw, db) in [("baseline", false, false), ("bootstrap only", false, true), ("warping only", true, false), ("full", true, true)] {
        let cfg = TrainConfig { stage_iters, use_ivw: ivw, use_bootstrap: db, ..TrainConfig::default() };
        let t0 = Instant::now();
        let out = train(&data, &cfg)?;
        let r = evaluate(&out.scene, &held_out)?;
        println!(
            "{name:<15} PSNR {:.2}  SSIM {:.4}  FID {:.4}  ({:.0} s, {} primitives)",
            r.psnr,
            r.ssim,
            r.fid,
            t0.elapsed().as_secs_f64(),
            out.scene.primitives.len()
        );
    }
    Ok(())
}
