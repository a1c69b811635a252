mod common;

use std::fs;
use std::path::Path;

use fxd::bootstrap::bootstrap_view;
use fxd::math::Vec3;
use fxd::render::render_depth;
use fxd::scene::DepthMap;
use fxd::synth::{build_street, generate, perturb_field, simulate_lidar, Benchmark, Perturbation, SceneSpec};
use fxd::train::{sample_out_of_path, SamplingBox};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_spec(seed: u64) -> SceneSpec {
    let mut s = SceneSpec { seed, width: 32, height: 24, focal: 20.0, frames: 3, ..SceneSpec::default() };
    s.lidar.azimuth_step_deg = 4.0;
    s
}

/// Asymptotic Kolmogorov p-value of the one-sample statistic `d` over `n` draws.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let x = (n as f64).sqrt() * d;
    let p: f64 = (1..200).map(|k| {
        let k = k as f64;
        2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * x * x).exp()
    }).sum();
    p.clamp(0.0, 1.0)
}

fn ks_uniform(mut u: Vec<f64>) -> f64 {
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = u.len() as f64;
    let d = u
        .iter()
        .enumerate()
        .map(|(i, x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max);
    ks_p_value(d, u.len())
}

#[test]
fn out_of_path_offsets_are_uniform_over_the_box() {
    let spec = SceneSpec::default();
    let view = spec.camera(5, 0.0, 0.4);
    let heading = Vec3::new(1.0, 1.0, 0.0).normalize();
    let bx = SamplingBox { lateral: 2.0, vertical: 0.5 };
    let side = Vec3::z().cross(&heading);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut lat, mut up) = (Vec::new(), Vec::new());
    for _ in 0..10_000 {
        let v = sample_out_of_path(&view, &heading, &bx, &mut rng);
        assert_eq!(v.rotation, view.rotation);
        assert_eq!(v.timestamp, view.timestamp);
        let off = v.center() - view.center();
        assert!(off.dot(&heading).abs() < 1e-9);
        lat.push((off.dot(&side) + bx.lateral) / (2.0 * bx.lateral));
        up.push((off.z + bx.vertical) / (2.0 * bx.vertical));
    }
    assert!(ks_uniform(lat) > 0.01);
    assert!(ks_uniform(up) > 0.01);
}

#[test]
fn lidar_range_noise_has_the_configured_spread() {
    let mut noisy = SceneSpec::default();
    noisy.lidar.range_noise = 0.05;
    let mut clean = noisy;
    clean.lidar.range_noise = 0.0;
    let street = build_street(&clean);
    let a = simulate_lidar(&noisy, &street, 4);
    let b = simulate_lidar(&clean, &street, 4);
    assert_eq!(a.points.len(), b.points.len());
    let res: Vec<f64> = a
        .points
        .iter()
        .zip(&b.points)
        .filter(|(_, q)| q.position.norm() < noisy.lidar.max_range - 0.5)
        .map(|(p, q)| p.position.norm() - q.position.norm())
        .collect();
    let n = res.len() as f64;
    let mean = res.iter().sum::<f64>() / n;
    let sd = (res.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(n > 1000.0);
    assert!(mean.abs() < 4.0 * 0.05 / n.sqrt(), "mean {mean}");
    assert!((sd / 0.05 - 1.0).abs() < 0.05, "sd {sd}");
}

fn files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn dataset_generation_is_byte_deterministic() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate(&small_spec(7), a.path()).unwrap();
    generate(&small_spec(7), b.path()).unwrap();
    generate(&small_spec(8), c.path()).unwrap();
    let (fa, fb, fc) = (files(a.path()), files(b.path()), files(c.path()));
    assert!(fa.len() > 10);
    assert_eq!(fa, fb);
    assert_ne!(fa, fc);
}

fn mean_relative_error(d: &DepthMap, truth: &DepthMap) -> f64 {
    let (mut sum, mut n) = (0.0, 0);
    for i in 0..truth.len() {
        if d.valid[i] && truth.valid[i] {
            sum += (d.depth[i] - truth.depth[i]).abs() / truth.depth[i];
            n += 1;
        }
    }
    sum / n as f64
}

#[test]
fn bootstrap_undoes_a_scaled_field() {
    // Scaling the field about the camera scales its rendered depth exactly,
    // so the fit on the scaled field is the ground-truth fit divided by the
    // scale, whatever the ground-truth fit is. No cars: accumulation maps
    // their returns through the (scaled) box poses.
    let mut spec = SceneSpec::default();
    spec.layout.cars = 0;
    let bench = Benchmark::new(&spec).unwrap();
    let scaled = perturb_field(&bench.scene, Perturbation::ScaleDepth, 1.2, 0).unwrap();
    let view = bench.view("front", 0).unwrap();
    let truth = bench.depth(view);
    let reference = bootstrap_view(&bench.scene, view, truth.clone(), &Default::default()).unwrap();
    let rendered = render_depth(&scaled, view, view.timestamp);
    let before = mean_relative_error(&rendered, &truth);
    let r = bootstrap_view(&scaled, view, rendered, &Default::default()).unwrap();
    assert!(r.sparse.len() > 50);
    assert_eq!(r.sparse.samples, reference.sparse.samples);
    assert!((r.rectifier.a * 1.2 - reference.rectifier.a).abs() < 1e-6, "{} vs {}", r.rectifier.a, reference.rectifier.a);
    assert!((r.rectifier.b - reference.rectifier.b).abs() < 1e-6);
    let after = mean_relative_error(&r.rectified, &truth);
    assert!(before > 0.15 && after < 0.5 * before, "{before} → {after}");
}
