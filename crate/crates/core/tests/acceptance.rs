//! Acceptance suite: one PASS/FAIL line per criterion, each with its runtime
//! budget. Lines go straight to stderr so they show up under plain
//! `cargo test`. Failing criteria are reported, not asserted, unless
//! `FXD_ACCEPTANCE_STRICT=1` is set.

mod common;

/// Bypasses libtest's output capture.
fn say(line: String) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

use std::io::Write;
use std::time::{Duration, Instant};

use fxd::bootstrap::{apply_selection_rules, fit_rectifier, rectify, SparseDepthMap, SparseSample};
use fxd::dynamics::box_constrain;
use fxd::eval::{eval_views_from_benchmark, evaluate, EvalReport};
use fxd::fid::{fid, fid_mean_shift_demo, image_features, FeatureStats};
use fxd::ivw::{build_warp_map, render_pseudo_gt};
use fxd::math::Vec3;
use fxd::render::render_depth;
use fxd::scene::{DepthMap, GaussianPrimitive, SceneGraph};
use fxd::synth::{Benchmark, SceneSpec};
use fxd::train::{in_path_psnr, train, TrainConfig, TrainOutcome, TrainingData};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run(id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let o = f();
    let elapsed = t0.elapsed();
    let pass = o.pass && elapsed <= budget;
    say(format!(
        "{} {id}. {name}: {} [{:.1} s of {} s]",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    ));
    pass
}

fn psnr_of_mse(mse: f64) -> f64 {
    -10.0 * mse.log10()
}

/// PseudoGT of every in-path view at a 1 m lateral shift, with the field's
/// own depth injected, against the in-path images; squared error pooled over
/// all supervised pixels.
fn cycle_consistency() -> Outcome {
    let bench = Benchmark::new(&SceneSpec::default()).unwrap();
    let (mut se, mut n) = (0.0, 0usize);
    let mut worst = f64::INFINITY;
    for track in bench.scene.in_path_tracks() {
        for view in &track.views {
            let side = Vec3::z().cross(&view.forward()).normalize();
            let target = view.translated(&side);
            let warp = build_warp_map(view, &target, &bench.depth(view));
            let pg = render_pseudo_gt(&bench.scene, &warp, view.timestamp, 0.95);
            let gt = bench.image(view);
            let (mut s, mut k) = (0.0, 0);
            for i in 0..gt.len() {
                if pg.mask.valid[i] {
                    s += (0..3).map(|c| (pg.image.pixels[i][c] - gt.pixels[i][c]).powi(2)).sum::<f64>();
                    k += 3;
                }
            }
            se += s;
            n += k;
            worst = worst.min(psnr_of_mse(s / k as f64));
        }
    }
    let pooled = psnr_of_mse(se / n as f64);
    outcome(pooled >= 30.0, format!("pooled {pooled:.2} dB over {} px (worst view {worst:.2} dB), need ≥ 30", n / 3))
}

fn rectifier_exactness() -> Outcome {
    let bench = Benchmark::new(&SceneSpec::default()).unwrap();
    let view = bench.view("front", 10).unwrap();
    let truth = bench.depth(view);
    let (a, b) = (1.25, 0.3);
    // rendered depth whose affine correction towards the truth is (a, b)
    let mut corrupted = DepthMap::invalid(truth.width, truth.height);
    for i in 0..truth.len() {
        if truth.valid[i] {
            corrupted.set_index(i, (truth.depth[i] - b) / a);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sample = |noise: f64, rng: &mut ChaCha8Rng| {
        let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let mut samples = Vec::new();
        for v in 0..truth.height {
            for u in 0..truth.width {
                if let Some(d) = truth.get(u, v) {
                    if rng.gen_bool(0.1) && corrupted.get(u, v).is_some() {
                        let e = if noise > 0.0 { normal.sample(rng) } else { 0.0 };
                        samples.push(SparseSample { u, v, depth: d + e, timestamp: 0.0, world: Vec3::zeros() });
                    }
                }
            }
        }
        SparseDepthMap { width: truth.width, height: truth.height, samples }
    };
    let exact = fit_rectifier(&sample(0.0, &mut rng), &corrupted).unwrap();
    let (da, db) = ((exact.a - a).abs(), (exact.b - b).abs());
    let noisy = fit_rectifier(&sample(0.05, &mut rng), &corrupted).unwrap();
    let rel = |d: &DepthMap| {
        let (mut s, mut k) = (0.0, 0);
        for i in 0..truth.len() {
            if truth.valid[i] && d.valid[i] {
                s += (d.depth[i] - truth.depth[i]).abs() / truth.depth[i];
                k += 1;
            }
        }
        s / k as f64
    };
    let (before, after) = (rel(&corrupted), rel(&rectify(&corrupted, &noisy)));
    outcome(
        da <= 1e-6 && db <= 1e-6 && after < before,
        format!("|Δa| {da:.1e}, |Δb| {db:.1e} (≤ 1e-6); with σ = 0.05 m noise the relative error drops {before:.4} → {after:.5}"),
    )
}

fn normalized_depth() -> Outcome {
    let view = common::forward_view(64, 48);
    // flat Gaussians tiling the plane x = 5 in front of the camera
    let mut plane = SceneGraph { taylor_order: 0, ..SceneGraph::default() };
    for j in -12..=12 {
        for k in -10..=10 {
            let mean = Vec3::new(5.0, j as f64 * 0.25, k as f64 * 0.25);
            plane.primitives.push(GaussianPrimitive::new(mean, Vec3::new(0.01, 0.2, 0.2), 0.8, Vec3::repeat(0.5), 0));
        }
    }
    let d = render_depth(&plane, &view, 0.0);
    let worst = (0..d.len()).filter(|&i| d.valid[i]).map(|i| (d.depth[i] - 5.0).abs()).fold(0.0, f64::max);
    let covered = d.valid_count();
    // two centred Gaussians: opacities 0.5 at depths 1 and 3 → (0.5·1 + 0.25·3) / 0.75
    let mut pair = SceneGraph { taylor_order: 0, ..SceneGraph::default() };
    for x in [3.0, 1.0] {
        pair.primitives.push(GaussianPrimitive::new(Vec3::new(x, 0.0, 0.0), Vec3::repeat(0.1), 0.5, Vec3::repeat(1.0), 0));
    }
    let centre = render_depth(&pair, &view, 0.0).get(32, 24).unwrap();
    let hand = (centre - 5.0 / 3.0).abs();
    outcome(
        covered > 1000 && worst <= 1e-4 && hand <= 1e-6,
        format!("plane: worst |D − 5| {worst:.1e} m over {covered} px (≤ 1e-4); two-Gaussian case off by {hand:.1e} (≤ 1e-6)"),
    )
}

fn gradient_oracle() -> Outcome {
    let scene = common::random_scene(50, 10, 4);
    let errors = common::gradient_errors(&scene, &common::forward_view(64, 48), 0.0, 240, 17);
    let tight = errors.iter().filter(|e| **e <= 1e-3).count();
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    outcome(
        tight * 100 >= errors.len() * 95 && worst <= 1e-2,
        format!("{tight}/{} parameters within rel 1e-3 (≥ 95%), worst {worst:.1e} (≤ 1e-2)", errors.len()),
    )
}

fn selection_rules() -> Outcome {
    let s = |u, v, depth, timestamp| SparseSample { u, v, depth, timestamp, world: Vec3::zeros() };
    let mut rendered = DepthMap::invalid(4, 4);
    for i in 0..16 {
        rendered.set_index(i, 10.0);
    }
    rendered.set(3, 3, f64::NAN);
    let candidates = vec![
        s(0, 0, 10.2, 0.1),  // survives
        s(1, 0, 12.0, 0.0),  // deviates 20%: dropped
        s(2, 0, 9.7, 0.3),   // timestamp collision, later: dropped
        s(2, 0, 10.4, 0.2),  // earlier: survives
        s(0, 1, 10.3, 0.5),  // same time, deeper: dropped
        s(0, 1, 9.9, 0.5),   // same time, nearer: survives
        s(1, 1, 8.0, 0.0),   // deviates first, so the later one survives
        s(1, 1, 9.8, 0.4),
        s(3, 3, 30.0, 0.0),  // render invalid: rule 1 skipped, survives
    ];
    let expected = vec![s(0, 0, 10.2, 0.1), s(2, 0, 10.4, 0.2), s(0, 1, 9.9, 0.5), s(1, 1, 9.8, 0.4), s(3, 3, 30.0, 0.0)];
    let mut got = apply_selection_rules(candidates, 4, 4, Some(&rendered), 0.05).samples;
    let again = apply_selection_rules(got.clone(), 4, 4, Some(&rendered), 0.05).samples;
    let idempotent = again == got;
    let key = |x: &SparseSample| (x.u, x.v);
    let mut want = expected;
    want.sort_by_key(key);
    got.sort_by_key(key);
    outcome(got == want && idempotent, format!("{} of 9 survive as predicted: {}; idempotent: {idempotent}", got.len(), got == want))
}

fn fid_critique() -> Outcome {
    let bench = Benchmark::new(&SceneSpec { frames: 60, ..SceneSpec::default() }).unwrap();
    let (mut a, mut b, mut shifted) = (Vec::new(), Vec::new(), Vec::new());
    for track in bench.scene.in_path_tracks() {
        for (f, view) in track.views.iter().enumerate() {
            let feats = image_features(&bench.image(view));
            if f % 2 == 0 {
                a.push(feats);
                let side = Vec3::z().cross(&view.forward()).normalize();
                let sign = if f % 4 == 0 { 1.0 } else { -1.0 };
                let v = view.translated(&(side * sign));
                shifted.push(image_features(&bench.image(&v)));
            } else {
                b.push(feats);
            }
        }
    }
    let r = fid_mean_shift_demo(&a, &b, &shifted).unwrap();
    let sa = FeatureStats::from_features(&a).unwrap();
    let self_fid = fid(&sa, &sa).unwrap();
    let st = |m: &[f64], d: &[f64]| FeatureStats {
        mean: DVector::from_column_slice(m),
        cov: DMatrix::from_diagonal(&DVector::from_column_slice(d)),
    };
    let one = fid(&st(&[0.0, 0.0], &[1.0, 1.0]), &st(&[1.0, 0.0], &[1.0, 1.0])).unwrap();
    let two = fid(&st(&[0.0, 0.0], &[1.0, 4.0]), &st(&[0.0, 0.0], &[4.0, 1.0])).unwrap();
    let hands = self_fid.abs() <= 1e-6 && (one - 1.0).abs() <= 1e-6 && (two - 2.0).abs() <= 1e-6;
    outcome(
        r.passed && hands,
        format!(
            "FID shifted {:.5}, realigned {:.5} < GT split {:.5}: {}; fid(s,s) {self_fid:.1e}, hand cases {one:.6} and {two:.6}",
            r.fid_shifted, r.fid_realigned, r.fid_gt_split, r.passed
        ),
    )
}

fn containment(trained: &[&SceneGraph]) -> Outcome {
    let (mut members, mut inside) = (0, 0);
    for scene in trained {
        for p in scene.primitives.iter() {
            if let Some(k) = p.object {
                members += 1;
                let dims = scene.objects[k].dims;
                let local = box_constrain(&p.mean, &dims);
                if (0..3).all(|i| local[i].abs() < dims[i] / 2.0) {
                    inside += 1;
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dims = Vec3::new(4.5, 1.9, 1.6);
    let mut extreme_ok = true;
    for _ in 0..100_000 {
        let raw = Vec3::from_fn(|_, _| rng.gen_range(-1e6..1e6) * if rng.gen_bool(0.1) { 1e-5 } else { 1.0 });
        let local = box_constrain(&raw, &dims);
        extreme_ok &= (0..3).all(|i| local[i].abs() < dims[i] / 2.0);
    }
    for raw in [1e6, -1e6, f64::MAX, f64::MIN] {
        let local = box_constrain(&Vec3::repeat(raw), &dims);
        extreme_ok &= (0..3).all(|i| local[i].abs() < dims[i] / 2.0);
    }
    outcome(
        members > 0 && inside == members && extreme_ok,
        format!("{inside}/{members} trained object primitives inside their boxes; parameters up to ±1e6 contained: {extreme_ok}"),
    )
}

struct AblationRun {
    name: &'static str,
    report: EvalReport,
    outcome: TrainOutcome,
}

fn ablation(runs: &mut Vec<AblationRun>) -> Outcome {
    let bench = Benchmark::new(&SceneSpec::default()).unwrap();
    let data = TrainingData::from_benchmark(&bench);
    let held_out = eval_views_from_benchmark(&bench);
    for (name, ivw, db) in [("baseline", false, false), ("DB only", false, true), ("IVW only", true, false), ("full", true, true)] {
        let cfg = TrainConfig { use_ivw: ivw, use_bootstrap: db, ..TrainConfig::default() };
        let outcome = train(&data, &cfg).unwrap();
        let report = evaluate(&outcome.scene, &held_out).unwrap();
        say(format!("      {name:<9} PSNR {:.2} dB, SSIM {:.4}, FID {:.4}", report.psnr, report.ssim, report.fid));
        runs.push(AblationRun { name, report, outcome });
    }
    let get = |n: &str| &runs.iter().find(|r| r.name == n).unwrap().report;
    let (base, db, ivw, full) = (get("baseline"), get("DB only"), get("IVW only"), get("full"));
    let gap = full.psnr - base.psnr;
    let between = |r: &EvalReport| r.psnr > base.psnr && r.psnr < full.psnr;
    outcome(
        gap >= 1.0 && full.ssim > base.ssim && between(db) && between(ivw),
        format!(
            "full − baseline {gap:+.2} dB (≥ 1.0), SSIM {:.4} vs {:.4}; DB only {:.2}, IVW only {:.2} between {:.2} and {:.2}",
            full.ssim, base.ssim, db.psnr, ivw.psnr, base.psnr, full.psnr
        ),
    )
}

fn beta_ordering() -> Outcome {
    let bench = Benchmark::new(&SceneSpec::occlusion_heavy(0)).unwrap();
    let data = TrainingData::from_benchmark(&bench);
    let mut scores = Vec::new();
    for beta in [0.0, 0.5, 0.8, 0.95] {
        let cfg = TrainConfig { beta, ..beta_schedule() };
        let out = train(&data, &cfg).unwrap();
        scores.push(in_path_psnr(&out.scene, &data.views));
    }
    let increasing = scores.windows(2).all(|w| w[1] > w[0]);
    let gap = scores[3] - scores[0];
    outcome(
        increasing && gap >= 3.0,
        format!(
            "in-path PSNR {} dB for β = 0, 0.5, 0.8, 0.95; increasing: {increasing}, gap {gap:.2} dB (≥ 3)",
            scores.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>().join(" / ")
        ),
    )
}

fn beta_schedule() -> TrainConfig {
    TrainConfig { stage_iters: [300, 300, 600], ..TrainConfig::default() }
}

#[test]
fn acceptance() {
    let min = |m: u64| Duration::from_secs(60 * m);
    let secs = Duration::from_secs;
    let mut results = Vec::new();
    results.push(run(1, "cycle consistency", secs(60), cycle_consistency));
    results.push(run(2, "occlusion-aware β ordering", min(15), beta_ordering));
    results.push(run(3, "rectifier exactness", secs(10), rectifier_exactness));
    results.push(run(4, "normalized depth", secs(5), normalized_depth));
    results.push(run(5, "gradient oracle", min(5), gradient_oracle));
    results.push(run(6, "selection rules", secs(1), selection_rules));
    results.push(run(7, "FID critique", secs(30), fid_critique));
    let mut runs = Vec::new();
    results.push(run(8, "ablation direction", min(30), || ablation(&mut runs)));
    let trained: Vec<&SceneGraph> = runs.iter().map(|r| &r.outcome.scene).collect();
    results.push(run(9, "dynamic containment", secs(1), || containment(&trained)));
    let passed = results.iter().filter(|p| **p).count();
    say(format!("{passed}/{} criteria passed", results.len()));
    if std::env::var("FXD_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        assert_eq!(passed, results.len());
    }
}
