use std::fs;
use std::path::Path;
use std::process::Command;

fn fxd(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_fxd"))
        .args(args)
        .env_remove("FXD_THREADS")
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const SMALL: &str = r#"
[scene]
width = 32
height = 24
focal = 20.0
frames = 3

[scene.lidar]
azimuth_step_deg = 4.0

[train]
stage_iters = [3, 3, 3]
eval_interval = 3
"#;

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(fxd(&[]).0, 1);
    assert_eq!(fxd(&["explode"]).0, 1);
    assert_eq!(fxd(&["train", "--no-such-flag"]).0, 1);
    assert_eq!(fxd(&["train", "--stage-iters", "1,2"]).0, 1);
    let (code, stdout, _) = fxd(&["--help"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("stage_iters = [500, 1500, 1000]"));
    assert!(stdout.contains("beta = 0.95"));
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(fxd(&["eval", "--scene", "/nonexistent/scene.json", "--dataset", "/nonexistent", "--out", p(&out)]).0, 2);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[train]\nbeta_occ = 0.9\n").unwrap();
    let (code, _, stderr) = fxd(&["generate", "--config", p(&bad), "--out", p(&out)]);
    assert_eq!(code, 2);
    assert!(stderr.contains("beta_occ"), "{stderr}");
}

#[test]
fn subcommands_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let data = dir.path().join("data");
    let data2 = dir.path().join("data2");
    let run = dir.path().join("run");
    let c = p(&cfg);

    assert_eq!(fxd(&["generate", "--config", c, "--seed", "7", "--out", p(&data), "--deterministic"]).0, 0);
    assert_eq!(fxd(&["generate", "--config", c, "--seed", "7", "--out", p(&data2), "--deterministic"]).0, 0);
    assert_eq!(fs::read(data.join("manifest.json")).unwrap(), fs::read(data2.join("manifest.json")).unwrap());
    let prov = fs::read_to_string(data.join("provenance.jsonl")).unwrap();
    let record: serde_json::Value = serde_json::from_str(prov.lines().next().unwrap()).unwrap();
    assert_eq!(record["seed"], 7);
    assert_eq!(record["command"], "generate");
    assert_eq!(record["config_sha256"].as_str().unwrap().len(), 64);

    let (code, _, stderr) = fxd(&["train", "--config", c, "--dataset", p(&data), "--out", p(&run), "--no-ivw", "--deterministic"]);
    assert_eq!(code, 0, "{stderr}");
    let resolved: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved["train"]["use_ivw"], false);
    assert_eq!(resolved["train"]["stage_iters"], serde_json::json!([3, 3, 3]));
    assert_eq!(fs::read_to_string(run.join("metrics.jsonl")).unwrap().lines().count(), 3);
    let scene = run.join("scene.json");
    let s = p(&scene);

    let view = dir.path().join("view");
    assert_eq!(fxd(&["render", "--scene", s, "--dataset", p(&data), "--camera", "eval_left", "--frame", "1", "--out", p(&view)]).0, 0);
    assert!(view.join("render.ppm").exists() && view.join("depth.fxdm").exists());

    let warp = dir.path().join("warp");
    assert_eq!(fxd(&["warp", "--scene", s, "--lateral", "1.0", "--beta", "0.9", "--out", p(&warp)]).0, 0);
    for f in ["reference_depth.fxdm", "pseudo_gt.ppm", "pseudo_gt_mask.ppm"] {
        assert!(warp.join(f).exists(), "{f}");
    }

    let gt = data.join("scene_gt.json");
    let boot = dir.path().join("boot");
    let (code, _, stderr) = fxd(&["bootstrap", "--scene", p(&gt), "--frame", "1", "--out", p(&boot)]);
    assert_eq!(code, 0, "{stderr}");
    let rect: serde_json::Value = serde_json::from_str(&fs::read_to_string(boot.join("rectifier.json")).unwrap()).unwrap();
    let samples = fs::read_to_string(boot.join("sparse.csv")).unwrap().lines().count() - 1;
    assert!(samples > 10);
    assert_eq!(rect["samples"].as_u64().unwrap() as usize, samples);
    assert!(rect["a"].as_f64().unwrap() > 0.0);

    let ev = dir.path().join("eval");
    let (code, stdout, _) = fxd(&["eval", "--scene", p(&gt), "--dataset", p(&data), "--out", p(&ev)]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(report["psnr"].as_f64().unwrap() > 40.0);
    assert_eq!(report["cameras"].as_array().unwrap().len(), 2);

    let fd = dir.path().join("fid");
    assert_eq!(fxd(&["fid-demo", "--dataset", p(&data), "--shift", "1.0", "--out", p(&fd)]).0, 0);
    assert!(fd.join("fid_demo.json").exists());
}
