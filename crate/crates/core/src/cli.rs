//! The `fxd` command line: argument parsing, config resolution and dispatch.
//! The binary is a thin wrapper around [`main_with_args`].

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bootstrap::{bootstrap_view, BootstrapConfig};
use crate::error::{Error, Result};
use crate::eval::{eval_views_from_dataset, evaluate};
use crate::fid::{fid_mean_shift_demo, image_features};
use crate::formats;
use crate::ivw::{build_warp_map, render_pseudo_gt};
use crate::math::Vec3;
use crate::render::{render, render_color, render_depth};
use crate::scene::io::{load_scene, save_scene};
use crate::scene::{CameraView, SceneGraph};
use crate::synth::{generate, Dataset, SceneSpec};
use crate::train::{train, TrainConfig, TrainingData};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Output locations that may also come from the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything a run can be configured with. Loaded from TOML or JSON (by
/// extension); command-line flags override the file, which overrides defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub scene: SceneSpec,
    pub train: TrainConfig,
    pub paths: Paths,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => crate::scene::io::parse_json(path, &text),
            _ => toml::from_str(&text).map_err(|e| {
                let (line, column) = e
                    .span()
                    .map(|s| line_col(&text, s.start))
                    .unwrap_or((0, 0));
                Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    column,
                    message: e.message().to_string(),
                }
            }),
        }
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn defaults_help() -> String {
    let text = toml::to_string(&Config::default()).unwrap_or_default();
    format!("Config file defaults (TOML; JSON with the same keys also accepted):\n\n{text}")
}

#[derive(Debug, Parser)]
#[command(name = "fxd", version, about = "Gaussian splatting for driving scenes with out-of-path supervision")]
#[command(after_long_help = defaults_help())]
pub struct Cli {
    /// Worker threads (default: logical cores, or 1 with --deterministic).
    #[arg(long, global = true, env = "FXD_THREADS")]
    pub threads: Option<usize>,
    /// Single-threaded unless --threads is given; fixes all reduction orders.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_stage_iters(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    parts.try_into().map_err(|p: Vec<usize>| format!("expected 3 values, got {}", p.len()))
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML or JSON config; see `fxd --help` for keys and defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: config `paths.out`, else `out`].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ViewArgs {
    /// Camera name.
    #[arg(long, default_value = "front")]
    pub camera: String,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a procedural benchmark dataset.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Use the occlusion-heavy layout.
        #[arg(long)]
        occlusion_heavy: bool,
    },
    /// Train a field on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Iterations per stage, e.g. 500,1500,1000.
        #[arg(long, value_parser = parse_stage_iters)]
        stage_iters: Option<[usize; 3]>,
        /// Occlusion limit of warped rays, in [0, 1].
        #[arg(long)]
        beta: Option<f64>,
        /// Disable out-of-path supervision.
        #[arg(long)]
        no_ivw: bool,
        /// Disable depth bootstrapping.
        #[arg(long)]
        no_bootstrap: bool,
    },
    /// Render a view of a scene as PPM colour and depth raster.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: PathBuf,
        /// Look the view up in this dataset (needed for evaluation cameras).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        view: ViewArgs,
        /// Sideways displacement of the camera in metres (positive = left).
        #[arg(long, default_value_t = 0.0)]
        lateral: f64,
    },
    /// Warp an in-path view to a displaced camera and dump the pseudo ground truth.
    Warp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
        /// Sideways displacement of the target camera in metres.
        #[arg(long, default_value_t = 1.0)]
        lateral: f64,
        /// Vertical displacement of the target camera in metres.
        #[arg(long, default_value_t = 0.0)]
        vertical: f64,
        /// [default: config `train.beta`]
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Rectify a view's rendered depth with accumulated LiDAR.
    Bootstrap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
    },
    /// Score a scene on a dataset's evaluation cameras (JSON report).
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Show that realigning feature means pushes FID below that of real views.
    FidDemo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Sideways displacement of the shifted views in metres.
        #[arg(long, default_value_t = 1.0)]
        shift: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Train { .. } => "train",
            Command::Render { .. } => "render",
            Command::Warp { .. } => "warp",
            Command::Bootstrap { .. } => "bootstrap",
            Command::Eval { .. } => "eval",
            Command::FidDemo { .. } => "fid-demo",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Generate { common, .. }
            | Command::Train { common, .. }
            | Command::Render { common, .. }
            | Command::Warp { common, .. }
            | Command::Bootstrap { common, .. }
            | Command::Eval { common, .. }
            | Command::FidDemo { common, .. } => common,
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn configure_threads(threads: Option<usize>, deterministic: bool) {
    let n = match (threads, deterministic) {
        (Some(n), _) => n,
        (None, true) => 1,
        (None, false) => return,
    };
    // Fails only if the pool is already built (repeated in-process calls).
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

/// Resolves the config (flag > file > default) and runs the command.
pub fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads, cli.deterministic);
    let mut config = Config::load_or_default(cli.command.common().config.as_deref())?;
    apply_flags(&cli.command, &mut config);
    config.train.validate()?;
    let out = config.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    append_provenance(&out, &cli.command, &config)?;
    dispatch(&cli.command, &config, &out)
}

fn apply_flags(command: &Command, config: &mut Config) {
    if let Some(out) = &command.common().out {
        config.paths.out = Some(out.clone());
    }
    match command {
        Command::Generate { seed, .. } => {
            if let Some(s) = seed {
                config.scene.seed = *s;
            }
        }
        Command::Train {
            dataset,
            seed,
            stage_iters,
            beta,
            no_ivw,
            no_bootstrap,
            ..
        } => {
            if let Some(d) = dataset {
                config.paths.dataset = Some(d.clone());
            }
            if let Some(s) = seed {
                config.train.seed = *s;
            }
            if let Some(it) = stage_iters {
                config.train.stage_iters = *it;
            }
            if let Some(b) = beta {
                config.train.beta = *b;
            }
            if *no_ivw {
                config.train.use_ivw = false;
            }
            if *no_bootstrap {
                config.train.use_bootstrap = false;
            }
        }
        Command::Render { dataset, .. } | Command::Eval { dataset, .. } | Command::FidDemo { dataset, .. } => {
            if let Some(d) = dataset {
                config.paths.dataset = Some(d.clone());
            }
        }
        Command::Warp { beta, .. } => {
            if let Some(b) = beta {
                config.train.beta = *b;
            }
        }
        Command::Bootstrap { .. } => {}
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_sha256: String,
    args: Vec<String>,
}

fn append_provenance(out: &Path, command: &Command, config: &Config) -> Result<()> {
    let seed = match command {
        Command::Generate { .. } => config.scene.seed,
        _ => config.train.seed,
    };
    let record = Provenance {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config_sha256: config.digest(),
        args: std::env::args().skip(1).collect(),
    };
    let path = out.join("provenance.jsonl");
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    let line = serde_json::to_string(&record).expect("provenance serializes");
    writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn dataset_path(config: &Config) -> Result<&Path> {
    config
        .paths
        .dataset
        .as_deref()
        .ok_or_else(|| Error::Config("no dataset given (--dataset or paths.dataset)".into()))
}

fn scene_view(scene: &SceneGraph, v: &ViewArgs) -> Result<CameraView> {
    scene
        .track(&v.camera)
        .and_then(|t| t.views.get(v.frame))
        .cloned()
        .ok_or_else(|| Error::Dataset(format!("scene has no view {}/{}", v.camera, v.frame)))
}

/// `view` moved sideways (camera left is positive) and up in its own frame.
fn displaced(view: &CameraView, lateral: f64, vertical: f64) -> CameraView {
    let mut out = view.clone();
    let left_cam = Vec3::new(-1.0, 0.0, 0.0);
    let up_cam = Vec3::new(0.0, -1.0, 0.0);
    let shift_world = view.rotation.transpose() * (left_cam * lateral + up_cam * vertical);
    out.translation -= view.rotation * shift_world;
    out
}

fn dispatch(command: &Command, config: &Config, out: &Path) -> Result<()> {
    match command {
        Command::Generate { occlusion_heavy, .. } => {
            let spec = if *occlusion_heavy {
                SceneSpec::occlusion_heavy(config.scene.seed)
            } else {
                config.scene
            };
            generate(&spec, out)?;
            println!("wrote dataset to {}", out.display());
        }
        Command::Train { .. } => {
            let dataset = Dataset::open(dataset_path(config)?)?;
            let data = TrainingData::from_dataset(&dataset)?;
            let outcome = train(&data, &config.train)?;
            save_scene(&outcome.scene, &out.join("scene.json"))?;
            outcome.write_log(&out.join("metrics.jsonl"))?;
            write_json(&out.join("config.json"), config)?;
            if let Some(last) = outcome.log.last() {
                println!(
                    "trained {} primitives; in-path PSNR {:.2} dB",
                    outcome.scene.primitives.len(),
                    last.psnr_in_path
                );
            }
        }
        Command::Render { scene, view, lateral, .. } => {
            let field = load_scene(scene)?;
            let base = match &config.paths.dataset {
                Some(d) => dataset_view(&Dataset::open(d)?, view)?,
                None => scene_view(&field, view)?,
            };
            let v = displaced(&base, *lateral, 0.0);
            let r = render(&field, &v, v.timestamp);
            formats::write_ppm(&out.join("render.ppm"), &r.color)?;
            formats::write_depth(&out.join("depth.fxdm"), &r.depth)?;
        }
        Command::Warp { scene, view, lateral, vertical, .. } => {
            let field = load_scene(scene)?;
            let source = scene_view(&field, view)?;
            let target = displaced(&source, *lateral, *vertical);
            let depth = render_depth(&field, &source, source.timestamp);
            let warp = build_warp_map(&source, &target, &depth);
            let pg = render_pseudo_gt(&field, &warp, target.timestamp, config.train.beta);
            formats::write_depth(&out.join("reference_depth.fxdm"), &warp.reference_depth())?;
            formats::write_ppm(&out.join("pseudo_gt.ppm"), &pg.image)?;
            formats::write_mask_ppm(&out.join("pseudo_gt_mask.ppm"), &pg.mask)?;
            formats::write_ppm(&out.join("target.ppm"), &render_color(&field, &target, target.timestamp))?;
            println!("{} of {} source pixels supervised", pg.mask.count(), pg.mask.valid.len());
        }
        Command::Bootstrap { scene, view, .. } => {
            let field = load_scene(scene)?;
            let v = scene_view(&field, view)?;
            let cfg: &BootstrapConfig = &config.train.bootstrap;
            let r = bootstrap_view(&field, &v, render_depth(&field, &v, v.timestamp), cfg)?;
            r.sparse.write_csv(&out.join("sparse.csv"))?;
            write_json(&out.join("rectifier.json"), &r.rectifier)?;
            formats::write_depth(&out.join("rectified.fxdm"), &r.rectified)?;
            println!("a = {:.6}, b = {:.6} from {} samples", r.rectifier.a, r.rectifier.b, r.sparse.len());
        }
        Command::Eval { scene, .. } => {
            let dataset = Dataset::open(dataset_path(config)?)?;
            let report = evaluate(&load_scene(scene)?, &eval_views_from_dataset(&dataset)?)?;
            write_json(&out.join("eval.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::FidDemo { shift, .. } => {
            let dataset = Dataset::open(dataset_path(config)?)?;
            let gt = dataset.load_ground_truth()?;
            let (mut a, mut b, mut shifted) = (Vec::new(), Vec::new(), Vec::new());
            for cam in dataset.in_path_cameras() {
                for f in 0..cam.views.len() {
                    let feats = image_features(&dataset.load_image(&cam.name, f)?);
                    if f % 2 == 0 {
                        a.push(feats);
                        let v = displaced(&dataset.view(&cam.name, f)?, *shift, 0.0);
                        shifted.push(image_features(&render_color(&gt, &v, v.timestamp)));
                    } else {
                        b.push(feats);
                    }
                }
            }
            let report = fid_mean_shift_demo(&a, &b, &shifted)?;
            write_json(&out.join("fid_demo.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
    }
    Ok(())
}

fn dataset_view(dataset: &Dataset, v: &ViewArgs) -> Result<CameraView> {
    match dataset.view(&v.camera, v.frame) {
        Err(Error::EvalViewAccess(_)) => dataset.eval_split().view(&v.camera, v.frame),
        other => other,
    }
}
