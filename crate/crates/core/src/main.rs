use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use sparse_splat::align::{
    average_focal, estimate_focal, global_align, init_gaussians_from_points, AlignConfig, DEFAULT_CONFIDENCE_THRESHOLD,
};
use sparse_splat::io::{
    read_camera, read_cameras, read_config, read_ply, read_png, write_cameras, write_depth, write_json, write_ply,
    write_png, PlyFormat, SceneBundle, SynthSpec,
};
use sparse_splat::metrics::{score_view, ViewScore};
use sparse_splat::raster::{render, RenderSettings};
use sparse_splat::scene::Camera;
use sparse_splat::train::{train_with_checkpoints, TrainConfig, TrainViews};
use sparse_splat::{Error, Result};

#[derive(Parser)]
#[command(name = "sparse-splat", version, about = "Sparse-view Gaussian splatting from dense point maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene bundle.
    Synth(SynthArgs),
    /// Estimate focal and poses, align point maps and write the initial cloud.
    Init(InitArgs),
    /// Optimize a cloud against a bundle's training views.
    Train(TrainArgs),
    /// Render a cloud from one camera, or from every camera in a list.
    Render(RenderArgs),
    /// Score rendered PNGs against references with matching file names.
    Eval(EvalArgs),
}

#[derive(Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct InitArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE_THRESHOLD)]
    conf_threshold: f64,
    /// Merge points per voxel of this size; 0 keeps every point.
    #[arg(long, default_value_t = 0.0)]
    voxel_size: f64,
    #[arg(long, default_value_t = 0)]
    sh_degree: usize,
    /// Alignment settings as JSON; defaults when omitted.
    #[arg(long)]
    align_config: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    init: PathBuf,
    /// Training settings as JSON; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct RenderArgs {
    #[arg(long)]
    cloud: PathBuf,
    /// A camera object, or a list of cameras.
    #[arg(long)]
    camera: PathBuf,
    /// PNG path for one camera; a directory of `NNN.png` files for a list.
    #[arg(long)]
    out: PathBuf,
    /// Depth PFM path (one camera) or directory (list).
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Render settings as JSON; defaults when omitted.
    #[arg(long)]
    settings: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    renders: PathBuf,
    #[arg(long)]
    refs: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn echo_config(command: &str, config: &impl Serialize) {
    let text = serde_json::to_string(config).unwrap_or_else(|e| format!("<unserializable: {e}>"));
    log::info!("{command} resolved config: {text}");
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let spec: SynthSpec = read_config(&args.spec)?;
    echo_config("synth", &json!({ "args": &args, "spec": &spec }));
    let bundle = sparse_splat::io::synth(&spec, args.seed)?;
    bundle.write(&args.out)?;
    log::info!(
        "wrote {} training views, {} held-out views, {} pairs to {}",
        bundle.train.len(),
        bundle.holdout.as_ref().map_or(0, |h| h.len()),
        bundle.pairs.len(),
        args.out.display()
    );
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run_init(args: InitArgs) -> Result<()> {
    let align: AlignConfig = match &args.align_config {
        Some(p) => read_config(p)?,
        None => AlignConfig::default(),
    };
    echo_config("init", &json!({ "args": &args, "align": &align }));
    let bundle = SceneBundle::read(&args.bundle)?;
    let focals = bundle.point_maps.iter().map(estimate_focal).collect::<Result<Vec<_>>>()?;
    let focal = average_focal(&focals)?;
    log::info!("per-view focals {focals:?}, mean {focal}");
    let state = global_align(&bundle.graph, &bundle.point_maps, &bundle.pairs, &align)?;
    log::info!(
        "alignment objective {:.6e} -> {:.6e}, scale product {}",
        state.objective_trace[0],
        state.final_objective(),
        state.scale_product()
    );
    let cloud = init_gaussians_from_points(&state.reference_points(), args.conf_threshold, args.voxel_size, args.sh_degree)?;
    write_ply(&args.out, &cloud, PlyFormat::BinaryLittleEndian)?;
    let cameras = bundle
        .train
        .cameras
        .iter()
        .zip(&state.poses)
        .map(|(c, pose)| Camera::new(focal, c.width, c.height, *pose))
        .collect::<Result<Vec<_>>>()?;
    write_cameras(&with_suffix(&args.out, ".cameras.json"), &cameras)?;
    write_json(
        &with_suffix(&args.out, ".init.json"),
        &json!({
            "focals": focals,
            "focal": focal,
            "objective_trace": state.objective_trace,
            "scale_product": state.scale_product(),
            "rejected_steps": state.rejected_steps,
            "primitives": cloud.len(),
        }),
    )?;
    log::info!("wrote {} primitives to {}", cloud.len(), args.out.display());
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mut config: TrainConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(n) = args.iterations {
        config.iterations = n;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate()?;
    echo_config("train", &json!({ "args": &args, "config": &config }));
    let bundle = SceneBundle::read(&args.bundle)?;
    let cloud = read_ply(&args.init)?;
    mkdir(&args.out)?;
    write_json(&args.out.join("config.json"), &config)?;
    let views = TrainViews {
        cameras: &bundle.train.cameras,
        images: &bundle.train.images,
        depths: &bundle.train.depths,
    };
    let ckpt_dir = args.out.join("checkpoints");
    let result = train_with_checkpoints(cloud, &views, &config, |it, cloud, log| {
        mkdir(&ckpt_dir)?;
        write_ply(&ckpt_dir.join(format!("iter_{it:06}.ply")), cloud, PlyFormat::BinaryLittleEndian)?;
        write_json(
            &ckpt_dir.join(format!("iter_{it:06}.json")),
            &json!({ "iteration": it, "seed": config.seed, "last": log.records.last() }),
        )
    });
    let log_path = args.out.join("train_log.csv");
    match result {
        Ok((cloud, log)) => {
            log.write_csv(&log_path)?;
            write_ply(&args.out.join("cloud.ply"), &cloud, PlyFormat::BinaryLittleEndian)?;
            write_json(
                &args.out.join("summary.json"),
                &json!({
                    "iterations": log.records.len(),
                    "initial_rgb": log.initial_rgb,
                    "final_rgb": log.final_rgb,
                }),
            )?;
            log::info!(
                "mean train RGB loss {:?} -> {:?}; wrote {}",
                log.initial_rgb,
                log.final_rgb,
                args.out.display()
            );
            Ok(())
        }
        Err(abort) => {
            // Keep whatever was completed before failing.
            abort.log.write_csv(&log_path)?;
            write_ply(&args.out.join("partial.ply"), &abort.cloud, PlyFormat::BinaryLittleEndian)?;
            Err(abort.error)
        }
    }
}

fn run_render(args: RenderArgs) -> Result<()> {
    let settings: RenderSettings = match &args.settings {
        Some(p) => read_config(p)?,
        None => RenderSettings::default(),
    };
    echo_config("render", &json!({ "args": &args, "settings": &settings }));
    let cloud = read_ply(&args.cloud)?;
    let text = fs::read_to_string(&args.camera).map_err(|e| Error::io(&args.camera, e))?;
    let is_list = text.trim_start().starts_with('[');
    if !is_list {
        let camera = read_camera(&args.camera)?;
        let out = render(&cloud, &camera, &settings)?;
        write_png(&args.out, &out.color)?;
        if let Some(d) = &args.depth {
            write_depth(d, &out.depth)?;
        }
        return Ok(());
    }
    let cameras = read_cameras(&args.camera)?;
    mkdir(&args.out)?;
    if let Some(d) = &args.depth {
        mkdir(d)?;
    }
    for (v, camera) in cameras.iter().enumerate() {
        let out = render(&cloud, camera, &settings)?;
        write_png(&args.out.join(format!("{v:03}.png")), &out.color)?;
        if let Some(d) = &args.depth {
            write_depth(&d.join(format!("{v:03}.pfm")), &out.depth)?;
        }
    }
    log::info!("rendered {} views into {}", cameras.len(), args.out.display());
    Ok(())
}

fn png_names(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

#[derive(Serialize)]
struct EvalReport {
    views: Vec<ViewScore>,
    mean_psnr_db: f64,
    mean_ssim: f64,
}

fn run_eval(args: EvalArgs) -> Result<()> {
    echo_config("eval", &args);
    let names = png_names(&args.refs)?;
    if names.is_empty() {
        return Err(Error::InsufficientData(format!("no PNG references in {}", args.refs.display())));
    }
    let views = names
        .iter()
        .map(|n| {
            let reference = read_png(&args.refs.join(n))?;
            let image = read_png(&args.renders.join(n))?;
            score_view(n.trim_end_matches(".png"), &image, &reference)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = views.len() as f64;
    let report = EvalReport {
        mean_psnr_db: views.iter().map(|v| v.psnr_db).sum::<f64>() / n,
        mean_ssim: views.iter().map(|v| v.ssim).sum::<f64>() / n,
        views,
    };
    write_json(&args.out, &report)?;
    log::info!("mean PSNR {:.4} dB, mean SSIM {:.4}", report.mean_psnr_db, report.mean_ssim);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Init(a) => run_init(a),
        Command::Train(a) => run_train(a),
        Command::Render(a) => run_render(a),
        Command::Eval(a) => run_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            eprintln!("{}", json!({ "error": kind.as_str(), "message": e.to_string() }));
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}
