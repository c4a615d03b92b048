use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc::sync_channel;

use clap::{Args, Parser, Subcommand};
use gridloc::detect::tags::tag_image;
use gridloc::detect::{crosshair_line_mask, crosshair_mask};
use gridloc::image::ImageBuffer;
use gridloc::io;
use gridloc::locate::max_velocity;
use gridloc::pipeline::Localizer;
use gridloc::simulate::{generate_trajectory, Renderer, TrajectoryKind};
use gridloc::smooth::{error_stats, smooth_trajectory, TimedPose};
use gridloc::{Error, Result};
use log::{info, warn};

mod config;

use config::{dump_path, RunConfig};

/// Planar localization on a chessboard floor from a downward camera and a
/// laser crosshair.
#[derive(Parser, Debug)]
#[command(name = "gridloc", version)]
struct Cli {
    /// TOML file with optional [scene], [trajectory] and [pipeline] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scene seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a trajectory over the synthetic floor.
    Simulate(SimulateArgs),
    /// Estimate the crosshair trajectory from a directory of frames.
    Localize(LocalizeArgs),
    /// Smooth a trajectory offline with overlapping polynomial windows.
    Smooth(SmoothArgs),
    /// Compare an estimated trajectory with ground truth.
    Eval(EvalArgs),
    /// Write printable PNGs of all floor tags.
    GenTags(GenTagsArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Output directory for frame_NNNNNN.png, gt.csv and params.toml.
    #[arg(long)]
    out: PathBuf,
    /// line, arc, lissajous or waypoint-spline.
    #[arg(long)]
    trajectory: Option<TrajectoryKind>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    fps: Option<f64>,
    /// Travel speed (peak speed for lissajous), m/s.
    #[arg(long)]
    speed: Option<f64>,
    /// Gaussian noise, gray levels.
    #[arg(long)]
    noise: Option<f64>,
    /// Relative illumination ramp across the frame.
    #[arg(long)]
    illumination: Option<f64>,
    /// Perturb the laser pose slightly in every frame.
    #[arg(long)]
    jitter: bool,
    /// Fraction of frames without the laser.
    #[arg(long)]
    dropout: Option<f64>,
    /// Fraction of squares touched by an occluder.
    #[arg(long)]
    occluders: Option<f64>,
}

#[derive(Args, Debug)]
struct LocalizeArgs {
    /// Directory holding frame_NNNNNN.png files.
    #[arg(long)]
    frames: PathBuf,
    /// Trajectory CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Frame rate used to timestamp frame N as N / fps. Defaults to the
    /// trajectory fps of the config.
    #[arg(long)]
    fps: Option<f64>,
    /// Write top-down views and intermediate masks as PNG next to the
    /// output.
    #[arg(long)]
    debug_dumps: bool,
    /// Re-estimate the rectifying homography on every frame.
    #[arg(long)]
    per_frame_homography: bool,
}

#[derive(Args, Debug)]
struct SmoothArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    degree: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Estimated trajectory CSV.
    #[arg(long)]
    est: PathBuf,
    /// Ground-truth CSV.
    #[arg(long)]
    gt: PathBuf,
    /// Where to write the error CDF.
    #[arg(long)]
    cdf: Option<PathBuf>,
    /// Where to write the statistics table (it is always printed).
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenTagsArgs {
    #[arg(long)]
    out: PathBuf,
    /// Size of one tag cell in pixels.
    #[arg(long, default_value_t = 32)]
    cell_px: usize,
    /// White margin in cells.
    #[arg(long, default_value_t = 1)]
    quiet: usize,
}

/// 2 for bad configuration or input, 3 for violated internal invariants.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Singular(_)
        | Error::PointAtInfinity
        | Error::OutsideSquare
        | Error::UnknownTag(_)
        | Error::GridMisdetection(..) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.scene.seed = seed;
    }
    match cli.command {
        Command::Simulate(a) => simulate(cfg, a),
        Command::Localize(a) => localize(cfg, a),
        Command::Smooth(a) => smooth(cfg, a),
        Command::Eval(a) => eval(cfg, a),
        Command::GenTags(a) => gen_tags(cfg, a),
    }
}

fn write_dump(cfg: &RunConfig, output: &Path, is_dir: bool) -> Result<()> {
    fs::write(dump_path(output, is_dir), cfg.to_toml())?;
    Ok(())
}

fn simulate(mut cfg: RunConfig, a: SimulateArgs) -> Result<()> {
    let t = &mut cfg.trajectory;
    t.kind = a.trajectory.unwrap_or(t.kind);
    t.duration = a.duration.unwrap_or(t.duration);
    t.fps = a.fps.unwrap_or(t.fps);
    t.speed = a.speed.unwrap_or(t.speed);
    let s = &mut cfg.scene;
    s.noise.sigma = a.noise.unwrap_or(s.noise.sigma);
    s.noise.illumination = a.illumination.unwrap_or(s.noise.illumination);
    s.laser.dropout = a.dropout.unwrap_or(s.laser.dropout);
    s.occluders.square_fraction = a.occluders.unwrap_or(s.occluders.square_fraction);
    if a.jitter {
        s.laser = s.laser.with_jitter();
    }
    let cfg = cfg;
    cfg.scene.validate()?;

    let v_max = max_velocity(cfg.scene.floor.square_size, cfg.trajectory.fps);
    if cfg.trajectory.speed > v_max {
        warn!(
            "speed {:.3} m/s exceeds v_max = {v_max:.3} m/s; square tracking will alias",
            cfg.trajectory.speed
        );
    }
    let poses = generate_trajectory(&cfg.trajectory)?;
    fs::create_dir_all(&a.out)?;
    info!("building renderer");
    let renderer = Renderer::new(cfg.scene.clone())?;
    let mut records = Vec::with_capacity(poses.len());
    for (k, p) in poses.iter().enumerate() {
        let (img, gt) = renderer.render(k, p.t, &p.pose)?;
        img.save_png(a.out.join(format!("frame_{k:06}.png")))?;
        records.push(gt);
        if (k + 1) % 25 == 0 {
            info!("rendered {}/{}", k + 1, poses.len());
        }
    }
    io::write_ground_truth(fs::File::create(a.out.join("gt.csv"))?, &records)?;
    write_dump(&cfg, &a.out, true)?;
    info!("wrote {} frames to {}", records.len(), a.out.display());
    Ok(())
}

/// `frame_NNNNNN.png` files of `dir`, ordered by frame number.
fn list_frames(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::InvalidInput(format!("{}: {e}", dir.display())))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(n) = name.strip_prefix("frame_").and_then(|r| r.strip_suffix(".png")) {
            if let Ok(k) = n.parse() {
                frames.push((k, path));
            }
        }
    }
    frames.sort();
    Ok(frames)
}

fn localize(mut cfg: RunConfig, a: LocalizeArgs) -> Result<()> {
    cfg.pipeline.per_frame_homography |= a.per_frame_homography;
    let fps = a.fps.unwrap_or(cfg.trajectory.fps);
    if fps.is_nan() || fps <= 0.0 {
        return Err(Error::Config("fps must be positive".into()));
    }
    cfg.trajectory.fps = fps;
    let frames = list_frames(&a.frames)?;
    if frames.is_empty() {
        return Err(Error::InvalidInput(format!("no frame_*.png files in {}", a.frames.display())));
    }
    let debug_dir = a.debug_dumps.then(|| {
        let stem = a.out.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
        a.out.with_file_name(format!("{stem}_debug"))
    });
    if let Some(d) = &debug_dir {
        fs::create_dir_all(d)?;
    }
    let mut loc = Localizer::new(cfg.pipeline.clone())?;

    // decode ahead of the sequential tracker, keeping frame order
    let (tx, rx) = sync_channel::<(usize, Result<ImageBuffer>)>(4);
    let paths: Vec<(usize, PathBuf)> = frames.clone();
    let reader = std::thread::spawn(move || {
        for (k, p) in paths {
            if tx.send((k, ImageBuffer::load_rgb(&p))).is_err() {
                break;
            }
        }
    });
    for (k, img) in rx {
        let t = k as f64 / fps;
        let img = img
            .map_err(|e| warn!("frame {k} unreadable, bridging with the motion model: {e}"))
            .ok();
        let out = loc.process(k, t, img.as_ref(), debug_dir.is_some())?;
        if let (Some(d), Some(td)) = (&debug_dir, &out.topdown) {
            td.save_png(d.join(format!("frame_{k:06}_topdown.png")))?;
            crosshair_mask(td).save_png(d.join(format!("frame_{k:06}_laser.png")))?;
            if let Some(c) = &out.detections.crosshair {
                let thickness = cfg.pipeline.squares.crosshair_mask_thickness;
                crosshair_line_mask(td.width(), td.height(), c, thickness)
                    .save_png(d.join(format!("frame_{k:06}_ignore.png")))?;
            }
        }
    }
    reader.join().expect("frame reader panicked");
    // the history carries the retroactive correction made at the first tag fix
    let traj = cfg.pipeline.to_reference(loc.tracker().history());
    io::write_trajectory_file(&a.out, &traj)?;
    write_dump(&cfg, &a.out, false)?;
    info!("localized {} frames into {}", traj.len(), a.out.display());
    Ok(())
}

fn smooth(mut cfg: RunConfig, a: SmoothArgs) -> Result<()> {
    let p = &mut cfg.pipeline.smooth;
    p.window_size = a.window.unwrap_or(p.window_size);
    p.degree = a.degree.unwrap_or(p.degree);
    if p.window_size <= p.degree + 1 {
        return Err(Error::Config("smoothing window must exceed degree + 1".into()));
    }
    let traj = io::read_trajectory_file(&a.input)?;
    let out = smooth_trajectory(&traj, &cfg.pipeline.smooth)?;
    io::write_trajectory_file(&a.out, &out.trajectory)?;
    write_dump(&cfg, &a.out, false)
}

fn eval(cfg: RunConfig, a: EvalArgs) -> Result<()> {
    let poses = |p: &Path| -> Result<Vec<TimedPose>> {
        Ok(io::read_poses_file(p)?.into_iter().map(|(_, tp)| tp).collect())
    };
    let stats = error_stats(&poses(&a.est)?, &poses(&a.gt)?)?;
    let table = io::format_stats_table(&stats);
    print!("{table}");
    info!(
        "{} matched frames, position MAE {:.3} mm, p99 {:.3} mm",
        stats.matched, stats.position.mae, stats.position.p99
    );
    if let Some(path) = &a.table {
        fs::write(path, &table)?;
        write_dump(&cfg, path, false)?;
    }
    if let Some(path) = &a.cdf {
        io::write_cdf(fs::File::create(path)?, &stats)?;
        write_dump(&cfg, path, false)?;
    }
    Ok(())
}

fn gen_tags(cfg: RunConfig, a: GenTagsArgs) -> Result<()> {
    if a.cell_px == 0 {
        return Err(Error::InvalidArgument("cell size must be at least 1 px".into()));
    }
    fs::create_dir_all(&a.out)?;
    for id in 0..=255u8 {
        tag_image(id, a.cell_px, a.quiet).save_png(a.out.join(format!("tag_{id:03}.png")))?;
    }
    write_dump(&cfg, &a.out, true)?;
    info!("wrote 256 tags to {}", a.out.display());
    Ok(())
}
