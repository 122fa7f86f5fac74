//! Command-line front-end. Exit codes: 0 success, 1 configuration error,
//! 2 I/O or file-format error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use metric_vo::eval;
use metric_vo::mc;
use metric_vo::obs_io;
use metric_vo::pipeline::{self, AblationMode, Input};
use metric_vo::sim;
use metric_vo::{DisparityEstimate, Error, Result, RunConfig, SceneConfig, StereoCamera, Trajectory};

#[derive(Parser)]
#[command(name = "metric-vo", version, about = "Metric-scale stereo VO back-end")]
struct Cli {
    /// Override the seed of the config (scene and random selection).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic observation directory.
    Simulate {
        scene: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run odometry as configured.
    Run { config: PathBuf },
    /// Relative trajectory metrics of an estimate against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        scale_align: bool,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write per-frame errors.
        #[arg(long)]
        per_frame: Option<PathBuf>,
    },
    /// Run several estimation modes on the same input.
    Ablate {
        config: PathBuf,
        /// Comma-separated `covariance[/keypoints]` modes.
        #[arg(long, value_delimiter = ',', default_value = "full,diagonal,identity,scale_agnostic")]
        modes: Vec<String>,
        /// Output CSV (default: `ablation.csv` in the run's output directory).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo check of the closed-form uncertainty models.
    McVerify {
        #[arg(long, value_enum)]
        which: Which,
        /// Relative disparity errors for the depth check.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.25")]
        gamma: Vec<f64>,
        /// Mean disparity in pixels for the depth check.
        #[arg(long, default_value_t = 80.0)]
        disparity: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// Camera intrinsics (TOML); defaults to a 640x480 camera.
        #[arg(long)]
        camera: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Depth,
    Projection,
}

fn default_camera() -> StereoCamera {
    StereoCamera::new(320.0, 320.0, 320.0, 240.0, 0.25, 640, 480).expect("valid default camera")
}

fn simulate(scene: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = SceneConfig::load(scene)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let frames = sim::generate_sequence(&cfg)?;
    obs_io::write_observations(out, &frames)?;
    pipeline::write_camera(&out.join(pipeline::CAMERA_FILE), &cfg.camera)?;
    println!("wrote {} frames to {}", frames.len(), out.display());
    Ok(())
}

fn load_run_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
        match &mut cfg.input {
            Input::Simulate(scene) => scene.seed = s,
            Input::Scene(file) => {
                let mut scene = SceneConfig::load(file)?;
                scene.seed = s;
                cfg.input = Input::Simulate(Box::new(scene));
            }
            Input::Ingest(_) => {}
        }
    }
    Ok(cfg)
}

fn run(config: &Path, seed: Option<u64>) -> Result<()> {
    let cfg = load_run_config(config, seed)?;
    let out = pipeline::run(&cfg)?;
    let fallbacks = out.diagnostics.iter().filter(|d| d.fell_back()).count();
    println!(
        "estimated {} poses into {} ({fallbacks} fallback frames)",
        out.estimate.len(),
        cfg.output_dir.display()
    );
    if let Some(m) = out.metrics {
        println!("t_rel {:.6e} m/frame  r_rel {:.6e} deg/frame", m.t_rel, m.r_rel);
    }
    Ok(())
}

fn evaluate(gt: &Path, est: &Path, align: bool, out: &Path, per_frame: Option<&Path>) -> Result<()> {
    let gt = Trajectory::read_tum(gt)?;
    let est = Trajectory::read_tum(est)?;
    let (metrics, errors) = eval::evaluate(&gt, &est, align)?;
    eval::write_metrics_csv(out, &metrics)?;
    if let Some(p) = per_frame {
        eval::write_per_frame_csv(p, &errors)?;
    }
    println!("t_rel {:.6e} m/frame  r_rel {:.6e} deg/frame", metrics.t_rel, metrics.r_rel);
    if let Some(s) = metrics.scale {
        println!("scale {s:.6}");
    }
    Ok(())
}

fn ablate(config: &Path, modes: &[String], out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let cfg = load_run_config(config, seed)?;
    let modes = modes.iter().map(|m| m.parse()).collect::<Result<Vec<AblationMode>>>()?;
    let rows = pipeline::ablate(&cfg, &modes, out)?;
    for r in rows {
        println!(
            "{:<24} t_rel {:.6e}  r_rel {:.6e}  fallbacks {}",
            r.mode.label(),
            r.t_rel,
            r.r_rel,
            r.fallback_frames
        );
    }
    Ok(())
}

fn mc_verify(which: Which, gammas: &[f64], disparity: f64, samples: usize, camera: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let cam = match camera {
        Some(p) => pipeline::load_camera(p)?,
        None => default_camera(),
    };
    match which {
        Which::Depth => {
            let mut rows = Vec::new();
            for &gamma in gammas {
                if gamma.is_nan() || gamma < 0.0 {
                    return Err(Error::Config {
                        field: "gamma".into(),
                        message: format!("must be non-negative, got {gamma}"),
                    });
                }
                let disp = DisparityEstimate { mu: disparity, gamma };
                let report = mc::mc_depth_distribution(&cam, &disp, samples, seed)?;
                println!("gamma {gamma}: {}", report.summary());
                rows.push((disp, report));
            }
            mc::write_depth_csv(out, &rows)
        }
        Which::Projection => {
            let mut rows = Vec::new();
            for (i, obs) in mc::standard_observation_grid(&cam).into_iter().enumerate() {
                let report = mc::mc_projection_covariance(&cam, &obs, samples, seed.wrapping_add(i as u64))?;
                println!("obs {i} (u={}, v={}, d={}): {}", obs.u, obs.v, obs.depth, report.summary());
                rows.push((obs, report));
            }
            mc::write_projection_csv(out, &rows)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scene, output } => simulate(&scene, &output, cli.seed),
        Command::Run { config } => run(&config, cli.seed),
        Command::Eval {
            gt,
            est,
            scale_align,
            output,
            per_frame,
        } => evaluate(&gt, &est, scale_align, &output, per_frame.as_deref()),
        Command::Ablate { config, modes, output } => ablate(&config, &modes, output.as_deref(), cli.seed),
        Command::McVerify {
            which,
            gamma,
            disparity,
            samples,
            camera,
            output,
        } => mc_verify(which, &gamma, disparity, samples, camera.as_deref(), &output, cli.seed.unwrap_or(0)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors count as configuration errors
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
