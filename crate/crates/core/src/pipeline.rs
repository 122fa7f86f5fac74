//! Frame-to-frame odometry over a sequence of observations.
//!
//! For every pair `(t-1, t)` keypoints are selected on `t-1`, followed into
//! `t` along the forward flow, backprojected with their covariances, and the
//! pose of `t` is solved against the landmarks of `t-1` placed in the world by
//! the previous estimate. The first pose is anchored to ground truth.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, Metrics};
use crate::geometry::{transform_landmark, PoseSE3, StereoCamera};
use crate::obs_io;
use crate::observation::{interpolate_depth, FrameObservation};
use crate::optimizer::{solve_pose, CovarianceMode, FramePairProblem, LMConfig, MatchedPair};
use crate::selector::{select, select_random, KeypointCandidate, SelectorConfig};
use crate::sim::{generate_sequence, SceneConfig};
use crate::trajectory::Trajectory;
use crate::uncertainty::{correct_depth_uncertainty, project_covariance, DepthPatch, PixelObservation, DEFAULT_PATCH_SIZE};

pub const POSES_EST_FILE: &str = "poses_est.txt";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
/// Camera intrinsics stored next to an observation directory.
pub const CAMERA_FILE: &str = "camera.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointMode {
    #[default]
    Uncertainty,
    Random,
}

impl KeypointMode {
    pub fn name(&self) -> &'static str {
        match self {
            KeypointMode::Uncertainty => "uncertainty",
            KeypointMode::Random => "random",
        }
    }
}

impl std::str::FromStr for KeypointMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uncertainty" => Ok(KeypointMode::Uncertainty),
            "random" => Ok(KeypointMode::Random),
            _ => Err(Error::config("keypoint_mode", format!("unknown mode `{s}`"))),
        }
    }
}

/// Where the frames come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Input {
    /// Inline scene description.
    Simulate(Box<SceneConfig>),
    /// Path to a scene description file.
    Scene(PathBuf),
    /// Observation directory in the on-disk layout of [`crate::obs_io`].
    Ingest(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: Input,
    /// Intrinsics for ingested observations. Defaults to `camera.toml` in
    /// the observation directory.
    #[serde(default)]
    pub camera: Option<StereoCamera>,
    #[serde(default)]
    pub selector: SelectorConfig,
    #[serde(default)]
    pub lm: LMConfig,
    #[serde(default)]
    pub covariance_mode: CovarianceMode,
    #[serde(default)]
    pub keypoint_mode: KeypointMode,
    pub output_dir: PathBuf,
    /// Seeds random keypoint selection.
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.selector.validate("selector")?;
        self.lm.validate("lm")?;
        if let Some(cam) = &self.camera {
            cam.validate("camera")?;
        }
        if let Input::Simulate(scene) = &self.input {
            scene.validate().map_err(|e| match e {
                Error::Config { field, message } => Error::config(format!("input.simulate.{field}"), message),
                other => other,
            })?;
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir", "must not be empty"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: origin.into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::from_toml_str(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.input {
            Input::Scene(p) | Input::Ingest(p) => resolve(p),
            Input::Simulate(_) => {}
        }
        resolve(&mut cfg.output_dir);
        Ok(cfg)
    }
}

/// Frames plus the camera that produced them.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub camera: StereoCamera,
    pub frames: Vec<FrameObservation>,
}

impl Sequence {
    pub fn ground_truth(&self) -> Result<Trajectory> {
        Trajectory::new(self.frames.iter().map(|f| (f.timestamp, f.gt_pose)).collect())
    }
}

/// Simulates or ingests the configured input.
pub fn load_sequence(cfg: &RunConfig) -> Result<Sequence> {
    match &cfg.input {
        Input::Simulate(scene) => Ok(Sequence {
            camera: scene.camera,
            frames: generate_sequence(scene)?,
        }),
        Input::Scene(path) => {
            let scene = SceneConfig::load(path)?;
            Ok(Sequence {
                camera: scene.camera,
                frames: generate_sequence(&scene)?,
            })
        }
        Input::Ingest(dir) => {
            let camera = match cfg.camera {
                Some(c) => c,
                None => load_camera(&dir.join(CAMERA_FILE))?,
            };
            let frames = obs_io::ingest_observations(dir)?;
            if let Some(f) = frames.first() {
                if (f.width(), f.height()) != (camera.width as usize, camera.height as usize) {
                    return Err(Error::config(
                        "camera",
                        format!(
                            "camera is {}x{} but observations are {}x{}",
                            camera.width,
                            camera.height,
                            f.width(),
                            f.height()
                        ),
                    ));
                }
            }
            Ok(Sequence { camera, frames })
        }
    }
}

pub fn load_camera(path: &Path) -> Result<StereoCamera> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cam: StereoCamera = toml::from_str(&text).map_err(|e| Error::ConfigParse {
        path: path.into(),
        message: e.to_string(),
    })?;
    cam.validate("camera")?;
    Ok(cam)
}

pub fn write_camera(path: &Path, cam: &StereoCamera) -> Result<()> {
    let text = toml::to_string(cam).map_err(|e| Error::format(path, e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Estimation settings, separated from input and output so one loaded
/// sequence can be run under several modes.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub selector: SelectorConfig,
    pub lm: LMConfig,
    pub covariance_mode: CovarianceMode,
    pub keypoint_mode: KeypointMode,
    pub seed: u64,
}

impl From<&RunConfig> for Settings {
    fn from(cfg: &RunConfig) -> Self {
        Settings {
            selector: cfg.selector,
            lm: cfg.lm,
            covariance_mode: cfg.covariance_mode,
            keypoint_mode: cfg.keypoint_mode,
            seed: cfg.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDiagnostics {
    pub frame_index: usize,
    pub keypoints_used: usize,
    pub final_cost: f64,
    pub lm_iterations: usize,
    pub flags: Vec<String>,
}

impl FrameDiagnostics {
    pub fn fell_back(&self) -> bool {
        self.flags.iter().any(|f| f.starts_with("fallback"))
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub estimate: Trajectory,
    pub diagnostics: Vec<FrameDiagnostics>,
    /// Present when the input carries ground truth.
    pub metrics: Option<Metrics>,
}

/// Builds the matched pair for keypoint `k` of `prev`, or `None` if its match
/// leaves the image or lands on invalid depth.
fn match_keypoint(
    cam: &StereoCamera,
    prev: &FrameObservation,
    curr: &FrameObservation,
    prev_pose: &PoseSE3,
    k: &KeypointCandidate,
) -> Option<MatchedPair> {
    let (x, y) = (k.u as usize, k.v as usize);
    let prev_obs = PixelObservation::new(k.u as f64, k.v as f64, 0.0, 0.0, k.depth, prev.depth_var.get(x, y, 0)).ok()?;
    let prev_world = transform_landmark(prev_pose, &project_covariance(cam, &prev_obs).ok()?).ok()?;

    let u = k.u as f64 + prev.flow.get(x, y, 0);
    let v = k.v as f64 + prev.flow.get(x, y, 1);
    let (su2, sv2) = (prev.flow_var.get(x, y, 0), prev.flow_var.get(x, y, 1));
    if !cam.contains(u, v) {
        return None;
    }
    let depth = interpolate_depth(&curr.depth, u, v)?;
    let (w, h) = (curr.width(), curr.height());
    let patch = DepthPatch::from_map(&curr.depth.data, w, h, (u, v), DEFAULT_PATCH_SIZE).ok()?;
    let spread = correct_depth_uncertainty(&patch, su2, sv2).ok()?;
    // Spread of the depths the match may land on, plus the mean reported
    // depth noise under the same weights.
    let weights = patch.weights(su2, sv2).ok()?;
    let noise: f64 = weights
        .iter()
        .enumerate()
        .filter(|(_, wt)| **wt > 0.0)
        .map(|(i, wt)| {
            let px = (patch.origin.0 as usize) + i % patch.width;
            let py = (patch.origin.1 as usize) + i / patch.width;
            wt * curr.depth_var.get(px, py, 0)
        })
        .sum();
    let curr_obs = PixelObservation::new(u, v, su2, sv2, depth, spread.variance + noise).ok()?;
    let curr_camera = project_covariance(cam, &curr_obs).ok()?;
    Some(MatchedPair { prev_world, curr_camera })
}

/// Runs odometry over `seq`. Frames whose pose cannot be solved are
/// propagated with the constant-velocity model and flagged.
pub fn run_sequence(seq: &Sequence, settings: &Settings) -> Result<RunOutput> {
    let frames = &seq.frames;
    if frames.len() < 2 {
        return Err(Error::Empty("a run needs at least 2 frames"));
    }
    settings.selector.validate("selector")?;
    settings.lm.validate("lm")?;
    for f in frames {
        f.validate()?;
    }
    let cam = &seq.camera;
    let mut poses = vec![frames[0].gt_pose];
    let mut diagnostics = vec![FrameDiagnostics {
        frame_index: 0,
        keypoints_used: 0,
        final_cost: 0.0,
        lm_iterations: 0,
        flags: vec!["anchor".into()],
    }];

    for t in 1..frames.len() {
        let prev_pose = poses[t - 1];
        let init = if t >= 2 {
            prev_pose * (poses[t - 2].inverse() * prev_pose)
        } else {
            prev_pose
        };
        let keypoints = match settings.keypoint_mode {
            KeypointMode::Uncertainty => select(&frames[t - 1], cam, &settings.selector),
            KeypointMode::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
                rng.set_stream(t as u64);
                select_random(&frames[t - 1], cam, &settings.selector, &mut rng)
            }
        };
        let mut diag = FrameDiagnostics {
            frame_index: t,
            keypoints_used: 0,
            final_cost: f64::NAN,
            lm_iterations: 0,
            flags: Vec::new(),
        };
        let solved = keypoints.and_then(|kps| {
            let pairs: Vec<MatchedPair> = kps
                .par_iter()
                .filter_map(|k| match_keypoint(cam, &frames[t - 1], &frames[t], &prev_pose, k))
                .collect();
            diag.keypoints_used = pairs.len();
            solve_pose(&FramePairProblem::new(pairs, init, settings.covariance_mode), &settings.lm)
        });
        let pose = match solved {
            Ok(sol) => {
                diag.final_cost = sol.final_cost;
                diag.lm_iterations = sol.iterations;
                if !sol.converged {
                    diag.flags.push("not_converged".into());
                }
                if sol.regularized_pairs > 0 {
                    diag.flags.push(format!("regularized={}", sol.regularized_pairs));
                }
                sol.pose
            }
            Err(e) => {
                let reason = match e {
                    Error::InsufficientKeypoints { .. } => "insufficient_keypoints",
                    Error::DegenerateGeometry(_) => "degenerate_geometry",
                    _ => "solver_failed",
                };
                log::warn!("frame {t}: {e}; propagating with the motion model");
                diag.flags.push(format!("fallback:{reason}"));
                init
            }
        };
        poses.push(pose);
        diagnostics.push(diag);
    }

    let estimate = Trajectory::new(frames.iter().zip(&poses).map(|(f, p)| (f.timestamp, *p)).collect())?;
    let metrics = eval::evaluate(&seq.ground_truth()?, &estimate, false).ok().map(|(m, _)| m);
    Ok(RunOutput {
        estimate,
        diagnostics,
        metrics,
    })
}

pub fn write_diagnostics_csv(path: &Path, diagnostics: &[FrameDiagnostics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    w.write_record(["frame_index", "keypoints_used", "final_cost", "lm_iterations", "flags"])
        .map_err(|e| Error::format(path, e.to_string()))?;
    for d in diagnostics {
        w.write_record([
            d.frame_index.to_string(),
            d.keypoints_used.to_string(),
            d.final_cost.to_string(),
            d.lm_iterations.to_string(),
            d.flags.join("|"),
        ])
        .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads the input, runs, and writes the estimate, diagnostics and (with
/// ground truth) metrics into `cfg.output_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let seq = load_sequence(cfg)?;
    let out = run_sequence(&seq, &Settings::from(cfg))?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    out.estimate.write_tum(&dir.join(POSES_EST_FILE))?;
    write_diagnostics_csv(&dir.join(DIAGNOSTICS_FILE), &out.diagnostics)?;
    if let Some(m) = &out.metrics {
        eval::write_metrics_csv(&dir.join(METRICS_FILE), m)?;
    }
    Ok(out)
}

/// One ablation variant: a covariance mode and a keypoint mode. Parsed from
/// `cov` or `cov/keypoints`, e.g. `identity/random`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationMode {
    pub covariance_mode: CovarianceMode,
    pub keypoint_mode: KeypointMode,
}

impl AblationMode {
    pub fn label(&self) -> String {
        match self.keypoint_mode {
            KeypointMode::Uncertainty => self.covariance_mode.name().to_string(),
            k => format!("{}/{}", self.covariance_mode.name(), k.name()),
        }
    }
}

impl std::str::FromStr for AblationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (cov, kp) = s.split_once('/').unwrap_or((s, "uncertainty"));
        Ok(AblationMode {
            covariance_mode: cov
                .trim()
                .parse()
                .map_err(|_| Error::config("modes", format!("unknown covariance mode `{cov}`")))?,
            keypoint_mode: kp
                .trim()
                .parse()
                .map_err(|_| Error::config("modes", format!("unknown keypoint mode `{kp}`")))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub mode: AblationMode,
    pub t_rel: f64,
    pub r_rel: f64,
    pub fallback_frames: usize,
}

/// Runs every mode on the same loaded sequence.
pub fn ablate_sequence(seq: &Sequence, base: &Settings, modes: &[AblationMode]) -> Result<Vec<AblationRow>> {
    if modes.len() < 2 {
        return Err(Error::config("modes", "at least 2 modes are required"));
    }
    modes
        .par_iter()
        .map(|mode| {
            let settings = Settings {
                covariance_mode: mode.covariance_mode,
                keypoint_mode: mode.keypoint_mode,
                ..base.clone()
            };
            let out = run_sequence(seq, &settings)?;
            let m = out.metrics.ok_or(Error::Empty("ablation needs ground-truth poses"))?;
            Ok(AblationRow {
                mode: *mode,
                t_rel: m.t_rel,
                r_rel: m.r_rel,
                fallback_frames: out.diagnostics.iter().filter(|d| d.fell_back()).count(),
            })
        })
        .collect()
}

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    w.write_record(["mode", "covariance_mode", "keypoint_mode", "t_rel", "r_rel", "fallback_frames"])
        .map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.write_record([
            r.mode.label(),
            r.mode.covariance_mode.name().to_string(),
            r.mode.keypoint_mode.name().to_string(),
            r.t_rel.to_string(),
            r.r_rel.to_string(),
            r.fallback_frames.to_string(),
        ])
        .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads the input once, runs each mode, and writes `ablation.csv` to `out`
/// (default: the config's output directory).
pub fn ablate(cfg: &RunConfig, modes: &[AblationMode], out: Option<&Path>) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    let seq = load_sequence(cfg)?;
    let rows = ablate_sequence(&seq, &Settings::from(cfg), modes)?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => {
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
            cfg.output_dir.join(ABLATION_FILE)
        }
    };
    write_ablation_csv(&path, &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Motion, NoiseModel};

    pub(crate) fn scene(noise: NoiseModel, frames: usize) -> SceneConfig {
        SceneConfig {
            seed: 11,
            num_frames: frames,
            camera: StereoCamera::new(80.0, 80.0, 60.0, 45.0, 0.3, 120, 90).unwrap(),
            motion: Motion::ConstantVelocity {
                twist: [0.05, 0.0, 0.15, 0.0, 0.02, 0.0],
            },
            landmark_count: 60,
            depth_range: [0.5, 20.0],
            noise,
            anomaly_regions: Vec::new(),
            frame_interval: 0.1,
        }
    }

    fn settings() -> Settings {
        Settings {
            selector: SelectorConfig {
                depth_range: [0.5, 20.0],
                ..SelectorConfig::default()
            },
            lm: LMConfig::default(),
            covariance_mode: CovarianceMode::Full,
            keypoint_mode: KeypointMode::Uncertainty,
            seed: 0,
        }
    }

    fn noiseless() -> NoiseModel {
        NoiseModel {
            sigma_flow: 0.0,
            gamma_disp: 0.0,
            heteroscedastic: false,
            lie_in_anomalies: false,
        }
    }

    #[test]
    fn noiseless_run_is_exact() {
        let cfg = scene(noiseless(), 6);
        let seq = Sequence {
            camera: cfg.camera,
            frames: generate_sequence(&cfg).unwrap(),
        };
        let out = run_sequence(&seq, &settings()).unwrap();
        let m = out.metrics.unwrap();
        assert!(m.t_rel < 1e-6, "t_rel {}", m.t_rel);
        assert!(m.r_rel < 1e-6, "r_rel {}", m.r_rel);
        assert!(out.diagnostics.iter().all(|d| !d.fell_back()));
    }

    #[test]
    fn blank_frame_falls_back() {
        let cfg = scene(noiseless(), 4);
        let mut frames = generate_sequence(&cfg).unwrap();
        frames[1].mask.iter_mut().for_each(|m| *m = false);
        let seq = Sequence {
            camera: cfg.camera,
            frames,
        };
        let out = run_sequence(&seq, &settings()).unwrap();
        assert_eq!(out.diagnostics[2].flags, vec!["fallback:insufficient_keypoints".to_string()]);
        assert_eq!(out.estimate.len(), 4);
    }

    #[test]
    fn ablation_mode_parsing() {
        let m: AblationMode = "identity/random".parse().unwrap();
        assert_eq!(m.covariance_mode, CovarianceMode::Identity);
        assert_eq!(m.keypoint_mode, KeypointMode::Random);
        assert_eq!(m.label(), "identity/random");
        assert_eq!("full".parse::<AblationMode>().unwrap().label(), "full");
        assert!("bogus".parse::<AblationMode>().is_err());
    }

    #[test]
    fn run_config_toml() {
        let text = r#"
            output_dir = "out"
            covariance_mode = "diagonal"
            [input]
            ingest = "obs"
        "#;
        let cfg = RunConfig::from_toml_str(text, Path::new("run.toml")).unwrap();
        assert_eq!(cfg.input, Input::Ingest("obs".into()));
        assert_eq!(cfg.covariance_mode, CovarianceMode::Diagonal);
        let bad = "output_dir = \"o\"\n[input]\ningest = \"a\"\n[selector]\nunc_multiplier = -1.0\n";
        let err = RunConfig::from_toml_str(bad, Path::new("run.toml")).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("selector.unc_multiplier"));
    }
}
