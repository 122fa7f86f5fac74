//! Synthetic stereo sequences with ground truth.
//!
//! The world is an axis-aligned room enclosing the camera trajectory plus a
//! cloud of randomly placed boxes, so depth maps contain both smooth planes
//! and sharp discontinuities. Depth is ray-cast at pixel centers (integer
//! pixel coordinates), flow is computed analytically from the ground-truth
//! poses, and noise is drawn from a declared [`NoiseModel`] whose variances
//! are emitted alongside the maps.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PoseSE3, StereoCamera, Vec3, Vec6};
use crate::observation::{interpolate_depth, FrameObservation, ImageMap};

/// Scripted key pose: position in meters and rotation vector in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub position: [f64; 3],
    #[serde(default)]
    pub rotation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    Static,
    /// Constant body-frame twist `[vx, vy, vz, wx, wy, wz]` applied per frame.
    ConstantVelocity {
        twist: [f64; 6],
    },
    /// Circle of `radius` in the x-z plane around the origin, looking at the
    /// center, advancing `step_deg` per frame.
    Orbit {
        radius: f64,
        step_deg: f64,
    },
    /// Piecewise-geodesic interpolation through the waypoints, spread evenly
    /// over the sequence.
    Waypoints {
        waypoints: Vec<Waypoint>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Per-axis standard deviation of the flow noise, pixels.
    pub sigma_flow: f64,
    /// Relative disparity error.
    pub gamma_disp: f64,
    /// Modulate both noise levels with a smooth spatial field.
    #[serde(default)]
    pub heteroscedastic: bool,
    /// If set, anomaly regions get stronger noise but the emitted variances
    /// are not inflated (an overconfident frontend).
    #[serde(default)]
    pub lie_in_anomalies: bool,
}

/// A pixel rectangle `[x0, y0, x1, y1)` whose noise is multiplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyRegion {
    pub rect: [u32; 4],
    pub multiplier: f64,
}

impl AnomalyRegion {
    fn contains(&self, x: usize, y: usize) -> bool {
        let [x0, y0, x1, y1] = self.rect.map(|v| v as usize);
        x >= x0 && x < x1 && y >= y0 && y < y1
    }
}

fn default_frame_interval() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub num_frames: usize,
    pub camera: StereoCamera,
    pub motion: Motion,
    pub landmark_count: usize,
    pub depth_range: [f64; 2],
    pub noise: NoiseModel,
    #[serde(default)]
    pub anomaly_regions: Vec<AnomalyRegion>,
    /// Seconds between frames.
    #[serde(default = "default_frame_interval")]
    pub frame_interval: f64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames < 2 {
            return Err(Error::config("num_frames", "must be at least 2"));
        }
        if self.landmark_count < 50 {
            return Err(Error::config("landmark_count", "must be at least 50"));
        }
        self.camera.validate("camera")?;
        let [lo, hi] = self.depth_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::config("depth_range", "must satisfy 0 < min < max"));
        }
        if !(self.noise.sigma_flow >= 0.0 && self.noise.sigma_flow.is_finite()) {
            return Err(Error::config("noise.sigma_flow", "must be non-negative"));
        }
        if !(self.noise.gamma_disp >= 0.0 && self.noise.gamma_disp < 0.3) {
            return Err(Error::config("noise.gamma_disp", "must lie in [0, 0.3)"));
        }
        if !(self.frame_interval > 0.0) {
            return Err(Error::config("frame_interval", "must be positive"));
        }
        for (i, region) in self.anomaly_regions.iter().enumerate() {
            let [x0, y0, x1, y1] = region.rect;
            if x0 >= x1 || y0 >= y1 || x1 > self.camera.width || y1 > self.camera.height {
                return Err(Error::config(
                    format!("anomaly_regions[{i}].rect"),
                    "must be a non-empty rectangle inside the image",
                ));
            }
            if !(region.multiplier > 0.0) {
                return Err(Error::config(format!("anomaly_regions[{i}].multiplier"), "must be positive"));
            }
        }
        match &self.motion {
            Motion::Orbit { radius, step_deg } => {
                if !(*radius > 0.0) {
                    return Err(Error::config("motion.radius", "must be positive"));
                }
                if !step_deg.is_finite() {
                    return Err(Error::config("motion.step_deg", "must be finite"));
                }
            }
            Motion::Waypoints { waypoints } if waypoints.is_empty() => {
                return Err(Error::config("motion.waypoints", "must not be empty"));
            }
            _ => {}
        }
        Ok(())
    }

    /// The same scene with every length multiplied by `s`. Pixel quantities
    /// and the random draws are unchanged.
    pub fn scaled(&self, s: f64) -> SceneConfig {
        let mut out = self.clone();
        out.camera.baseline *= s;
        out.depth_range = self.depth_range.map(|d| d * s);
        out.motion = match &self.motion {
            Motion::Static => Motion::Static,
            Motion::ConstantVelocity { twist } => {
                let mut t = *twist;
                t[..3].iter_mut().for_each(|v| *v *= s);
                Motion::ConstantVelocity { twist: t }
            }
            Motion::Orbit { radius, step_deg } => Motion::Orbit {
                radius: radius * s,
                step_deg: *step_deg,
            },
            Motion::Waypoints { waypoints } => Motion::Waypoints {
                waypoints: waypoints
                    .iter()
                    .map(|w| Waypoint {
                        position: w.position.map(|p| p * s),
                        rotation: w.rotation,
                    })
                    .collect(),
            },
        };
        out
    }

    pub fn from_toml_str(text: &str) -> Result<SceneConfig> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<SceneConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: SceneConfig = toml::from_str(&text).map_err(|e| Error::ConfigParse {
            path: path.into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Camera-to-world poses for every frame.
pub fn trajectory(cfg: &SceneConfig) -> Vec<PoseSE3> {
    let n = cfg.num_frames;
    match &cfg.motion {
        Motion::Static => vec![PoseSE3::identity(); n],
        Motion::ConstantVelocity { twist } => {
            let step = PoseSE3::exp(&Vec6::from_column_slice(twist));
            let mut poses = Vec::with_capacity(n);
            let mut pose = PoseSE3::identity();
            for _ in 0..n {
                poses.push(pose);
                pose = pose * step;
            }
            poses
        }
        Motion::Orbit { radius, step_deg } => (0..n)
            .map(|i| {
                let theta = (i as f64 * step_deg).to_radians();
                // camera z axis points at the origin
                let pos = Vec3::new(radius * theta.sin(), 0.0, -radius * theta.cos());
                PoseSE3::from_parts(Vec3::new(0.0, -theta, 0.0), pos)
            })
            .collect(),
        Motion::Waypoints { waypoints } => {
            let keys: Vec<PoseSE3> = waypoints
                .iter()
                .map(|w| PoseSE3::from_parts(Vec3::from(w.rotation), Vec3::from(w.position)))
                .collect();
            if keys.len() == 1 {
                return vec![keys[0]; n];
            }
            (0..n)
                .map(|i| {
                    let s = i as f64 / (n - 1) as f64 * (keys.len() - 1) as f64;
                    let k = (s.floor() as usize).min(keys.len() - 2);
                    let frac = s - k as f64;
                    let rel = keys[k].inverse() * keys[k + 1];
                    let xi = rel.log().unwrap_or_else(|_| Vec6::zeros());
                    keys[k] * PoseSE3::exp(&(xi * frac))
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn corners(&self) -> [Vec3; 8] {
        let (l, h) = (self.lo, self.hi);
        [
            Vec3::new(l.x, l.y, l.z),
            Vec3::new(h.x, l.y, l.z),
            Vec3::new(l.x, h.y, l.z),
            Vec3::new(h.x, h.y, l.z),
            Vec3::new(l.x, l.y, h.z),
            Vec3::new(h.x, l.y, h.z),
            Vec3::new(l.x, h.y, h.z),
            Vec3::new(h.x, h.y, h.z),
        ]
    }

    /// Entry distance and entered face (axis * 2 + side) of a ray starting
    /// outside the box.
    fn entry(&self, o: &Vec3, d: &Vec3) -> Option<(f64, u32)> {
        let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut face = 0;
        for a in 0..3 {
            if d[a] == 0.0 {
                if o[a] < self.lo[a] || o[a] > self.hi[a] {
                    return None;
                }
                continue;
            }
            let t1 = (self.lo[a] - o[a]) / d[a];
            let t2 = (self.hi[a] - o[a]) / d[a];
            let (near, far, side) = if t1 < t2 { (t1, t2, 0) } else { (t2, t1, 1) };
            if near > t_near {
                t_near = near;
                face = a as u32 * 2 + side;
            }
            t_far = t_far.min(far);
        }
        (t_near <= t_far && t_near > 0.0).then_some((t_near, face))
    }

    /// Exit distance and face of a ray starting inside the box.
    fn exit(&self, o: &Vec3, d: &Vec3) -> (f64, u32) {
        let mut best = (f64::INFINITY, 0);
        for a in 0..3 {
            let (t, side) = if d[a] > 0.0 {
                ((self.hi[a] - o[a]) / d[a], 1)
            } else if d[a] < 0.0 {
                ((self.lo[a] - o[a]) / d[a], 0)
            } else {
                continue;
            };
            if t < best.0 {
                best = (t, a as u32 * 2 + side);
            }
        }
        best
    }
}

/// Static world geometry.
#[derive(Debug, Clone)]
pub struct World {
    room: Aabb,
    boxes: Vec<Aabb>,
}

impl World {
    pub fn generate(cfg: &SceneConfig, poses: &[PoseSE3], rng: &mut ChaCha8Rng) -> World {
        let [dmin, dmax] = cfg.depth_range;
        let cam = &cfg.camera;
        let mut lo = poses[0].translation;
        let mut hi = lo;
        for p in poses {
            lo = lo.inf(&p.translation);
            hi = hi.sup(&p.translation);
        }
        let margin = Vec3::repeat(0.5 * dmax);
        let room = Aabb {
            lo: lo - margin,
            hi: hi + margin,
        };

        let near = 1.5 * dmin;
        let far = (0.45 * dmax).max(near * 1.01);
        let mut boxes = Vec::with_capacity(cfg.landmark_count);
        let mut attempts = 0;
        while boxes.len() < cfg.landmark_count && attempts < cfg.landmark_count * 100 {
            attempts += 1;
            let frame = rng.random_range(0..poses.len());
            let u = rng.random_range(0.0..cam.width as f64);
            let v = rng.random_range(0.0..cam.height as f64);
            let z = rng.random_range(near..far);
            let half = z * rng.random_range(0.03..0.1);
            let Ok(p) = cam.backproject(u, v, z + half) else {
                continue;
            };
            let center = poses[frame].transform_point(&p);
            let clearance = dmin + half * 3f64.sqrt();
            if poses.iter().any(|q| (q.translation - center).norm() < clearance) {
                continue;
            }
            boxes.push(Aabb {
                lo: center - Vec3::repeat(half),
                hi: center + Vec3::repeat(half),
            });
        }
        World { room, boxes }
    }

    /// Depth and surface id per pixel, row-major.
    pub fn render(&self, cam: &StereoCamera, pose: &PoseSE3) -> (Vec<f64>, Vec<u32>) {
        let (w, h) = (cam.width as usize, cam.height as usize);
        let o = pose.translation;
        let ray = |x: usize, y: usize| pose.rotation * Vec3::new((x as f64 - cam.cx) / cam.fx, (y as f64 - cam.cy) / cam.fy, 1.0);
        let mut depth = vec![0.0; w * h];
        let mut id = vec![0u32; w * h];
        for y in 0..h {
            for x in 0..w {
                let (t, face) = self.room.exit(&o, &ray(x, y));
                depth[y * w + x] = t;
                id[y * w + x] = face;
            }
        }
        let inv = pose.inverse();
        for (k, b) in self.boxes.iter().enumerate() {
            let (mut x0, mut y0, mut x1, mut y1) = (0usize, 0usize, w, h);
            let corners: Vec<Vec3> = b.corners().iter().map(|c| inv.transform_point(c)).collect();
            if corners.iter().all(|c| c.z > 1e-9) {
                let us = corners.iter().map(|c| cam.fx * c.x / c.z + cam.cx);
                let vs = corners.iter().map(|c| cam.fy * c.y / c.z + cam.cy);
                let (umin, umax) = us.fold((f64::INFINITY, f64::NEG_INFINITY), |a, u| (a.0.min(u), a.1.max(u)));
                let (vmin, vmax) = vs.fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(v), a.1.max(v)));
                if umax < 0.0 || vmax < 0.0 || umin >= w as f64 || vmin >= h as f64 {
                    continue;
                }
                x0 = umin.floor().max(0.0) as usize;
                y0 = vmin.floor().max(0.0) as usize;
                x1 = ((umax.ceil() as usize) + 1).min(w);
                y1 = ((vmax.ceil() as usize) + 1).min(h);
            } else if corners.iter().all(|c| c.z <= 0.0) {
                continue;
            }
            for y in y0..y1 {
                for x in x0..x1 {
                    if let Some((t, face)) = b.entry(&o, &ray(x, y)) {
                        let i = y * w + x;
                        if t < depth[i] {
                            depth[i] = t;
                            id[i] = 6 + 6 * k as u32 + face;
                        }
                    }
                }
            }
        }
        (depth, id)
    }
}

/// A generated sequence plus the noiseless maps it was derived from.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub frames: Vec<FrameObservation>,
    pub true_flow: Vec<ImageMap>,
    pub true_depth: Vec<ImageMap>,
}

struct NoiseField {
    freq: [f64; 2],
    phase: [f64; 2],
}

impl NoiseField {
    fn draw(rng: &mut ChaCha8Rng) -> NoiseField {
        NoiseField {
            freq: [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)],
            phase: [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)],
        }
    }

    fn at(&self, x: f64, y: f64, w: f64, h: f64) -> f64 {
        let s = (TAU * self.freq[0] * x / w + self.phase[0]).sin() * (TAU * self.freq[1] * y / h + self.phase[1]).sin();
        (0.5 * s).exp()
    }
}

/// Forward flow and validity for frame `t` given the rendering of `t + 1`.
fn true_flow(
    cam: &StereoCamera,
    pose_t: &PoseSE3,
    pose_next: &PoseSE3,
    depth_t: &[f64],
    id_t: &[u32],
    depth_next: &ImageMap,
    id_next: &[u32],
) -> (ImageMap, Vec<bool>) {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let rel = pose_next.inverse() * *pose_t;
    let mut flow = ImageMap::filled(w, h, 2, 0.0);
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let Ok(p) = cam.backproject(x as f64, y as f64, depth_t[i]) else {
                continue;
            };
            let Ok((u, v, z)) = cam.project(&rel.transform_point(&p)) else {
                continue;
            };
            let Some(d_interp) = interpolate_depth(depth_next, u, v) else {
                continue;
            };
            let (x0, y0) = (u.floor() as usize, v.floor() as usize);
            let same_surface = [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)]
                .iter()
                .filter(|(a, b)| *a < w && *b < h)
                .all(|(a, b)| id_next[b * w + a] == id_t[i]);
            if !same_surface || (d_interp - z).abs() > 1e-9 * z {
                continue;
            }
            flow.set(x, y, 0, u - x as f64);
            flow.set(x, y, 1, v - y as f64);
            valid[i] = true;
        }
    }
    (flow, valid)
}

/// Generates the sequence together with its noiseless ground truth.
pub fn generate_with_truth(cfg: &SceneConfig) -> Result<SyntheticSequence> {
    cfg.validate()?;
    let cam = cfg.camera;
    let (w, h) = (cam.width as usize, cam.height as usize);
    let poses = trajectory(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let world = World::generate(cfg, &poses, &mut rng);
    let field = NoiseField::draw(&mut rng);

    let renders: Vec<(Vec<f64>, Vec<u32>)> = poses.par_iter().map(|p| world.render(&cam, p)).collect();
    let true_depth: Vec<ImageMap> = renders
        .iter()
        .map(|(d, _)| ImageMap::new(w, h, 1, d.clone()).expect("render size"))
        .collect();
    let n = poses.len();
    let flows: Vec<(ImageMap, Vec<bool>)> = (0..n)
        .into_par_iter()
        .map(|t| {
            if t + 1 < n {
                true_flow(
                    &cam,
                    &poses[t],
                    &poses[t + 1],
                    &renders[t].0,
                    &renders[t].1,
                    &true_depth[t + 1],
                    &renders[t + 1].1,
                )
            } else {
                let valid = renders[t].0.iter().map(|d| d.is_finite() && *d > 0.0).collect();
                (ImageMap::filled(w, h, 2, 0.0), valid)
            }
        })
        .collect();

    let noise = &cfg.noise;
    let bf = cam.baseline * cam.fx;
    let frames: Vec<FrameObservation> = (0..n)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64 + 1);
            let (flow_true, valid) = &flows[t];
            let has_flow = t + 1 < n;
            let mut flow = flow_true.clone();
            let mut flow_var = ImageMap::filled(w, h, 2, 0.0);
            let mut depth = ImageMap::filled(w, h, 1, 0.0);
            let mut depth_var = ImageMap::filled(w, h, 1, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let modulation = if noise.heteroscedastic {
                        field.at(x as f64, y as f64, w as f64, h as f64)
                    } else {
                        1.0
                    };
                    let anomaly = cfg
                        .anomaly_regions
                        .iter()
                        .filter(|r| r.contains(x, y))
                        .map(|r| r.multiplier)
                        .fold(1.0, f64::max);
                    let reported = if noise.lie_in_anomalies { 1.0 } else { anomaly };
                    let nu: f64 = rng.sample(StandardNormal);
                    let nv: f64 = rng.sample(StandardNormal);
                    if has_flow {
                        let sigma = noise.sigma_flow * modulation * anomaly;
                        flow.set(x, y, 0, flow_true.get(x, y, 0) + sigma * nu);
                        flow.set(x, y, 1, flow_true.get(x, y, 1) + sigma * nv);
                        let var = (noise.sigma_flow * modulation * reported).powi(2);
                        flow_var.set(x, y, 0, var);
                        flow_var.set(x, y, 1, var);
                    }

                    let d_true = true_depth[t].get(x, y, 0);
                    let gamma = noise.gamma_disp * modulation * anomaly;
                    let disparity = bf / d_true;
                    let mut nd: f64 = rng.sample(StandardNormal);
                    while gamma * nd <= -0.95 {
                        nd = rng.sample(StandardNormal);
                    }
                    depth.set(x, y, 0, bf / (disparity + gamma * disparity * nd));
                    depth_var.set(x, y, 0, (noise.gamma_disp * modulation * reported * d_true).powi(2));
                }
            }
            FrameObservation {
                flow,
                flow_var,
                depth,
                depth_var,
                mask: valid.clone(),
                gt_pose: poses[t],
                timestamp: t as f64 * cfg.frame_interval,
            }
        })
        .collect();

    Ok(SyntheticSequence {
        frames,
        true_flow: flows.into_iter().map(|(f, _)| f).collect(),
        true_depth,
    })
}

/// Deterministic sequence generation from a scene config.
pub fn generate_sequence(cfg: &SceneConfig) -> Result<Vec<FrameObservation>> {
    Ok(generate_with_truth(cfg)?.frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_scene() -> SceneConfig {
        SceneConfig {
            seed: 5,
            num_frames: 3,
            camera: StereoCamera::new(60.0, 60.0, 40.0, 30.0, 0.2, 80, 60).unwrap(),
            motion: Motion::ConstantVelocity {
                twist: [0.1, 0.0, 0.2, 0.0, 0.02, 0.0],
            },
            landmark_count: 50,
            depth_range: [0.5, 20.0],
            noise: NoiseModel {
                sigma_flow: 0.5,
                gamma_disp: 0.02,
                heteroscedastic: true,
                lie_in_anomalies: false,
            },
            anomaly_regions: vec![AnomalyRegion {
                rect: [10, 10, 30, 20],
                multiplier: 4.0,
            }],
            frame_interval: 0.1,
        }
    }

    #[test]
    fn validation_reports_field_path() {
        let mut cfg = small_scene();
        cfg.noise.gamma_disp = 0.3;
        assert!(cfg.validate().unwrap_err().to_string().contains("noise.gamma_disp"));
        let mut cfg = small_scene();
        cfg.num_frames = 1;
        assert!(cfg.validate().unwrap_err().to_string().contains("num_frames"));
        let mut cfg = small_scene();
        cfg.anomaly_regions[0].rect = [0, 0, 100, 5];
        assert!(cfg.validate().unwrap_err().to_string().contains("anomaly_regions[0].rect"));
    }

    #[test]
    fn constant_velocity_trajectory() {
        let cfg = small_scene();
        let poses = trajectory(&cfg);
        let step = poses[0].inverse() * poses[1];
        let step2 = poses[1].inverse() * poses[2];
        assert!((step.translation - step2.translation).amax() < 1e-12);
    }

    #[test]
    fn waypoint_trajectory_hits_keys() {
        let mut cfg = small_scene();
        cfg.num_frames = 5;
        cfg.motion = Motion::Waypoints {
            waypoints: vec![
                Waypoint {
                    position: [0.0, 0.0, 0.0],
                    rotation: [0.0, 0.0, 0.0],
                },
                Waypoint {
                    position: [1.0, 0.0, 2.0],
                    rotation: [0.0, 0.4, 0.0],
                },
                Waypoint {
                    position: [2.0, 1.0, 2.0],
                    rotation: [0.0, 0.8, 0.1],
                },
            ],
        };
        let poses = trajectory(&cfg);
        assert!((poses[2].translation - Vec3::new(1.0, 0.0, 2.0)).amax() < 1e-12);
        assert!((poses[4].translation - Vec3::new(2.0, 1.0, 2.0)).amax() < 1e-12);
    }

    #[test]
    fn orbit_looks_at_center() {
        let mut cfg = small_scene();
        cfg.motion = Motion::Orbit {
            radius: 4.0,
            step_deg: 10.0,
        };
        for pose in trajectory(&cfg) {
            let center_in_cam = pose.inverse().transform_point(&Vec3::zeros());
            assert!(center_in_cam.x.abs() < 1e-12 && center_in_cam.y.abs() < 1e-12);
            assert!((center_in_cam.z - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_flow_is_consistent_with_ground_truth() {
        let mut cfg = small_scene();
        cfg.noise.sigma_flow = 0.0;
        cfg.noise.gamma_disp = 0.0;
        let seq = generate_with_truth(&cfg).unwrap();
        let cam = cfg.camera;
        let f0 = &seq.frames[0];
        let f1 = &seq.frames[1];
        let rel = f1.gt_pose.inverse() * f0.gt_pose;
        let mut checked = 0;
        for y in 0..f0.height() {
            for x in 0..f0.width() {
                if !f0.is_valid(x, y) {
                    continue;
                }
                let p = cam.backproject(x as f64, y as f64, f0.depth.get(x, y, 0)).unwrap();
                let (u, v) = (x as f64 + f0.flow.get(x, y, 0), y as f64 + f0.flow.get(x, y, 1));
                let d = interpolate_depth(&f1.depth, u, v).unwrap();
                let q = cam.backproject(u, v, d).unwrap();
                assert!((rel.transform_point(&p) - q).norm() < 1e-9 * d);
                checked += 1;
            }
        }
        assert!(checked > f0.mask.len() / 2, "only {checked} valid pixels");
    }

    #[test]
    fn honest_anomalies_inflate_variance() {
        let cfg = small_scene();
        let seq = generate_with_truth(&cfg).unwrap();
        let f = &seq.frames[0];
        let mut cfg_flat = cfg.clone();
        cfg_flat.anomaly_regions.clear();
        let flat = generate_with_truth(&cfg_flat).unwrap();
        let g = &flat.frames[0];
        for (x, y) in [(15, 12), (29, 19)] {
            let inflated = f.flow_var.get(x, y, 0);
            assert!((inflated - 16.0 * g.flow_var.get(x, y, 0)).abs() < 1e-12 * inflated);
            assert!(f.depth_var.get(x, y, 0) >= 16.0 * g.depth_var.get(x, y, 0) * (1.0 - 1e-12));
        }
        assert_eq!(f.flow_var.get(5, 5, 0), g.flow_var.get(5, 5, 0));

        let mut lying = cfg.clone();
        lying.noise.lie_in_anomalies = true;
        let l = generate_with_truth(&lying).unwrap();
        assert_eq!(l.frames[0].flow_var.get(15, 12, 0), g.flow_var.get(15, 12, 0));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_scene();
        let a = generate_sequence(&cfg).unwrap();
        let b = generate_sequence(&cfg).unwrap();
        assert_eq!(a, b);
    }
}
