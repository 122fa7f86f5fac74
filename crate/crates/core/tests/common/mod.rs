//! Reference implementations and fixtures shared by the integration tests.
//! The oracles re-derive each quantity by the most direct route available
//! and share no code with the library beyond its data types.
#![allow(dead_code)]

use metric_vo::geometry::Vec3;
use metric_vo::optimizer::{residual, MatchedPair};
use metric_vo::selector::KeypointCandidate;
use metric_vo::sim::NoiseModel;
use metric_vo::{Frame, Landmark3D, PoseSE3, SceneConfig, SelectorConfig, Trajectory};
use nalgebra::{Isometry3, Matrix3, Matrix3x6, Rotation3, Translation3, UnitQuaternion, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SCENE_TOML: &str = include_str!("../../configs/scene.toml");
pub const ABLATION_SCENE_TOML: &str = include_str!("../../configs/ablation_scene.toml");

pub fn scene() -> SceneConfig {
    SceneConfig::from_toml_str(SCENE_TOML).unwrap()
}

pub fn ablation_scene() -> SceneConfig {
    SceneConfig::from_toml_str(ABLATION_SCENE_TOML).unwrap()
}

pub fn noiseless(mut cfg: SceneConfig) -> SceneConfig {
    cfg.noise = NoiseModel {
        sigma_flow: 0.0,
        gamma_disp: 0.0,
        heteroscedastic: false,
        lie_in_anomalies: false,
    };
    cfg.anomaly_regions.clear();
    cfg
}

pub fn selector_for(cfg: &SceneConfig) -> SelectorConfig {
    SelectorConfig {
        depth_range: cfg.depth_range,
        ..SelectorConfig::default()
    }
}

/// O(n^2) greedy suppression: visit candidates by (score, u, v) and keep one
/// unless an already kept candidate is within Chebyshev distance `< radius`.
pub fn brute_force_nms(candidates: &[KeypointCandidate], radius: u32) -> Vec<KeypointCandidate> {
    let radius = radius.max(1) as i64;
    let mut order = candidates.to_vec();
    order.sort_by(|a, b| a.score.partial_cmp(&b.score).unwrap().then(a.u.cmp(&b.u)).then(a.v.cmp(&b.v)));
    let mut kept: Vec<KeypointCandidate> = Vec::new();
    for c in order {
        let clash = kept.iter().any(|k| {
            let du = (k.u as i64 - c.u as i64).abs();
            let dv = (k.v as i64 - c.v as i64).abs();
            du.max(dv) < radius
        });
        if !clash {
            kept.push(c);
        }
    }
    kept
}

/// Median by full sort.
pub fn sorted_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn random_candidates(rng: &mut ChaCha8Rng, n: usize, extent: u32) -> Vec<KeypointCandidate> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let (u, v) = (rng.random_range(0..extent), rng.random_range(0..extent));
        if !seen.insert((u, v)) {
            continue;
        }
        // coarse scores so ties are common
        let score = rng.random_range(0..20) as f64 * 0.25;
        out.push(KeypointCandidate {
            u,
            v,
            score,
            flow_unc: rng.random_range(0.0..4.0),
            depth_unc: rng.random_range(0.0..1.0),
            depth: rng.random_range(0.5..30.0),
        });
    }
    out
}

fn isometry(p: &PoseSE3) -> Isometry3<f64> {
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(p.rotation));
    Isometry3::from_parts(Translation3::from(p.translation), rot)
}

/// Relative-motion errors from quaternion isometries: the translation error
/// is the difference of the relative translations expressed in each
/// trajectory's own frame at `t`, the rotation error the angle of the
/// relative-rotation discrepancy.
pub fn rpe_oracle(gt: &Trajectory, est: &Trajectory) -> (f64, f64) {
    let n = gt.len() - 1;
    let (mut t_sum, mut r_sum) = (0.0, 0.0);
    for i in 0..n {
        let g = isometry(&gt.poses[i].1).inverse() * isometry(&gt.poses[i + 1].1);
        let e = isometry(&est.poses[i].1).inverse() * isometry(&est.poses[i + 1].1);
        t_sum += (g.translation.vector - e.translation.vector).norm();
        r_sum += (e.rotation.inverse() * g.rotation).angle().to_degrees();
    }
    (t_sum / n as f64, r_sum / n as f64)
}

pub fn random_pose(rng: &mut ChaCha8Rng, max_angle: f64, max_translation: f64) -> PoseSE3 {
    let axis = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
    let angle = max_angle * rng.random::<f64>();
    let t = Vec3::from_fn(|_, _| max_translation * rng.random_range(-1.0..1.0));
    PoseSE3::from_parts(axis * angle, t)
}

pub fn random_spd(rng: &mut ChaCha8Rng, scale: f64) -> Matrix3<f64> {
    let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    (a * a.transpose() + Matrix3::identity() * 0.1) * scale
}

/// Noiseless matched pairs for `truth` with random SPD covariances.
pub fn exact_pairs(rng: &mut ChaCha8Rng, truth: &PoseSE3, n: usize) -> Vec<MatchedPair> {
    (0..n)
        .map(|_| {
            let curr = Vec3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(1.0..10.0),
            );
            MatchedPair {
                prev_world: Landmark3D::new(truth.transform_point(&curr), random_spd(rng, 0.01), Frame::World),
                curr_camera: Landmark3D::new(curr, random_spd(rng, 0.01), Frame::Camera),
            }
        })
        .collect()
}

/// Central finite-difference Jacobian of the residual with respect to the
/// right-perturbation twist.
pub fn fd_jacobian(pair: &MatchedPair, pose: &PoseSE3, h: f64) -> Matrix3x6<f64> {
    let mut j = Matrix3x6::zeros();
    for k in 0..6 {
        let mut d = Vector6::zeros();
        d[k] = h;
        let plus = residual(pair, &(*pose * PoseSE3::exp(&d)));
        let minus = residual(pair, &(*pose * PoseSE3::exp(&(-d))));
        j.set_column(k, &((plus - minus) / (2.0 * h)));
    }
    j
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
