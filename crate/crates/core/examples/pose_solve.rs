//! Solves a single two-frame pose problem with noisy, anisotropic landmark
//! covariances under every covariance mode.
//!
//! ```bash
//! cargo run -p metric-vo --example pose_solve
//! ```

use metric_vo::geometry::{transform_landmark, Vec3};
use metric_vo::uncertainty::project_covariance;
use metric_vo::{solve_pose, CovarianceMode, FramePairProblem, LMConfig, MatchedPair, PixelObservation, PoseSE3, Result, StereoCamera};
use nalgebra::Cholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn run_example() -> Result<()> {
    let cam = StereoCamera::new(200.0, 200.0, 160.0, 120.0, 0.2, 320, 240)?;
    let truth = PoseSE3::from_parts(Vec3::new(0.01, 0.05, -0.02), Vec3::new(0.1, -0.02, 0.4));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noisy = |lm: &metric_vo::Landmark3D, rng: &mut ChaCha8Rng| {
        let l = Cholesky::new(lm.covariance + nalgebra::Matrix3::identity() * 1e-12)
            .expect("PSD")
            .l();
        let n = Vec3::from_fn(|_, _| rng.sample(StandardNormal));
        lm.position + l * n
    };

    let mut pairs = Vec::new();
    for _ in 0..60 {
        let (u, v) = (rng.random_range(10.0..310.0), rng.random_range(10.0..230.0));
        let d: f64 = rng.random_range(1.0..15.0);
        let sd2 = (0.01 * d * d).powi(2);
        let curr = project_covariance(&cam, &PixelObservation::new(u, v, 0.25, 0.25, d, sd2)?)?;
        let prev_true = truth.transform_point(&curr.position);
        let (pu, pv, pd) = cam.project(&prev_true)?;
        let prev = project_covariance(&cam, &PixelObservation::new(pu, pv, 0.0, 0.0, pd, (0.01 * pd * pd).powi(2))?)?;
        let mut prev_world = transform_landmark(&PoseSE3::identity(), &prev)?;
        let mut curr_camera = curr;
        prev_world.position = noisy(&prev_world, &mut rng);
        curr_camera.position = noisy(&curr, &mut rng);
        pairs.push(MatchedPair { prev_world, curr_camera });
    }

    for mode in CovarianceMode::ALL {
        let problem = FramePairProblem::new(pairs.clone(), PoseSE3::identity(), mode);
        let sol = solve_pose(&problem, &LMConfig::default())?;
        let (angle, dist) = sol.pose.distance(&truth);
        println!(
            "{:<15} error {:.4} deg, {:.4} m after {} iterations (cost {:.1} -> {:.1})",
            mode.name(),
            angle.to_degrees(),
            dist,
            sol.iterations,
            sol.initial_cost,
            sol.final_cost
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
