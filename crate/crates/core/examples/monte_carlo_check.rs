//! Compares the closed-form depth and 3D covariance models with Monte Carlo
//! sampling of the generative noise model.
//!
//! ```bash
//! cargo run --release -p metric-vo --example monte_carlo_check
//! ```

use metric_vo::mc::{mc_depth_distribution, mc_projection_covariance, standard_observation_grid};
use metric_vo::{DisparityEstimate, Result, StereoCamera};

pub fn run_example() -> Result<()> {
    let cam = StereoCamera::new(320.0, 320.0, 320.0, 240.0, 0.25, 640, 480)?;

    println!("depth from disparity: error of the first-order sigma");
    for gamma in [0.01, 0.05, 0.1, 0.2] {
        let r = mc_depth_distribution(&cam, &DisparityEstimate { mu: 40.0, gamma }, 200_000, 1)?;
        println!(
            "  gamma {gamma:<5} sigma error {:>6.2}%",
            100.0 * r.sigma_rel_err.unwrap_or(f64::NAN)
        );
    }

    println!("3D covariance, a few grid points:");
    for (i, obs) in standard_observation_grid(&cam).iter().enumerate().step_by(7) {
        let r = mc_projection_covariance(&cam, obs, 200_000, i as u64)?;
        let cov = r.coverage.expect("full-rank covariance");
        println!(
            "  u={:<5} v={:<5} d={:<4} max|z| {:.2}  90% coverage full {:.3} diagonal {:.3}",
            obs.u,
            obs.v,
            obs.depth,
            r.max_abs_z(),
            cov.full,
            cov.diagonal
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
