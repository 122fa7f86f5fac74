//! Backprojects pixels with matching and depth uncertainty and prints the
//! resulting 3D covariance ellipsoids.
//!
//! ```bash
//! cargo run -p metric-vo --example covariance_projection
//! ```

use metric_vo::uncertainty::{disparity_to_depth, project_covariance};
use metric_vo::{DisparityEstimate, PixelObservation, Result, StereoCamera};
use nalgebra::SymmetricEigen;

pub fn run_example() -> Result<()> {
    let cam = StereoCamera::new(320.0, 320.0, 320.0, 240.0, 0.25, 640, 480)?;

    // Depth from a disparity of 16 px with 5% relative error.
    let depth = disparity_to_depth(&cam, &DisparityEstimate { mu: 16.0, gamma: 0.05 })?;
    println!("depth {:.3} m, sigma {:.3} m", depth.mean, depth.variance.sqrt());

    for (u, v) in [(320.0, 240.0), (600.0, 240.0), (600.0, 40.0)] {
        let obs = PixelObservation::new(u, v, 1.0, 1.0, depth.mean, depth.variance)?;
        let lm = project_covariance(&cam, &obs)?;
        let eig = SymmetricEigen::new(lm.covariance);
        let (k, _) = eig.eigenvalues.argmax();
        let axis = eig.eigenvectors.column(k);
        let ray = lm.position.normalize();
        println!(
            "pixel ({u:>3}, {v:>3}) -> point [{:.2}, {:.2}, {:.2}], sigma axes [{:.4}, {:.4}, {:.4}] m, major axis vs ray {:.2} deg",
            lm.position.x,
            lm.position.y,
            lm.position.z,
            eig.eigenvalues[0].max(0.0).sqrt(),
            eig.eigenvalues[1].max(0.0).sqrt(),
            eig.eigenvalues[2].max(0.0).sqrt(),
            axis.dot(&ray).abs().min(1.0).acos().to_degrees(),
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
