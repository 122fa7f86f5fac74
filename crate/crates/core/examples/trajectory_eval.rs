//! Relative trajectory metrics on a TUM-format pair, with and without scale
//! alignment.
//!
//! ```bash
//! cargo run -p metric-vo --example trajectory_eval
//! ```

use std::path::Path;

use metric_vo::eval::evaluate;
use metric_vo::geometry::Vec3;
use metric_vo::{PoseSE3, Result, Trajectory};

pub fn run_example() -> Result<()> {
    let gt = Trajectory::new(
        (0..20)
            .map(|i| {
                let t = i as f64;
                (
                    0.1 * t,
                    PoseSE3::from_parts(Vec3::new(0.0, 0.02 * t, 0.0), Vec3::new(0.3 * t.sin(), 0.0, 0.5 * t)),
                )
            })
            .collect(),
    )?;
    // A half-scale estimate with a small rotation bias per frame, round-tripped
    // through the text format.
    let est = Trajectory::new(
        gt.poses
            .iter()
            .enumerate()
            .map(|(i, (t, p))| {
                let bias = PoseSE3::from_parts(Vec3::new(0.0, 0.0, 1e-3 * i as f64), Vec3::zeros());
                (*t, p.scaled(0.5) * bias)
            })
            .collect(),
    )?;
    let est = Trajectory::parse_tum(&est.to_tum_string(), Path::new("estimate"))?;

    let (raw, _) = evaluate(&gt, &est, false)?;
    let (aligned, per_frame) = evaluate(&gt, &est, true)?;
    println!("raw:     t_rel {:.4} m/frame, r_rel {:.4} deg/frame", raw.t_rel, raw.r_rel);
    println!(
        "aligned: t_rel {:.4} m/frame, r_rel {:.4} deg/frame, scale {:.4}",
        aligned.t_rel,
        aligned.r_rel,
        aligned.scale.unwrap_or(f64::NAN)
    );
    println!("worst step: {:.4} m", per_frame.iter().map(|e| e.0).fold(0.0, f64::max));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
