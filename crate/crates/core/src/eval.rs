//! Relative trajectory metrics.
//!
//! For ground truth positions `p_t`, rotations `R_t` and estimates `p^_t`,
//! `R^_t`:
//!
//! ```text
//! t_rel = 1/N sum_t | p_{t+1} - p_t - R_t R^_t^T (p^_{t+1} - p^_t) |
//! r_rel = 180/pi * 1/N sum_t | log(R^_{t,t+1}^T R_{t,t+1}) |,   R_{t,t+1} = R_t^T R_{t+1}
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::rotation_angle;
use crate::trajectory::Trajectory;

/// Maximum timestamp difference for two poses to be associated.
pub const ASSOCIATION_TOLERANCE: f64 = 1e-6;

/// Pairs up poses by timestamp, strictly one to one. Every pose of both
/// trajectories must find a partner.
pub fn associate(gt: &Trajectory, est: &Trajectory) -> Result<Vec<(usize, usize)>> {
    let mut pairs = Vec::with_capacity(gt.len());
    let mut unmatched = Vec::new();
    let mut j = 0;
    for (i, (t, _)) in gt.poses.iter().enumerate() {
        while j < est.len() && est.poses[j].0 < t - ASSOCIATION_TOLERANCE {
            unmatched.push(est.poses[j].0);
            j += 1;
        }
        if j < est.len() && (est.poses[j].0 - t).abs() <= ASSOCIATION_TOLERANCE {
            pairs.push((i, j));
            j += 1;
        } else {
            unmatched.push(*t);
        }
    }
    unmatched.extend(est.poses[j..].iter().map(|(t, _)| *t));
    if !unmatched.is_empty() {
        return Err(Error::Association { unmatched });
    }
    Ok(pairs)
}

/// Per-step translation and rotation (degrees) errors, one entry per
/// consecutive pair of associated poses.
pub fn per_frame_errors(gt: &Trajectory, est: &Trajectory) -> Result<Vec<(f64, f64)>> {
    let pairs = associate(gt, est)?;
    if pairs.len() < 2 {
        return Err(Error::Domain("relative metrics need at least 2 poses".into()));
    }
    Ok(pairs
        .windows(2)
        .map(|w| {
            let (g0, g1) = (&gt.poses[w[0].0].1, &gt.poses[w[1].0].1);
            let (e0, e1) = (&est.poses[w[0].1].1, &est.poses[w[1].1].1);
            let dp = g1.translation - g0.translation;
            let dp_est = e1.translation - e0.translation;
            // |dp - R R^^T dp^| written in a form that is exactly 0 for identical inputs
            let t_err = (g0.rotation.transpose() * dp - e0.rotation.transpose() * dp_est).norm();
            let rel_gt = g0.rotation.transpose() * g1.rotation;
            let rel_est = e0.rotation.transpose() * e1.rotation;
            let r_err = rotation_angle(&(rel_est.transpose() * rel_gt)).to_degrees();
            (t_err, r_err)
        })
        .collect())
}

/// Mean relative translation error, meters per frame.
pub fn t_rel(gt: &Trajectory, est: &Trajectory) -> Result<f64> {
    let errs = per_frame_errors(gt, est)?;
    Ok(errs.iter().map(|e| e.0).sum::<f64>() / errs.len() as f64)
}

/// Mean relative rotation error, degrees per frame.
pub fn r_rel(gt: &Trajectory, est: &Trajectory) -> Result<f64> {
    let errs = per_frame_errors(gt, est)?;
    Ok(errs.iter().map(|e| e.1).sum::<f64>() / errs.len() as f64)
}

/// Multiplies the estimated positions by the least-squares scale
/// `s = sum <p, p^> / sum <p^, p^>`, positions taken relative to each
/// trajectory's first pose. Rotations are untouched.
pub fn scale_align(gt: &Trajectory, est: &Trajectory) -> Result<(Trajectory, f64)> {
    let pairs = associate(gt, est)?;
    if pairs.len() < 2 {
        return Err(Error::Domain("scale alignment needs at least 2 poses".into()));
    }
    let g0 = gt.poses[pairs[0].0].1.translation;
    let e0 = est.poses[pairs[0].1].1.translation;
    let (mut num, mut den) = (0.0, 0.0);
    for &(i, j) in &pairs {
        let p = gt.poses[i].1.translation - g0;
        let q = est.poses[j].1.translation - e0;
        num += p.dot(&q);
        den += q.dot(&q);
    }
    if !(den > 0.0) {
        return Err(Error::DegenerateScale);
    }
    let s = num / den;
    let aligned = Trajectory {
        poses: est.poses.iter().map(|(t, p)| (*t, p.scaled(s))).collect(),
    };
    Ok((aligned, s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub t_rel: f64,
    pub r_rel: f64,
    pub scale: Option<f64>,
}

pub fn evaluate(gt: &Trajectory, est: &Trajectory, align_scale: bool) -> Result<(Metrics, Vec<(f64, f64)>)> {
    let (est, scale) = if align_scale {
        let (aligned, s) = scale_align(gt, est)?;
        (aligned, Some(s))
    } else {
        (est.clone(), None)
    };
    let errs = per_frame_errors(gt, &est)?;
    let n = errs.len() as f64;
    let metrics = Metrics {
        t_rel: errs.iter().map(|e| e.0).sum::<f64>() / n,
        r_rel: errs.iter().map(|e| e.1).sum::<f64>() / n,
        scale,
    };
    Ok((metrics, errs))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Writes `metric,value` rows.
pub fn write_metrics_csv(path: &Path, metrics: &Metrics) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rows = vec![("t_rel", metrics.t_rel), ("r_rel", metrics.r_rel)];
    if let Some(s) = metrics.scale {
        rows.push(("scale", s));
    }
    w.write_record(["metric", "value"]).map_err(|e| csv_error(path, e))?;
    for (name, value) in rows {
        w.write_record([name.to_string(), value.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `frame_index,t_err,r_err` rows.
pub fn write_per_frame_csv(path: &Path, errors: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["frame_index", "t_err", "r_err"]).map_err(|e| csv_error(path, e))?;
    for (i, (t, r)) in errors.iter().enumerate() {
        w.write_record([i.to_string(), t.to_string(), r.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
